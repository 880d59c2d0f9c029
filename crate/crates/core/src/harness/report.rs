//! Report export.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::experiment::{CellStatus, EvalReport};
use crate::error::{Error, Result};

/// Infinite PSNR values are written as ±this cap with the `inf` flag set.
pub const INF_CAP_DB: f64 = 99.0;

pub const CSV_HEADER: &str = "method,fold,space,sample_id,psnr_noisy,psnr_denoised,delta_psnr,inf";

pub const SUMMARY_HEADER: &str =
    "method,fold,space,status,n,median,q1,q3,whisker_low,whisker_high,outliers,worst_sample,worst_mean_abs,over_smoothing";

fn capped(v: f64, inf: &mut bool) -> f64 {
    if v.is_infinite() {
        *inf = true;
        v.signum() * INF_CAP_DB
    } else {
        v
    }
}

fn quote(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

/// One row per (cell, sample).
pub fn report_csv(report: &EvalReport) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for cell in &report.cells {
        for r in &cell.samples {
            let mut inf = false;
            let a = capped(r.psnr_noisy, &mut inf);
            let b = capped(r.psnr_denoised, &mut inf);
            let d = capped(r.delta_psnr, &mut inf);
            let _ = writeln!(
                s,
                "{},{},{},{},{a},{b},{d},{}",
                quote(&cell.method),
                cell.fold,
                cell.space.as_str(),
                quote(&r.sample_id),
                u8::from(inf)
            );
        }
    }
    s
}

/// One row per cell with boxplot statistics and the over-smoothing flag.
pub fn summary_csv(report: &EvalReport) -> String {
    let mut s = String::from(SUMMARY_HEADER);
    s.push('\n');
    for cell in &report.cells {
        let status = match &cell.status {
            CellStatus::Ok => "ok",
            CellStatus::Failed { .. } => "failed",
            CellStatus::Skipped { .. } => "skipped",
        };
        let mut inf = false;
        let stats = match &cell.summary {
            Some(b) => format!(
                "{},{},{},{},{},{},{}",
                b.n,
                capped(b.median, &mut inf),
                capped(b.q1, &mut inf),
                capped(b.q3, &mut inf),
                capped(b.whisker_low, &mut inf),
                capped(b.whisker_high, &mut inf),
                b.outliers.len()
            ),
            None => ",,,,,,".into(),
        };
        let (worst_id, worst_abs) = match &cell.worst {
            Some(w) => (quote(&w.sample_id), w.noise.mean_abs.to_string()),
            None => (String::new(), String::new()),
        };
        let _ = writeln!(
            s,
            "{},{},{},{status},{stats},{worst_id},{worst_abs},{}",
            quote(&cell.method),
            cell.fold,
            cell.space.as_str(),
            u8::from(cell.over_smoothing)
        );
    }
    s
}

pub fn report_json(report: &EvalReport) -> Result<String> {
    serde_json::to_string_pretty(report).map_err(|e| Error::Format(e.to_string()))
}

pub fn parse_report_json(text: &str) -> Result<EvalReport> {
    serde_json::from_str(text).map_err(|e| Error::Format(format!("report: {e}")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

/// Writes `report` to `path` in the given format.
pub fn export_report(report: &EvalReport, format: ReportFormat, path: &Path) -> Result<()> {
    let text = match format {
        ReportFormat::Csv => report_csv(report),
        ReportFormat::Json => report_json(report)? + "\n",
    };
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_report(path: &Path) -> Result<EvalReport> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_report_json(&text)
}
