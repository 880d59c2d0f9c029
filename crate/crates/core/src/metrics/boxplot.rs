use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::serde_float;

/// Tukey boxplot statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxplotSummary {
    pub n: usize,
    #[serde(with = "serde_float")]
    pub median: f64,
    #[serde(with = "serde_float")]
    pub q1: f64,
    #[serde(with = "serde_float")]
    pub q3: f64,
    #[serde(with = "serde_float")]
    pub whisker_low: f64,
    #[serde(with = "serde_float")]
    pub whisker_high: f64,
    #[serde(with = "serde_float::vec")]
    pub outliers: Vec<f64>,
}

/// Linear-interpolation quantile of sorted data (position `(n − 1)·p`).
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if frac == 0.0 || lo + 1 >= sorted.len() {
        return sorted[lo];
    }
    let (a, b) = (sorted[lo], sorted[lo + 1]);
    if a == b {
        a
    } else {
        a + frac * (b - a)
    }
}

/// Quartiles by linear interpolation; whiskers at the most extreme values
/// within 1.5·IQR of the quartiles; everything beyond is an outlier.
pub fn boxplot_summary(values: &[f64]) -> Result<BoxplotSummary> {
    if values.is_empty() {
        return Err(Error::config("boxplot of an empty sample"));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::Numerical("boxplot input contains NaN".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile(&sorted, 0.25);
    let median = quantile(&sorted, 0.5);
    let q3 = quantile(&sorted, 0.75);
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = if iqr.is_finite() {
        (q1 - 1.5 * iqr, q3 + 1.5 * iqr)
    } else {
        (f64::NEG_INFINITY, f64::INFINITY)
    };
    let inside = |v: &f64| *v >= lo_fence && *v <= hi_fence;
    let whisker_low = sorted.iter().copied().find(inside).unwrap_or(q1);
    let whisker_high = sorted.iter().rev().copied().find(inside).unwrap_or(q3);
    let outliers = sorted.iter().copied().filter(|v| !inside(v)).collect();
    Ok(BoxplotSummary {
        n: sorted.len(),
        median,
        q1,
        q3,
        whisker_low,
        whisker_high,
        outliers,
    })
}
