//! `sinodn` command-line front end.

mod args;
mod commands;
mod error;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use serde::Serialize;
use serde_json::Value;

use sinodn_core::Exec;

use args::{Cli, Command};
use error::{CliError, CliResult};

/// Environment variable that overrides `--out-dir`.
const OUT_ENV: &str = "SINODN_OUT";

/// Snapshot written to `run.json` in the output directory.
#[derive(Serialize)]
struct RunRecord<'a> {
    tool: &'static str,
    version: &'static str,
    out_dir: &'a Path,
    cli: &'a Cli,
    status: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    exit_code: i32,
    outputs: &'a [PathBuf],
    summary: &'a Value,
}

fn write_record(record: &RunRecord<'_>) -> CliResult<()> {
    let path = record.out_dir.join("run.json");
    let text = serde_json::to_string_pretty(record).map_err(|e| CliError::Core(sinodn_core::Error::Format(e.to_string())))?;
    fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))
}

fn configure_threads(threads: Option<usize>) -> CliResult<Exec> {
    match threads {
        Some(0) => Err(CliError::Usage("--threads must be at least 1".into())),
        Some(1) => Ok(Exec::Sequential),
        Some(_n) => {
            #[cfg(feature = "parallel")]
            rayon::ThreadPoolBuilder::new()
                .num_threads(_n)
                .build_global()
                .map_err(|e| CliError::Usage(format!("cannot start {_n} threads: {e}")))?;
            Ok(Exec::default())
        }
        None => Ok(Exec::default()),
    }
}

fn dispatch(cli: &Cli, out_dir: &Path, exec: Exec) -> CliResult<commands::Outcome> {
    let seed = cli.global.seed;
    match &cli.command {
        Command::Generate(a) => commands::generate(a, seed, out_dir, exec),
        Command::Train(a) => commands::train(a, seed, out_dir, exec),
        Command::Denoise(a) => commands::denoise(a, out_dir, exec),
        Command::Recon(a) => commands::recon(a, out_dir, exec),
        Command::Eval(a) => commands::eval(a, seed, out_dir, exec),
        Command::Autocorr(a) => commands::autocorr(a, out_dir),
    }
}

fn run(cli: &Cli) -> CliResult<()> {
    let exec = configure_threads(cli.global.threads)?;
    let out_dir = std::env::var_os(OUT_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .unwrap_or_else(|| cli.global.out_dir.clone());
    fs::create_dir_all(&out_dir).map_err(|e| CliError::io(&out_dir, e))?;
    log::debug!("writing to {}", out_dir.display());

    let result = dispatch(cli, &out_dir, exec);
    let (status, error, exit_code, outputs, summary) = match &result {
        Ok(o) => ("ok", None, 0, o.outputs.as_slice(), &o.summary),
        Err(e) => ("failed", Some(e.to_string()), e.exit_code(), &[][..], &Value::Null),
    };
    write_record(&RunRecord {
        tool: "sinodn",
        version: env!("CARGO_PKG_VERSION"),
        out_dir: &out_dir,
        cli,
        status,
        error,
        exit_code,
        outputs,
        summary,
    })?;
    result.map(|o| log::info!("wrote {} files to {}", o.outputs.len() + 1, out_dir.display()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    env_logger::Builder::new()
        .parse_filters(&cli.global.log_level)
        .format_timestamp(None)
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
