//! Subcommand implementations. Each returns the files it wrote, relative
//! to the output directory, plus an optional summary for `run.json`.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use sinodn_core::denoise::blindspot::{load_model, save_model};
use sinodn_core::denoise::{
    bm3d_denoise, denoise_with_model, estimate_noise_sigma, gaussian_filter, train_blind_spot, BlindSpotConfig, Bm3dConfig,
    Variant,
};
use sinodn_core::harness::{
    export_report, plan_folds, run_experiment, summary_csv, ExperimentConfig, Method, ReportFormat,
};
use sinodn_core::metrics::autocorrelation_map;
use sinodn_core::phantom::{generate_dataset, ConfigurationSpec, NoiseModel, ScanGeometry, StructuredNoise};
use sinodn_core::reconstruct::{reconstruct, ReconConfig};
use sinodn_core::{tensor, DatasetManifest, Exec, Sinogram, SinogramMeta};

use crate::args::{AutocorrArgs, DenoiseArgs, DenoiseMethod, EvalArgs, EvalMethod, GenerateArgs, ReconArgs, TrainArgs};
use crate::error::{CliError, CliResult};

pub struct Outcome {
    pub outputs: Vec<PathBuf>,
    pub summary: Value,
}

fn write_text(out_dir: &Path, name: &str, text: &str) -> CliResult<PathBuf> {
    let path = out_dir.join(name);
    fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    Ok(PathBuf::from(name))
}

/// Output file names `<stem>.<suffix>.stf`, rejecting inputs that would
/// collide.
fn output_names(inputs: &[PathBuf], suffix: &str) -> CliResult<Vec<String>> {
    let mut seen = BTreeSet::new();
    inputs
        .iter()
        .map(|p| {
            let stem = p
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| CliError::Usage(format!("cannot derive an output name from {}", p.display())))?;
            let name = format!("{stem}.{suffix}.stf");
            if !seen.insert(name.clone()) {
                return Err(CliError::Usage(format!("two inputs map to the output {name}")));
            }
            Ok(name)
        })
        .collect()
}

fn read_sinogram(path: &Path, geometry: Option<ScanGeometry>) -> CliResult<Sinogram> {
    let data = tensor::read_grid(path)?;
    let (a, d) = data.dim();
    let geometry = geometry.unwrap_or_else(|| ScanGeometry::covering(a, d));
    Ok(Sinogram::new(data, geometry, SinogramMeta::default())?)
}

pub fn generate(args: &GenerateArgs, seed: u64, out_dir: &Path, exec: Exec) -> CliResult<Outcome> {
    let specs = ConfigurationSpec::defaults(args.configs)?;
    let geometry = ScanGeometry::covering(args.angles, args.detectors);
    let mut noise = NoiseModel::new(args.flux, seed);
    if let (Some(sigma), Some(length)) = (args.structured_sigma, args.structured_length) {
        noise.structured = Some(StructuredNoise {
            diagonal_sigma: sigma,
            diagonal_correlation_length: length,
        });
    }
    let manifest = generate_dataset(&specs, &geometry, &noise, args.samples, out_dir, exec)?;
    let mut outputs = vec![PathBuf::from("manifest.json")];
    for c in &manifest.configurations {
        outputs.extend(c.clean_path.iter().cloned());
        outputs.extend(c.sample_paths.iter().cloned());
    }
    let summary = json!({
        "configurations": manifest.configurations.len(),
        "noisy_files": manifest.samples().len(),
    });
    Ok(Outcome { outputs, summary })
}

/// Up to `max` items spread evenly over `items`, keeping their order.
fn evenly_spaced<T: Copy>(items: &[T], max: Option<usize>) -> Vec<T> {
    match max {
        Some(m) if m < items.len() => (0..m).map(|i| items[i * items.len() / m]).collect(),
        _ => items.to_vec(),
    }
}

pub fn train(args: &TrainArgs, seed: u64, out_dir: &Path, exec: Exec) -> CliResult<Outcome> {
    let manifest = DatasetManifest::load(&args.manifest)?;
    let excluded = match &args.holdout {
        Some(label) => Some(
            manifest
                .index_of(label)
                .ok_or_else(|| CliError::Usage(format!("unknown holdout configuration `{label}`")))?,
        ),
        None => None,
    };
    let pool: Vec<_> = manifest
        .samples()
        .into_iter()
        .filter(|s| Some(s.configuration) != excluded)
        .collect();
    let chosen = evenly_spaced(&pool, args.max_sinograms);
    log::info!("training on {} sinograms", chosen.len());
    let dataset = chosen
        .iter()
        .map(|&s| manifest.load_sample(s))
        .collect::<sinodn_core::Result<Vec<_>>>()?;

    let mut config = args.blind_spot.config(args.variant.into(), seed);
    config.exec = exec;
    let (model, log) = train_blind_spot(&dataset, &config)?;

    let model_path = out_dir.join(&args.model_name);
    save_model(&model, &model_path)?;
    let log_name = write_text(out_dir, "training_log.csv", &log.to_csv())?;
    let summary = json!({
        "variant": config.variant,
        "training_sinograms": dataset.len(),
        "best_epoch": log.best_epoch,
        "epochs_logged": log.epochs.len().saturating_sub(1),
    });
    Ok(Outcome {
        outputs: vec![PathBuf::from(&args.model_name), log_name],
        summary,
    })
}

pub fn denoise(args: &DenoiseArgs, out_dir: &Path, exec: Exec) -> CliResult<Outcome> {
    let method = match args.method {
        DenoiseMethod::Gaussian => "gaussian",
        DenoiseMethod::Bm3d => "bm3d",
        DenoiseMethod::Model => "model",
    };
    let misplaced = |flag: &str| CliError::Usage(format!("--{flag} does not apply to --method {method}"));
    match args.method {
        DenoiseMethod::Gaussian => {
            if args.model.is_some() {
                return Err(misplaced("model"));
            }
            if args.bm3d_sigma.is_some() || args.search_window.is_some() {
                return Err(misplaced("bm3d-sigma/search-window"));
            }
        }
        DenoiseMethod::Bm3d => {
            if args.model.is_some() {
                return Err(misplaced("model"));
            }
            if args.sigma.is_some() {
                return Err(misplaced("sigma"));
            }
        }
        DenoiseMethod::Model => {
            if args.sigma.is_some() || args.bm3d_sigma.is_some() || args.search_window.is_some() {
                return Err(misplaced("sigma/bm3d-sigma/search-window"));
            }
            if args.model.is_none() {
                return Err(CliError::Usage("--method model requires --model".into()));
            }
        }
    }
    let names = output_names(&args.inputs, "denoised")?;
    let model = args.model.as_deref().map(load_model).transpose()?.map(|mut m| {
        m.config.exec = exec;
        m
    });
    let mut sigmas = Vec::new();
    for (input, name) in args.inputs.iter().zip(&names) {
        let grid = tensor::read_grid(input)?;
        let out = match args.method {
            DenoiseMethod::Gaussian => gaussian_filter(&grid, args.sigma.unwrap_or(1.0))?,
            DenoiseMethod::Bm3d => {
                let sigma = args.bm3d_sigma.unwrap_or_else(|| estimate_noise_sigma(&grid));
                sigmas.push(sigma);
                let cfg = Bm3dConfig {
                    search_window: args.search_window.unwrap_or(Bm3dConfig::with_sigma(sigma).search_window),
                    exec,
                    ..Bm3dConfig::with_sigma(sigma)
                };
                bm3d_denoise(&grid, &cfg)?
            }
            DenoiseMethod::Model => {
                let model = model.as_ref().expect("checked above");
                denoise_with_model(model, &read_sinogram(input, None)?)?.data
            }
        };
        tensor::write_grid(&out_dir.join(name), &out)?;
    }
    let summary = if sigmas.is_empty() { Value::Null } else { json!({ "bm3d_sigma": sigmas }) };
    Ok(Outcome {
        outputs: names.into_iter().map(PathBuf::from).collect(),
        summary,
    })
}

pub fn recon(args: &ReconArgs, out_dir: &Path, exec: Exec) -> CliResult<Outcome> {
    let geometry = args
        .manifest
        .as_deref()
        .map(DatasetManifest::load)
        .transpose()?
        .map(|m| m.geometry);
    let config = ReconConfig {
        image_size: args.image_size,
        filter: args.filter.into(),
        exec,
        ..ReconConfig::default()
    };
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let names = output_names(&args.inputs, "recon")?;
    for (input, name) in args.inputs.iter().zip(&names) {
        let image = reconstruct(&read_sinogram(input, geometry)?, &config)?;
        tensor::write_grid(&out_dir.join(name), &image.data)?;
    }
    Ok(Outcome {
        outputs: names.into_iter().map(PathBuf::from).collect(),
        summary: Value::Null,
    })
}

pub fn eval(args: &EvalArgs, seed: u64, out_dir: &Path, exec: Exec) -> CliResult<Outcome> {
    let manifest = DatasetManifest::load(&args.manifest)?;
    let plan = plan_folds(&manifest, args.k, args.strategy.into(), args.holdout.as_deref(), seed)?;
    let blind_spot = |variant: Variant| Method::BlindSpot {
        config: BlindSpotConfig {
            exec,
            ..args.blind_spot.config(variant, seed)
        },
        max_training_sinograms: args.max_training_sinograms,
    };
    let methods = args
        .methods
        .iter()
        .map(|m| match m {
            EvalMethod::Identity => Method::Identity,
            EvalMethod::Oracle => Method::Oracle,
            EvalMethod::Gaussian => Method::Gaussian {
                sigma: args.gaussian_sigma,
            },
            EvalMethod::Bm3d => Method::Bm3d {
                config: Bm3dConfig {
                    search_window: args.bm3d_search_window,
                    exec,
                    ..Bm3dConfig::with_sigma(args.bm3d_sigma.unwrap_or(1.0))
                },
                auto_sigma: args.bm3d_sigma.is_none(),
            },
            EvalMethod::N2v => blind_spot(Variant::N2v),
            EvalMethod::N2v2 => blind_spot(Variant::N2v2),
        })
        .collect();
    let config = ExperimentConfig {
        methods,
        recon: ReconConfig {
            image_size: args.image_size,
            exec,
            ..ReconConfig::default()
        },
        seed,
        exec,
    };
    let report = run_experiment(&manifest, &plan, &config)?;
    export_report(&report, ReportFormat::Csv, &out_dir.join("report.csv"))?;
    export_report(&report, ReportFormat::Json, &out_dir.join("report.json"))?;
    let summary_name = write_text(out_dir, "summary.csv", &summary_csv(&report))?;
    let failed: Vec<String> = report
        .cells
        .iter()
        .filter(|c| c.status != sinodn_core::harness::CellStatus::Ok)
        .map(|c| format!("{}/{}/{}", c.method, c.fold, c.space.as_str()))
        .collect();
    for f in &failed {
        log::warn!("cell {f} did not complete");
    }
    let flagged: Vec<String> = report
        .cells
        .iter()
        .filter(|c| c.over_smoothing)
        .map(|c| format!("{}/{}/{}", c.method, c.fold, c.space.as_str()))
        .collect();
    Ok(Outcome {
        outputs: vec![PathBuf::from("report.csv"), PathBuf::from("report.json"), summary_name],
        summary: json!({ "cells": report.cells.len(), "failed_cells": failed, "over_smoothing": flagged }),
    })
}

pub fn autocorr(args: &AutocorrArgs, out_dir: &Path) -> CliResult<Outcome> {
    let mut grid = tensor::read_grid(&args.input)?;
    if let Some(other) = &args.subtract {
        let other = tensor::read_grid(other)?;
        if other.dim() != grid.dim() {
            return Err(CliError::Core(sinodn_core::Error::Shape(format!(
                "cannot subtract a {:?} grid from a {:?} grid",
                other.dim(),
                grid.dim()
            ))));
        }
        grid -= &other;
    }
    let (rows, cols) = grid.dim();
    if 2 * args.max_lag >= rows.min(cols) {
        return Err(CliError::Usage(format!(
            "--max-lag {} must be below half the smaller grid dimension ({rows}×{cols})",
            args.max_lag
        )));
    }
    let map = autocorrelation_map(&grid, args.max_lag)?;
    tensor::write_grid(&out_dir.join("autocorr.stf"), &map.values)?;
    let l = map.max_lag as isize;
    let mut csv = String::from("d_angle,d_detector,value\n");
    for da in -l..=l {
        for dd in -l..=l {
            let _ = writeln!(csv, "{da},{dd},{}", map.at(da, dd));
        }
    }
    let csv_name = write_text(out_dir, "autocorr.csv", &csv)?;
    let summary = if map.max_lag >= 1 {
        json!({ "diagonal_ratio": map.diagonal_ratio(1..=map.max_lag) })
    } else {
        Value::Null
    };
    Ok(Outcome {
        outputs: vec![PathBuf::from("autocorr.stf"), csv_name],
        summary,
    })
}
