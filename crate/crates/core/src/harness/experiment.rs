//! Cross-validated method comparison.

use std::collections::{BTreeMap, BTreeSet};

use ndarray::Array2;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::folds::{FoldPlan, FoldStrategy};
use super::reference::{relative_max_error, LINEARITY_TOLERANCE};
use crate::denoise::{
    bm3d_denoise, estimate_noise_sigma, gaussian_filter, train_blind_spot, BlindSpotConfig, BlindSpotModel,
    Bm3dConfig,
};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::manifest::{DatasetManifest, SampleRef};
use crate::metrics::{boxplot_summary, delta_psnr_detail, noise_statistics, quantile, BoxplotSummary, NoiseStats};
use crate::reconstruct::{reconstruct, ReconConfig};
use crate::rng::derive_seed;
use crate::serde_float;
use crate::sinogram::Sinogram;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// A worst-sample noise map whose mean |value| exceeds this multiple of the
/// median over folds marks the fold as over-smoothing.
pub const OVER_SMOOTHING_FACTOR: f64 = 2.0;

/// Samples reconstructed together while building image references.
const REFERENCE_CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Method {
    /// Output equals the input; every ΔPSNR is exactly zero.
    Identity,
    /// Output equals the reference; every ΔPSNR is +∞.
    Oracle,
    Gaussian { sigma: f64 },
    /// With `auto_sigma` the noise level is estimated per sample and
    /// `config.sigma` is ignored.
    Bm3d { config: Bm3dConfig, auto_sigma: bool },
    /// Trained per fold on the other folds' sinograms, optionally on a
    /// seeded subset of at most `max_training_sinograms`.
    BlindSpot {
        config: BlindSpotConfig,
        max_training_sinograms: Option<usize>,
    },
}

impl Method {
    /// Name used in reports.
    pub fn name(&self) -> String {
        match self {
            Method::Identity => "identity".into(),
            Method::Oracle => "oracle".into(),
            Method::Gaussian { .. } => "gaussian".into(),
            Method::Bm3d { .. } => "bm3d".into(),
            Method::BlindSpot { config, .. } => config.variant.to_string(),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Method::Gaussian { sigma } if !(*sigma >= 0.0 && sigma.is_finite()) => {
                Err(Error::config("gaussian sigma must be finite and ≥ 0"))
            }
            Method::Bm3d { config, auto_sigma } => {
                if *auto_sigma {
                    Bm3dConfig { sigma: 1.0, ..*config }.validate()
                } else {
                    config.validate()
                }
            }
            Method::BlindSpot { config, .. } => config.validate(),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Space {
    Sinogram,
    Reconstruction,
}

impl Space {
    pub const ALL: [Space; 2] = [Space::Sinogram, Space::Reconstruction];

    pub fn as_str(self) -> &'static str {
        match self {
            Space::Sinogram => "sinogram",
            Space::Reconstruction => "reconstruction",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub methods: Vec<Method>,
    pub recon: ReconConfig,
    pub seed: u64,
    #[serde(skip)]
    pub exec: Exec,
}

/// Per-sample result in one space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleResult {
    pub sample_id: String,
    #[serde(with = "serde_float")]
    pub psnr_noisy: f64,
    #[serde(with = "serde_float")]
    pub psnr_denoised: f64,
    #[serde(with = "serde_float")]
    pub delta_psnr: f64,
    /// Statistics of `noisy − denoised` in this space.
    pub noise: NoiseStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    Failed { message: String },
    Skipped { reason: String },
}

/// Noise statistics of a flagged sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlaggedSample {
    pub sample_id: String,
    #[serde(with = "serde_float")]
    pub delta_psnr: f64,
    pub noise: NoiseStats,
}

/// Results of one method on one fold in one space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub method: String,
    pub fold: usize,
    pub space: Space,
    pub status: CellStatus,
    pub samples: Vec<SampleResult>,
    pub summary: Option<BoxplotSummary>,
    /// Highest ΔPSNR sample.
    pub best: Option<FlaggedSample>,
    /// Lowest ΔPSNR sample.
    pub worst: Option<FlaggedSample>,
    pub over_smoothing: bool,
}

/// What a trained method saw for one fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub method: String,
    pub sinograms: usize,
    /// Folds the training sinograms came from (never the evaluated fold).
    pub source_folds: Vec<usize>,
    pub configurations: Vec<String>,
    pub best_epoch: Option<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSummary {
    pub fold: usize,
    pub configurations: Vec<String>,
    pub samples: usize,
    /// Worst relative deviation between the mean of reconstructions and the
    /// reconstruction of the mean sinogram over the fold's configurations.
    pub linearity_error: f64,
    pub training: Vec<TrainingRecord>,
}

/// Configuration snapshot sufficient to rerun the experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSnapshot {
    pub methods: Vec<Method>,
    pub recon: ReconConfig,
    pub seed: u64,
    pub k: usize,
    pub strategy: FoldStrategy,
    pub fold_seed: u64,
    pub holdout_label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub run: RunSnapshot,
    pub folds: Vec<FoldSummary>,
    /// Ordered by method, fold, space.
    pub cells: Vec<Cell>,
}

impl EvalReport {
    pub fn cell(&self, method: &str, fold: usize, space: Space) -> Option<&Cell> {
        self.cells
            .iter()
            .find(|c| c.method == method && c.fold == fold && c.space == space)
    }

    pub fn method_names(&self) -> Vec<String> {
        self.run.methods.iter().map(Method::name).collect()
    }
}

struct Trained {
    record: TrainingRecord,
    model: std::result::Result<BlindSpotModel, String>,
}

/// Per-sample outcome of one method in both spaces.
type SampleOutcome = std::result::Result<[SampleResult; 2], String>;

/// Group of samples sharing a fold and a configuration; references are
/// built per group.
struct GroupRefs {
    sinogram: Array2<f64>,
    image: Array2<f64>,
    linearity_error: f64,
}

fn group_references(
    manifest: &DatasetManifest,
    samples: &[SampleRef],
    recon: &ReconConfig,
    exec: Exec,
) -> Result<GroupRefs> {
    let (a, d) = (manifest.geometry.n_angles, manifest.geometry.n_detectors);
    let mut sino_sum = Array2::<f64>::zeros((a, d));
    let mut img_sum: Option<Array2<f64>> = None;
    let inner = ReconConfig {
        exec: Exec::Sequential,
        ..*recon
    };
    for chunk in samples.chunks(REFERENCE_CHUNK) {
        let parts = exec.map_slice(chunk, |&s| -> Result<(Sinogram, Array2<f64>)> {
            let sino = manifest.load_sample(s)?;
            let img = reconstruct(&sino, &inner)?;
            Ok((sino, img.data))
        });
        for part in parts {
            let (sino, img) = part?;
            sino_sum += &sino.data;
            match &mut img_sum {
                Some(acc) => *acc += &img,
                None => img_sum = Some(img),
            }
        }
    }
    let n = samples.len() as f64;
    let sinogram = sino_sum / n;
    let image = img_sum.ok_or_else(|| Error::config("empty sample group"))? / n;
    let template = manifest.load_sample(samples[0])?;
    let direct = reconstruct(&template.with_data(sinogram.clone())?, recon)?;
    let linearity_error = relative_max_error(&image, &direct.data);
    if linearity_error > LINEARITY_TOLERANCE {
        log::warn!("image reference linearity deviation {linearity_error:.3e}");
    }
    Ok(GroupRefs {
        sinogram,
        image,
        linearity_error,
    })
}

fn train_for_fold(
    manifest: &DatasetManifest,
    folds: &[Vec<SampleRef>],
    fold: usize,
    config: &BlindSpotConfig,
    max_sinograms: Option<usize>,
    seed: u64,
    name: String,
) -> Result<Trained> {
    let pool: Vec<(usize, SampleRef)> = folds
        .iter()
        .enumerate()
        .filter(|(f, _)| *f != fold)
        .flat_map(|(f, s)| s.iter().map(move |&r| (f, r)))
        .collect();
    let chosen: Vec<(usize, SampleRef)> = match max_sinograms {
        Some(n) if n < pool.len() => {
            let mut idx = sample(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, &[fold as u64, 7])), pool.len(), n).into_vec();
            idx.sort_unstable();
            idx.into_iter().map(|i| pool[i]).collect()
        }
        _ => pool,
    };
    if chosen.iter().any(|(f, _)| *f == fold) {
        return Err(Error::config("training set overlaps the evaluated fold"));
    }
    let source_folds: BTreeSet<usize> = chosen.iter().map(|(f, _)| *f).collect();
    let configurations: BTreeSet<String> = chosen
        .iter()
        .map(|(_, s)| manifest.configurations[s.configuration].label.clone())
        .collect();
    let mut record = TrainingRecord {
        method: name,
        sinograms: chosen.len(),
        source_folds: source_folds.into_iter().collect(),
        configurations: configurations.into_iter().collect(),
        best_epoch: None,
        error: None,
    };
    if chosen.len() < 2 {
        let msg = format!("only {} training sinograms outside fold {fold}", chosen.len());
        record.error = Some(msg.clone());
        return Ok(Trained {
            record,
            model: Err(msg),
        });
    }
    let data: Vec<Sinogram> = chosen
        .iter()
        .map(|(_, s)| manifest.load_sample(*s))
        .collect::<Result<_>>()?;
    let cfg = BlindSpotConfig {
        seed: derive_seed(config.seed, &[fold as u64]),
        ..*config
    };
    let model = match train_blind_spot(&data, &cfg) {
        Ok((model, log)) => {
            record.best_epoch = Some(log.best_epoch);
            Ok(model)
        }
        Err(e) => {
            record.error = Some(e.to_string());
            Err(e.to_string())
        }
    };
    Ok(Trained { record, model })
}

fn score(
    sample_id: &str,
    noisy: &Array2<f64>,
    denoised: &Array2<f64>,
    reference: &Array2<f64>,
) -> std::result::Result<SampleResult, String> {
    if denoised.iter().any(|v| !v.is_finite()) {
        return Err(format!("{sample_id}: denoised output is not finite"));
    }
    let d = delta_psnr_detail(noisy, denoised, reference, None).map_err(|e| e.to_string())?;
    let noise = noise_statistics(noisy, denoised).map_err(|e| e.to_string())?;
    Ok(SampleResult {
        sample_id: sample_id.to_owned(),
        psnr_noisy: d.psnr_noisy,
        psnr_denoised: d.psnr_denoised,
        delta_psnr: d.delta,
        noise,
    })
}

#[allow(clippy::too_many_arguments)]
fn evaluate_sample(
    manifest: &DatasetManifest,
    s: SampleRef,
    refs: &GroupRefs,
    methods: &[Method],
    models: &[Option<Trained>],
    recon: &ReconConfig,
) -> Result<Vec<SampleOutcome>> {
    let sino = manifest.load_sample(s)?;
    let id = manifest.sample_id(s);
    let noisy_img = reconstruct(&sino, recon)?.data;
    let mut out = Vec::with_capacity(methods.len());
    for (m, method) in methods.iter().enumerate() {
        let denoised: std::result::Result<Array2<f64>, String> = match method {
            Method::Identity => Ok(sino.data.clone()),
            Method::Oracle => Ok(refs.sinogram.clone()),
            Method::Gaussian { sigma } => gaussian_filter(&sino.data, *sigma).map_err(|e| e.to_string()),
            Method::Bm3d { config, auto_sigma } => {
                let cfg = if *auto_sigma {
                    let sigma = estimate_noise_sigma(&sino.data);
                    Bm3dConfig {
                        sigma: if sigma > 0.0 { sigma } else { f64::MIN_POSITIVE },
                        ..*config
                    }
                } else {
                    *config
                };
                bm3d_denoise(&sino.data, &cfg).map_err(|e| e.to_string())
            }
            Method::BlindSpot { .. } => match models[m].as_ref().map(|t| &t.model) {
                Some(Ok(model)) => model.denoise_grid(&sino.data).map_err(|e| e.to_string()),
                Some(Err(msg)) => Err(format!("training failed: {msg}")),
                None => Err("no trained model".into()),
            },
        };
        let outcome = denoised.and_then(|den| {
            let sino_res = score(&id, &sino.data, &den, &refs.sinogram)?;
            let den_img = match method {
                Method::Identity => noisy_img.clone(),
                Method::Oracle => refs.image.clone(),
                _ => {
                    let den_sino = sino.with_data(den).map_err(|e| e.to_string())?;
                    reconstruct(&den_sino, recon).map_err(|e| e.to_string())?.data
                }
            };
            let img_res = score(&id, &noisy_img, &den_img, &refs.image)?;
            Ok([sino_res, img_res])
        });
        out.push(outcome);
    }
    Ok(out)
}

fn flagged(r: &SampleResult) -> FlaggedSample {
    FlaggedSample {
        sample_id: r.sample_id.clone(),
        delta_psnr: r.delta_psnr,
        noise: r.noise,
    }
}

fn finish_cell(method: String, fold: usize, space: Space, results: std::result::Result<Vec<SampleResult>, String>) -> Cell {
    let mut cell = Cell {
        method,
        fold,
        space,
        status: CellStatus::Ok,
        samples: Vec::new(),
        summary: None,
        best: None,
        worst: None,
        over_smoothing: false,
    };
    match results {
        Err(message) => cell.status = CellStatus::Failed { message },
        Ok(samples) if samples.is_empty() => {
            cell.status = CellStatus::Skipped {
                reason: "fold has no samples".into(),
            }
        }
        Ok(samples) => {
            let deltas: Vec<f64> = samples.iter().map(|r| r.delta_psnr).collect();
            match boxplot_summary(&deltas) {
                Ok(s) => cell.summary = Some(s),
                Err(e) => {
                    cell.status = CellStatus::Failed {
                        message: e.to_string(),
                    }
                }
            }
            // first occurrence wins ties so the choice is order-stable
            let mut best = &samples[0];
            let mut worst = &samples[0];
            for r in &samples[1..] {
                if r.delta_psnr > best.delta_psnr {
                    best = r;
                }
                if r.delta_psnr < worst.delta_psnr {
                    worst = r;
                }
            }
            cell.best = Some(flagged(best));
            cell.worst = Some(flagged(worst));
            cell.samples = samples;
        }
    }
    cell
}

/// Marks folds whose worst-sample noise map is far above the median over
/// folds, per method and space.
pub fn flag_over_smoothing(cells: &mut [Cell]) {
    let mut groups: BTreeMap<(String, Space), Vec<usize>> = BTreeMap::new();
    for (i, c) in cells.iter().enumerate() {
        if c.worst.is_some() {
            groups.entry((c.method.clone(), c.space)).or_default().push(i);
        }
    }
    for idx in groups.values() {
        let mut values: Vec<f64> = idx
            .iter()
            .map(|&i| cells[i].worst.as_ref().expect("filtered").noise.mean_abs)
            .collect();
        values.sort_by(f64::total_cmp);
        let median = quantile(&values, 0.5);
        for &i in idx {
            let v = cells[i].worst.as_ref().expect("filtered").noise.mean_abs;
            cells[i].over_smoothing = v > OVER_SMOOTHING_FACTOR * median;
        }
    }
}

/// Runs every method on every fold and scores it against fold-local
/// references in sinogram and reconstruction space.
///
/// References are built per (fold, configuration) group: the mean of the
/// group's noisy sinograms and the mean of their reconstructions. Method
/// failures are recorded in their cells; only unreadable data aborts.
pub fn run_experiment(manifest: &DatasetManifest, plan: &FoldPlan, config: &ExperimentConfig) -> Result<EvalReport> {
    config.recon.validate()?;
    let mut names = BTreeSet::new();
    for m in &config.methods {
        m.validate()?;
        if !names.insert(m.name()) {
            return Err(Error::config(format!("method `{}` listed twice", m.name())));
        }
    }
    let exec = config.exec;
    let recon = ReconConfig {
        exec: Exec::Sequential,
        ..config.recon
    };
    let folds = plan.folds();
    let n_methods = config.methods.len();
    // per method, per fold, per space
    let mut results: Vec<Vec<[std::result::Result<Vec<SampleResult>, String>; 2]>> = (0..n_methods)
        .map(|_| (0..folds.len()).map(|_| [Ok(Vec::new()), Ok(Vec::new())]).collect())
        .collect();
    let mut fold_summaries = Vec::with_capacity(folds.len());

    for (f, fold_samples) in folds.iter().enumerate() {
        log::info!("fold {f}: {} samples", fold_samples.len());
        let mut models: Vec<Option<Trained>> = Vec::with_capacity(n_methods);
        for method in &config.methods {
            models.push(match method {
                Method::BlindSpot {
                    config: bs,
                    max_training_sinograms,
                } => {
                    let bs = BlindSpotConfig { exec, ..*bs };
                    Some(train_for_fold(
                        manifest,
                        &folds,
                        f,
                        &bs,
                        *max_training_sinograms,
                        config.seed,
                        method.name(),
                    )?)
                }
                _ => None,
            });
        }

        let mut groups: BTreeMap<usize, Vec<SampleRef>> = BTreeMap::new();
        for &s in fold_samples {
            groups.entry(s.configuration).or_default().push(s);
        }
        let mut linearity_error: f64 = 0.0;
        for samples in groups.values() {
            let refs = group_references(manifest, samples, &recon, exec)?;
            linearity_error = linearity_error.max(refs.linearity_error);
            let per_sample = exec.map_slice(samples, |&s| {
                evaluate_sample(manifest, s, &refs, &config.methods, &models, &recon)
            });
            for outcomes in per_sample {
                for (m, outcome) in outcomes?.into_iter().enumerate() {
                    let slot = &mut results[m][f];
                    match outcome {
                        Ok([a, b]) => {
                            if let Ok(v) = &mut slot[0] {
                                v.push(a);
                            }
                            if let Ok(v) = &mut slot[1] {
                                v.push(b);
                            }
                        }
                        Err(msg) => {
                            for r in slot.iter_mut() {
                                if r.is_ok() {
                                    *r = Err(msg.clone());
                                }
                            }
                        }
                    }
                }
            }
        }
        fold_summaries.push(FoldSummary {
            fold: f,
            configurations: groups
                .keys()
                .map(|&c| manifest.configurations[c].label.clone())
                .collect(),
            samples: fold_samples.len(),
            linearity_error,
            training: models.into_iter().flatten().map(|t| t.record).collect(),
        });
    }

    let mut cells = Vec::with_capacity(n_methods * folds.len() * 2);
    for (m, method) in config.methods.iter().enumerate() {
        for (f, spaces) in std::mem::take(&mut results[m]).into_iter().enumerate() {
            for (space, res) in Space::ALL.into_iter().zip(spaces) {
                cells.push(finish_cell(method.name(), f, space, res));
            }
        }
    }
    flag_over_smoothing(&mut cells);

    Ok(EvalReport {
        schema_version: REPORT_SCHEMA_VERSION,
        run: RunSnapshot {
            methods: config.methods.clone(),
            recon: config.recon,
            seed: config.seed,
            k: plan.k,
            strategy: plan.strategy,
            fold_seed: plan.seed,
            holdout_label: plan.holdout_label.clone(),
        },
        folds: fold_summaries,
        cells,
    })
}
