//! Command-line arguments.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use sinodn_core::denoise::{BlindSpotConfig, Variant};
use sinodn_core::harness::FoldStrategy;
use sinodn_core::reconstruct::FilterKind;

/// Simulate, denoise, reconstruct and evaluate fan-beam CT sinograms.
#[derive(Debug, Parser, Serialize)]
#[command(name = "sinodn", version, propagate_version = true)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Serialize)]
pub struct GlobalArgs {
    /// Base seed for every random choice of the run.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Worker threads (defaults to the available cores; 1 runs sequentially).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Output directory; the SINODN_OUT environment variable takes precedence.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,

    /// Log verbosity.
    #[arg(
        long,
        global = true,
        default_value = "info",
        value_parser = ["off", "error", "warn", "info", "debug", "trace"]
    )]
    pub log_level: String,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Command {
    /// Simulate a dataset of clean and noisy sinograms with a manifest.
    Generate(GenerateArgs),
    /// Train a blind-spot denoiser on the noisy sinograms of a manifest.
    Train(TrainArgs),
    /// Denoise STF1 sinograms with a Gaussian filter, BM3D or a trained model.
    Denoise(DenoiseArgs),
    /// Reconstruct STF1 sinograms by filtered backprojection.
    Recon(ReconArgs),
    /// Cross-validated comparison of denoisers in sinogram and image space.
    Eval(EvalArgs),
    /// Normalized 2D autocorrelation map of a sinogram or residual.
    Autocorr(AutocorrArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct GenerateArgs {
    /// Projection angles per sinogram.
    #[arg(long, default_value_t = 1000)]
    pub angles: usize,
    /// Detector channels per projection.
    #[arg(long, default_value_t = 144)]
    pub detectors: usize,
    /// Number of (plane, position) configurations, 1 to 6.
    #[arg(long, default_value_t = 6)]
    pub configs: usize,
    /// Noisy samples per configuration.
    #[arg(long, default_value_t = 2000)]
    pub samples: usize,
    /// Expected photon count per unattenuated ray.
    #[arg(long, default_value_t = 1000.0)]
    pub flux: f64,
    /// Standard deviation of an added diagonal-correlated noise field.
    #[arg(long, requires = "structured_length")]
    pub structured_sigma: Option<f64>,
    /// Correlation length (diagonal steps) of the structured field.
    #[arg(long, requires = "structured_sigma")]
    pub structured_length: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum VariantArg {
    N2v,
    N2v2,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::N2v => Variant::N2v,
            VariantArg::N2v2 => Variant::N2v2,
        }
    }
}

/// Blind-spot training hyperparameters shared by `train` and `eval`.
#[derive(Debug, Args, Serialize)]
pub struct BlindSpotArgs {
    /// Training epochs.
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    /// Square patch side; a multiple of 2^depth.
    #[arg(long, default_value_t = 64)]
    pub patch: usize,
    /// Odd side of the window replacement values are drawn from.
    #[arg(long, default_value_t = 7)]
    pub roi: usize,
    /// Percentage of patch pixels masked per patch.
    #[arg(long, default_value_t = 0.5)]
    pub mask_pct: f64,
    /// Encoder/decoder depth.
    #[arg(long, default_value_t = 2)]
    pub depth: usize,
    /// Patches per optimizer step.
    #[arg(long, default_value_t = 64)]
    pub batch: usize,
    /// Channels of the first encoder level.
    #[arg(long, default_value_t = 16)]
    pub base_channels: usize,
    /// Adam learning rate.
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// Fraction of sinograms held back for validation.
    #[arg(long, default_value_t = 0.1)]
    pub validation_fraction: f64,
    /// Training patches drawn from each sinogram.
    #[arg(long, default_value_t = 100)]
    pub patches_per_sinogram: usize,
    /// Optimizer steps per epoch (default: one pass over the patches).
    #[arg(long)]
    pub steps_per_epoch: Option<usize>,
    /// Upper bound on validation patches.
    #[arg(long, default_value_t = 256)]
    pub validation_patches: usize,
}

impl BlindSpotArgs {
    pub fn config(&self, variant: Variant, seed: u64) -> BlindSpotConfig {
        BlindSpotConfig {
            patch_size: self.patch,
            batch_size: self.batch,
            epochs: self.epochs,
            roi_size: self.roi,
            masked_pixel_percentage: self.mask_pct,
            variant,
            depth: self.depth,
            base_channels: self.base_channels,
            learning_rate: self.lr,
            seed,
            validation_fraction: self.validation_fraction,
            patches_per_sinogram: self.patches_per_sinogram,
            steps_per_epoch: self.steps_per_epoch,
            validation_patches: self.validation_patches,
            ..BlindSpotConfig::default()
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    /// Dataset manifest written by `generate`.
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_enum, default_value_t = VariantArg::N2v)]
    pub variant: VariantArg,
    /// Exclude this configuration label from training.
    #[arg(long)]
    pub holdout: Option<String>,
    /// Train on at most this many sinograms, evenly spaced over the dataset.
    #[arg(long)]
    pub max_sinograms: Option<usize>,
    /// Model file name inside the output directory.
    #[arg(long, default_value = "model.bsn")]
    pub model_name: String,
    #[command(flatten)]
    pub blind_spot: BlindSpotArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DenoiseMethod {
    Gaussian,
    Bm3d,
    Model,
}

#[derive(Debug, Args, Serialize)]
pub struct DenoiseArgs {
    /// STF1 sinogram files.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, value_enum)]
    pub method: DenoiseMethod,
    /// Gaussian standard deviation in pixels (gaussian only).
    #[arg(long)]
    pub sigma: Option<f64>,
    /// BM3D noise level; estimated per input when omitted (bm3d only).
    #[arg(long)]
    pub bm3d_sigma: Option<f64>,
    /// BM3D search window side (bm3d only).
    #[arg(long)]
    pub search_window: Option<usize>,
    /// Trained model file (model only).
    #[arg(long)]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterArg {
    RamLak,
    SheppLogan,
}

impl From<FilterArg> for FilterKind {
    fn from(f: FilterArg) -> Self {
        match f {
            FilterArg::RamLak => FilterKind::RamLak,
            FilterArg::SheppLogan => FilterKind::SheppLogan,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct ReconArgs {
    /// STF1 sinogram files.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Manifest providing the scan geometry (default: full-turn geometry
    /// sized from each input).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Side of the square output image; even, at least 16.
    #[arg(long, default_value_t = 128)]
    pub image_size: usize,
    #[arg(long, value_enum, default_value_t = FilterArg::RamLak)]
    pub filter: FilterArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMethod {
    Identity,
    Oracle,
    Gaussian,
    Bm3d,
    N2v,
    N2v2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyArg {
    PerConfiguration,
    ProportionalStratified,
}

impl From<StrategyArg> for FoldStrategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::PerConfiguration => FoldStrategy::PerConfiguration,
            StrategyArg::ProportionalStratified => FoldStrategy::ProportionalStratified,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    /// Dataset manifest written by `generate`.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Comma-separated methods to compare.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "identity,gaussian,bm3d,n2v")]
    pub methods: Vec<EvalMethod>,
    /// Number of cross-validation folds.
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, value_enum, default_value_t = StrategyArg::PerConfiguration)]
    pub strategy: StrategyArg,
    /// Configuration label excluded from every fold.
    #[arg(long)]
    pub holdout: Option<String>,
    /// Side of the reconstructed images.
    #[arg(long, default_value_t = 128)]
    pub image_size: usize,
    /// Gaussian method standard deviation in pixels.
    #[arg(long, default_value_t = 1.0)]
    pub gaussian_sigma: f64,
    /// BM3D noise level; estimated per sample when omitted.
    #[arg(long)]
    pub bm3d_sigma: Option<f64>,
    /// BM3D search window side.
    #[arg(long, default_value_t = 39)]
    pub bm3d_search_window: usize,
    /// Train each blind-spot model on at most this many sinograms.
    #[arg(long)]
    pub max_training_sinograms: Option<usize>,
    #[command(flatten)]
    pub blind_spot: BlindSpotArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct AutocorrArgs {
    /// STF1 grid to analyze.
    pub input: PathBuf,
    /// Subtract this grid first (e.g. the denoised output, giving the noise map).
    #[arg(long)]
    pub subtract: Option<PathBuf>,
    /// Largest lag in each direction.
    #[arg(long, default_value_t = 10)]
    pub max_lag: usize,
}
