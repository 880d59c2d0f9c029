//! Blind-spot self-supervised denoiser (N2V and N2V2 variants).
//!
//! A small encoder–decoder is trained to predict masked pixels of noisy
//! patches from their surroundings. Pixel-independent noise cannot be
//! predicted from neighbours, so the trained network returns an estimate of
//! the underlying signal.

pub mod infer;
pub mod layers;
pub mod masking;
pub mod model_io;
pub mod net;
pub mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;

pub use infer::{blend_tiles, denoise_with_model, tile_starts};
pub use model_io::{load_model, save_model};
pub use masking::{build_masked_batch, extract_patches, masked_count, MaskedBatch, Patch};
pub use net::{Architecture, Network};
pub use train::{train_blind_spot, BlindSpotModel, EpochLog, TrainingLog};

/// Architectural variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Max-pool downsampling, skip connections at every level.
    N2v,
    /// Blur-pool downsampling, topmost skip connection removed.
    N2v2,
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::N2v => "n2v",
            Variant::N2v2 => "n2v2",
        })
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "n2v" => Ok(Variant::N2v),
            "n2v2" => Ok(Variant::N2v2),
            other => Err(Error::config(format!("unknown variant `{other}` (expected n2v or n2v2)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlindSpotConfig {
    pub patch_size: usize,
    pub batch_size: usize,
    pub epochs: usize,
    /// Side of the square window replacement values are drawn from.
    pub roi_size: usize,
    /// Percentage (not fraction) of patch pixels masked per patch.
    pub masked_pixel_percentage: f64,
    pub variant: Variant,
    pub depth: usize,
    pub base_channels: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub validation_fraction: f64,
    /// Training patches drawn from each training sinogram.
    pub patches_per_sinogram: usize,
    /// Optimizer steps per epoch; `None` means one pass over the patches.
    pub steps_per_epoch: Option<usize>,
    /// Upper bound on validation patches (masks fixed for the whole run).
    pub validation_patches: usize,
    #[serde(skip)]
    pub exec: Exec,
}

impl Default for BlindSpotConfig {
    fn default() -> Self {
        Self {
            patch_size: 64,
            batch_size: 64,
            epochs: 200,
            roi_size: 7,
            masked_pixel_percentage: 0.5,
            variant: Variant::N2v,
            depth: 2,
            base_channels: 16,
            learning_rate: 1e-3,
            seed: 0,
            validation_fraction: 0.1,
            patches_per_sinogram: 100,
            steps_per_epoch: None,
            validation_patches: 256,
            exec: Exec::default(),
        }
    }
}

impl BlindSpotConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(Error::config("depth must be ≥ 1"));
        }
        if self.patch_size == 0 || self.patch_size % (1 << self.depth) != 0 {
            return Err(Error::config(format!(
                "patch_size {} must be a positive multiple of 2^depth = {}",
                self.patch_size,
                1usize << self.depth
            )));
        }
        if self.roi_size < 3 || self.roi_size % 2 == 0 {
            return Err(Error::config("roi_size must be odd and ≥ 3"));
        }
        if !(self.masked_pixel_percentage > 0.0 && self.masked_pixel_percentage <= 10.0) {
            return Err(Error::config("masked_pixel_percentage must be in (0, 10]"));
        }
        if self.batch_size == 0 || self.base_channels == 0 || self.patches_per_sinogram == 0 {
            return Err(Error::config("batch_size, base_channels and patches_per_sinogram must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate must be positive"));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::config("validation_fraction must be in (0, 1)"));
        }
        if self.validation_patches == 0 || self.steps_per_epoch == Some(0) {
            return Err(Error::config("validation_patches and steps_per_epoch must be positive"));
        }
        Ok(())
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            variant: self.variant,
            depth: self.depth,
            base_channels: self.base_channels,
        }
    }
}
