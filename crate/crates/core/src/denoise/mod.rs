//! Denoisers: Gaussian baseline, BM3D and the blind-spot network.

pub mod blindspot;
pub mod bm3d;
mod gaussian;

pub use blindspot::{
    denoise_with_model, train_blind_spot, BlindSpotConfig, BlindSpotModel, MaskedBatch, TrainingLog, Variant,
};
pub use bm3d::{bm3d_basic_estimate, bm3d_denoise, Bm3dConfig};
pub use gaussian::{gaussian_denoise, gaussian_filter, gaussian_kernel};

use ndarray::Array2;

/// Robust noise level estimate: median absolute diagonal Haar detail
/// coefficient divided by 0.6745.
pub fn estimate_noise_sigma(grid: &Array2<f64>) -> f64 {
    let (h, w) = grid.dim();
    let mut details: Vec<f64> = Vec::with_capacity((h / 2) * (w / 2));
    for i in (0..h.saturating_sub(1)).step_by(2) {
        for j in (0..w.saturating_sub(1)).step_by(2) {
            let d = (grid[[i, j]] - grid[[i + 1, j]] - grid[[i, j + 1]] + grid[[i + 1, j + 1]]) / 2.0;
            details.push(d.abs());
        }
    }
    if details.is_empty() {
        return 0.0;
    }
    details.sort_by(f64::total_cmp);
    crate::metrics::quantile(&details, 0.5) / 0.6745
}
