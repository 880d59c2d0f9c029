//! Filtered backprojection: fan-to-parallel rebinning, ramp filtering,
//! backprojection.

mod backproject;
mod filter;
mod rebin;

pub use backproject::{backproject, pixel_center};
pub use filter::{frequency_response, padded_len, ramp_filter, FilterKind};
pub use rebin::{fan_sample, rebin_fan_to_parallel};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::sinogram::Sinogram;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    Nearest,
    #[default]
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReconConfig {
    pub image_size: usize,
    #[serde(default)]
    pub filter: FilterKind,
    #[serde(default)]
    pub rebin_interpolation: Interpolation,
    /// Defaults to the fan sinogram's angle count.
    #[serde(default)]
    pub parallel_n_angles: Option<usize>,
    /// Defaults to the fan sinogram's detector count.
    #[serde(default)]
    pub parallel_n_offsets: Option<usize>,
    #[serde(skip)]
    pub exec: Exec,
}

impl Default for ReconConfig {
    fn default() -> Self {
        Self {
            image_size: 128,
            filter: FilterKind::RamLak,
            rebin_interpolation: Interpolation::Linear,
            parallel_n_angles: None,
            parallel_n_offsets: None,
            exec: Exec::default(),
        }
    }
}

impl ReconConfig {
    pub fn validate(&self) -> Result<()> {
        if self.image_size < 16 || self.image_size % 2 != 0 {
            return Err(Error::config("image_size must be even and at least 16"));
        }
        for n in [self.parallel_n_angles, self.parallel_n_offsets].into_iter().flatten() {
            if n < 2 {
                return Err(Error::config("parallel grid counts must be at least 2"));
            }
        }
        Ok(())
    }
}

/// Parallel-beam sinogram over a full turn: row `k` has normal angle
/// `2πk/n_θ`; column `m` has offset `−s_max + m·2s_max/(n_s − 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParallelSinogram {
    pub data: Array2<f64>,
    pub max_offset: f64,
}

impl ParallelSinogram {
    pub fn angle_step(&self) -> f64 {
        std::f64::consts::TAU / self.data.nrows() as f64
    }

    pub fn offset_step(&self) -> f64 {
        2.0 * self.max_offset / (self.data.ncols() - 1) as f64
    }

    pub fn offset(&self, m: usize) -> f64 {
        -self.max_offset + m as f64 * self.offset_step()
    }
}

/// Square attenuation image over the unit field of view.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconImage {
    pub data: Array2<f64>,
    pub pixel_spacing: f64,
}

impl ReconImage {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        let (r, c) = data.dim();
        if r != c || r < 16 || r % 2 != 0 {
            return Err(Error::shape(format!("image must be square, even, ≥ 16; got {r}×{c}")));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::Numerical("image contains non-finite values".into()));
        }
        Ok(Self {
            pixel_spacing: 2.0 / r as f64,
            data,
        })
    }

    pub fn size(&self) -> usize {
        self.data.nrows()
    }

    /// Pixels whose centers satisfy `pred(x, y)`.
    pub fn select(&self, pred: impl Fn(f64, f64) -> bool) -> Vec<f64> {
        let n = self.size();
        let mut out = Vec::new();
        for i in 0..n {
            let y = pixel_center(i, n);
            for j in 0..n {
                let x = pixel_center(j, n);
                if pred(x, y) {
                    out.push(self.data[[i, j]]);
                }
            }
        }
        out
    }

    pub fn in_circle_mean(&self) -> f64 {
        let v = self.select(|x, y| x * x + y * y <= 1.0);
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Filtered backprojection of a fan-beam sinogram.
pub fn reconstruct(sino: &Sinogram, config: &ReconConfig) -> Result<ReconImage> {
    config.validate()?;
    let parallel = rebin_fan_to_parallel(sino, config)?;
    let filtered = ramp_filter(&parallel, config.filter, config.exec);
    backproject(&filtered, config)
}

/// Contrast of a ring at `radius` against the annuli just inside and
/// outside it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RingMetric {
    pub ring_mean: f64,
    pub neighbor_mean: f64,
    pub neighbor_std: f64,
}

impl RingMetric {
    /// Ring elevation over its surroundings, in image units.
    pub fn excess(&self) -> f64 {
        self.ring_mean - self.neighbor_mean
    }

    /// Elevation exceeds three neighbour standard deviations.
    pub fn is_detectable(&self) -> bool {
        self.excess() > 3.0 * self.neighbor_std
    }
}

/// Ring annulus: within 0.75 px of `radius`; neighbours: 2–5 px away on
/// either side.
pub fn ring_metric(image: &ReconImage, radius: f64) -> RingMetric {
    let px = image.pixel_spacing;
    let ring = image.select(|x, y| ((x * x + y * y).sqrt() - radius).abs() <= 0.75 * px);
    let near = image.select(|x, y| {
        let d = ((x * x + y * y).sqrt() - radius).abs();
        (2.0 * px..=5.0 * px).contains(&d)
    });
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    let neighbor_mean = mean(&near);
    let var = near.iter().map(|v| (v - neighbor_mean).powi(2)).sum::<f64>() / near.len().max(1) as f64;
    RingMetric {
        ring_mean: mean(&ring),
        neighbor_mean,
        neighbor_std: var.sqrt(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::{forward_project, Disk, Phantom, ScanGeometry};

    fn disk(r: f64) -> Phantom {
        Phantom::new(vec![Disk::new(0.0, 0.0, r, 1.0)]).unwrap()
    }

    #[test]
    fn centered_disk_center_pixel() {
        let g = ScanGeometry::covering(1000, 144);
        let sino = forward_project(&disk(0.5), &g).unwrap();
        let img = reconstruct(&sino, &ReconConfig::default()).unwrap();
        for (i, j) in [(63, 63), (63, 64), (64, 63), (64, 64)] {
            assert!((img.data[[i, j]] - 1.0).abs() < 0.05, "{}", img.data[[i, j]]);
        }
    }

    #[test]
    fn biased_channel_makes_a_ring() {
        let g = ScanGeometry::covering(1000, 144);
        let mut sino = forward_project(&disk(0.5), &g).unwrap();
        let j = (0..g.n_detectors)
            .min_by(|&a, &b| {
                let da = (g.source_radius * g.fan_angle(a).sin() - 0.3).abs();
                let db = (g.source_radius * g.fan_angle(b).sin() - 0.3).abs();
                da.total_cmp(&db)
            })
            .unwrap();
        let radius = (g.source_radius * g.fan_angle(j).sin()).abs();
        let cfg = ReconConfig::default();
        let before = ring_metric(&reconstruct(&sino, &cfg).unwrap(), radius);
        assert!(!before.is_detectable(), "{before:?}");
        let delta = 0.05 * sino.data[[0, j]];
        sino.data.column_mut(j).mapv_inplace(|v| v + delta);
        let after = ring_metric(&reconstruct(&sino, &cfg).unwrap(), radius);
        assert!(after.is_detectable(), "{after:?}");
    }

    #[test]
    fn config_validation() {
        let bad = ReconConfig { image_size: 15, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = ReconConfig { image_size: 8, ..Default::default() };
        assert!(bad.validate().is_err());
        let json = serde_json::to_string(&ReconConfig::default()).unwrap();
        let back: ReconConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, ReconConfig::default());
        assert!(json.contains("ram-lak"));
    }
}
