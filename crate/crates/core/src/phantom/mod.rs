//! Synthetic calibration phantoms, analytic fan-beam projection and the
//! photon-counting noise model.

mod dataset;
mod geometry;
mod noise;
mod project;

pub use dataset::{generate_dataset, ConfigurationSpec, DatasetPlan};
pub use geometry::ScanGeometry;
pub use noise::{apply_noise, apply_noise_with_rng, structured_field, NoiseModel, StructuredNoise};
pub use project::{forward_project, forward_project_with, parallel_line_integral};

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A uniform disk of attenuation `mu` (1/length). Negative `mu` carves holes
/// out of larger disks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Disk {
    pub center_x: f64,
    pub center_y: f64,
    pub radius: f64,
    pub mu: f64,
}

impl Disk {
    pub fn new(center_x: f64, center_y: f64, radius: f64, mu: f64) -> Self {
        Self {
            center_x,
            center_y,
            radius,
            mu,
        }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let dx = x - self.center_x;
        let dy = y - self.center_y;
        dx * dx + dy * dy <= self.radius * self.radius
    }

    /// Chord length of the line `{p : p·(cos θ, sin θ) = s}` through the disk.
    pub fn chord(&self, cos_t: f64, sin_t: f64, s: f64) -> f64 {
        let d = self.center_x * cos_t + self.center_y * sin_t - s;
        let h = self.radius * self.radius - d * d;
        if h > 0.0 {
            2.0 * h.sqrt()
        } else {
            0.0
        }
    }
}

/// Superposition of disks inside the unit field of view.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Phantom {
    pub disks: Vec<Disk>,
}

/// Resolution of the grid used to check non-negativity of the composite.
const NONNEG_CHECK_GRID: usize = 257;

impl Phantom {
    pub fn new(disks: Vec<Disk>) -> Result<Self> {
        let p = Self { disks };
        p.validate()?;
        Ok(p)
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// Composite attenuation at a point.
    pub fn attenuation(&self, x: f64, y: f64) -> f64 {
        self.disks
            .iter()
            .filter(|d| d.contains(x, y))
            .map(|d| d.mu)
            .sum()
    }

    /// Checks that every disk is inside the unit circle and that the
    /// composite attenuation is non-negative. Non-negativity is probed on a
    /// regular grid plus every disk center, which is exact for the annular
    /// compositions this crate builds.
    pub fn validate(&self) -> Result<()> {
        for (i, d) in self.disks.iter().enumerate() {
            let ok = [d.center_x, d.center_y, d.radius, d.mu]
                .iter()
                .all(|v| v.is_finite());
            if !ok || d.radius <= 0.0 {
                return Err(Error::config(format!("disk {i} has invalid parameters")));
            }
            if d.center_x.hypot(d.center_y) + d.radius > 1.0 + 1e-12 {
                return Err(Error::config(format!(
                    "disk {i} extends outside the unit field of view"
                )));
            }
        }
        if self.disks.iter().all(|d| d.mu >= 0.0) {
            return Ok(());
        }
        let n = NONNEG_CHECK_GRID;
        let probe = |x: f64, y: f64| -> Result<()> {
            let a = self.attenuation(x, y);
            if a < -1e-12 {
                return Err(Error::config(format!(
                    "composite attenuation {a} < 0 at ({x:.4}, {y:.4})"
                )));
            }
            Ok(())
        };
        for i in 0..n {
            for j in 0..n {
                let x = -1.0 + 2.0 * j as f64 / (n - 1) as f64;
                let y = -1.0 + 2.0 * i as f64 / (n - 1) as f64;
                probe(x, y)?;
            }
        }
        for d in &self.disks {
            probe(d.center_x, d.center_y)?;
        }
        Ok(())
    }

    /// Multiplies every attenuation coefficient by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            disks: self
                .disks
                .iter()
                .map(|d| Disk { mu: d.mu * c, ..*d })
                .collect(),
        }
    }

    /// Rotates the phantom counter-clockwise about the origin.
    pub fn rotated(&self, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self {
            disks: self
                .disks
                .iter()
                .map(|d| Disk {
                    center_x: c * d.center_x - s * d.center_y,
                    center_y: s * d.center_x + c * d.center_y,
                    ..*d
                })
                .collect(),
        }
    }

    pub fn union(&self, other: &Phantom) -> Self {
        let mut disks = self.disks.clone();
        disks.extend_from_slice(&other.disks);
        Self { disks }
    }

    /// Ring-and-spokes calibration layout. `variant` selects spoke count and
    /// angular offset; variants 0..6 give the six default configurations.
    pub fn ring_and_spokes(variant: usize) -> Self {
        let mut disks = vec![
            // water-like background
            Disk::new(0.0, 0.0, 0.9, 0.2),
            // outer ring as disk minus inner disk
            Disk::new(0.0, 0.0, 0.75, 0.8),
            Disk::new(0.0, 0.0, 0.65, -0.8),
            // hub
            Disk::new(0.0, 0.0, 0.08, 0.5),
        ];
        let spokes = 3 + variant % 6;
        let offset = 0.3 * variant as f64;
        for k in 0..spokes {
            let phi = offset + 2.0 * PI * k as f64 / spokes as f64;
            let (s, c) = phi.sin_cos();
            let mut r = 0.15;
            while r <= 0.58 {
                disks.push(Disk::new(r * c, r * s, 0.025, 0.6));
                r += 0.06;
            }
        }
        Self { disks }
    }

    /// The six default configuration phantoms.
    pub fn default_set() -> Vec<Phantom> {
        (0..6).map(Self::ring_and_spokes).collect()
    }
}
