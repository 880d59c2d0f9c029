use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fan-beam acquisition geometry in field-of-view units (FOV = unit circle).
///
/// The source sits at `R·(−sin β, cos β)` for source angle `β`. Detector
/// channels lie on an equiangular arc; channel `j` sees fan angle
/// `γ_j = −γ_max + j·2γ_max/(n_detectors − 1)`. The ray `(β, γ)` coincides
/// with the parallel ray of normal angle `θ = β + γ` and signed offset
/// `s = R·sin γ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanGeometry {
    pub n_angles: usize,
    pub n_detectors: usize,
    pub source_radius: f64,
    pub fan_half_angle: f64,
    pub angular_range: f64,
}

/// Offset reach of the fan beyond the unit circle used by the defaults.
const DEFAULT_COVERAGE: f64 = 1.05;
const DEFAULT_SOURCE_RADIUS: f64 = 2.0;

impl Default for ScanGeometry {
    fn default() -> Self {
        Self::covering(1000, 144)
    }
}

impl ScanGeometry {
    /// Full-turn geometry with the default source radius whose fan reaches
    /// slightly beyond the unit field of view.
    pub fn covering(n_angles: usize, n_detectors: usize) -> Self {
        Self {
            n_angles,
            n_detectors,
            source_radius: DEFAULT_SOURCE_RADIUS,
            fan_half_angle: (DEFAULT_COVERAGE / DEFAULT_SOURCE_RADIUS).asin(),
            angular_range: 2.0 * PI,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_angles < 1 {
            return Err(Error::config("n_angles must be at least 1"));
        }
        if self.n_detectors < 2 {
            return Err(Error::config("n_detectors must be at least 2"));
        }
        let finite = [self.source_radius, self.fan_half_angle, self.angular_range]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.angular_range <= 0.0 {
            return Err(Error::config("geometry lengths/angles must be finite and positive"));
        }
        if self.fan_half_angle <= 0.0 || self.fan_half_angle >= PI / 2.0 {
            return Err(Error::config("fan_half_angle must lie in (0, π/2)"));
        }
        if self.source_radius * self.fan_half_angle.sin() < 1.0 - 1e-12 {
            return Err(Error::config(format!(
                "fan does not cover the unit field of view: R·sin(γ_max) = {:.4} < 1",
                self.source_radius * self.fan_half_angle.sin()
            )));
        }
        Ok(())
    }

    pub fn is_full_turn(&self) -> bool {
        (self.angular_range - 2.0 * PI).abs() < 1e-9
    }

    pub fn angle_step(&self) -> f64 {
        self.angular_range / self.n_angles as f64
    }

    pub fn source_angle(&self, i: usize) -> f64 {
        i as f64 * self.angle_step()
    }

    pub fn fan_step(&self) -> f64 {
        2.0 * self.fan_half_angle / (self.n_detectors - 1) as f64
    }

    pub fn fan_angle(&self, j: usize) -> f64 {
        -self.fan_half_angle + j as f64 * self.fan_step()
    }

    /// Largest parallel offset reached by the fan.
    pub fn max_offset(&self) -> f64 {
        self.source_radius * self.fan_half_angle.sin()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid_and_symmetric() {
        let g = ScanGeometry::default();
        g.validate().unwrap();
        assert_eq!((g.n_angles, g.n_detectors), (1000, 144));
        assert!((g.fan_angle(0) + g.fan_angle(143)).abs() < 1e-12);
        assert!(g.max_offset() > 1.0);
    }

    #[test]
    fn rejects_uncovered_fov() {
        let mut g = ScanGeometry::default();
        g.fan_half_angle = 0.2;
        assert!(matches!(g.validate(), Err(Error::Config(_))));
        g = ScanGeometry::default();
        g.n_detectors = 1;
        assert!(g.validate().is_err());
        g = ScanGeometry::default();
        g.n_angles = 0;
        assert!(g.validate().is_err());
    }
}
