use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::sinogram::Sinogram;

/// Correlated Gaussian component oriented along the (angle, detector)
/// diagonal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructuredNoise {
    /// Standard deviation of the injected field.
    pub diagonal_sigma: f64,
    /// Standard deviation (in diagonal steps) of the smoothing kernel.
    pub diagonal_correlation_length: f64,
}

/// Photon-counting noise on log-attenuation data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Expected count per ray at zero attenuation (I0).
    pub photon_flux: f64,
    pub seed: u64,
    #[serde(default)]
    pub structured: Option<StructuredNoise>,
}

impl NoiseModel {
    pub fn new(photon_flux: f64, seed: u64) -> Self {
        Self {
            photon_flux,
            seed,
            structured: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.photon_flux > 0.0 && self.photon_flux.is_finite()) {
            return Err(Error::config("photon_flux must be positive and finite"));
        }
        if let Some(s) = self.structured {
            if !(s.diagonal_sigma >= 0.0 && s.diagonal_correlation_length > 0.0) {
                return Err(Error::config(
                    "structured noise needs sigma ≥ 0 and a positive correlation length",
                ));
            }
        }
        Ok(())
    }

    /// Copy of this model with the seed of one dataset sample.
    pub fn for_sample(&self, configuration: usize, sample: usize) -> Self {
        Self {
            seed: derive_seed(self.seed, &[configuration as u64, sample as u64]),
            ..*self
        }
    }
}

/// Draws a noisy realisation of `clean`, seeded from `noise.seed`.
///
/// Each ray gets counts `k ~ Poisson(I0·exp(−p))` and is mapped back to
/// `−ln(max(k, 1)/I0)`. The zero-count clamp biases very low-flux rays
/// slightly towards lower attenuation.
pub fn apply_noise(clean: &Sinogram, noise: &NoiseModel) -> Result<Sinogram> {
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    apply_noise_with_rng(clean, noise, &mut rng)
}

pub fn apply_noise_with_rng<R: Rng + ?Sized>(
    clean: &Sinogram,
    noise: &NoiseModel,
    rng: &mut R,
) -> Result<Sinogram> {
    noise.validate()?;
    if clean.data.iter().any(|&p| p < 0.0) {
        return Err(Error::config("clean sinogram must be non-negative"));
    }
    let i0 = noise.photon_flux;
    let mut data = clean.data.mapv(|p| {
        let lambda = i0 * (-p).exp();
        let k = if lambda > 0.0 {
            Poisson::new(lambda)
                .map(|d| d.sample(&mut *rng))
                .unwrap_or(0.0)
        } else {
            0.0
        };
        -(k.max(1.0) / i0).ln()
    });
    if let Some(s) = noise.structured {
        let (a, d) = data.dim();
        data += &structured_field(a, d, &s, rng);
    }
    clean.with_data(data)
}

/// Zero-mean Gaussian field with standard deviation `diagonal_sigma`,
/// correlated along the (+1, +1) diagonal: white noise convolved with a
/// unit-energy 1D Gaussian kernel laid along the diagonal.
pub fn structured_field<R: Rng + ?Sized>(
    n_angles: usize,
    n_detectors: usize,
    params: &StructuredNoise,
    rng: &mut R,
) -> Array2<f64> {
    let len = params.diagonal_correlation_length;
    let radius = (3.0 * len).ceil() as usize;
    let mut kernel: Vec<f64> = (0..=2 * radius)
        .map(|k| {
            let t = k as f64 - radius as f64;
            (-0.5 * t * t / (len * len)).exp()
        })
        .collect();
    let energy: f64 = kernel.iter().map(|w| w * w).sum::<f64>().sqrt();
    kernel.iter_mut().for_each(|w| *w /= energy);

    // white noise on a padded grid so every output sees a full kernel
    let pad = 2 * radius;
    let white = Array2::from_shape_simple_fn((n_angles + pad, n_detectors + pad), || {
        rng.sample::<f64, _>(StandardNormal)
    });
    Array2::from_shape_fn((n_angles, n_detectors), |(a, d)| {
        let acc: f64 = kernel
            .iter()
            .enumerate()
            .map(|(k, w)| w * white[[a + k, d + k]])
            .sum();
        params.diagonal_sigma * acc
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::{forward_project, Phantom, ScanGeometry};
    use crate::sinogram::SinogramMeta;

    fn constant(value: f64, a: usize, d: usize) -> Sinogram {
        Sinogram::new(
            Array2::from_elem((a, d), value),
            ScanGeometry::covering(a, d),
            SinogramMeta::default(),
        )
        .unwrap()
    }

    #[test]
    fn huge_flux_is_noise_free() {
        let clean = forward_project(&Phantom::ring_and_spokes(1), &ScanGeometry::covering(50, 40)).unwrap();
        let noisy = apply_noise(&clean, &NoiseModel::new(1e12, 3)).unwrap();
        for (a, b) in clean.data.iter().zip(noisy.data.iter()) {
            assert!((a - b).abs() < 1e-3);
        }
    }

    #[test]
    fn log_domain_std_matches_delta_method() {
        let clean = constant(1.0, 1000, 144);
        let noisy = apply_noise(&clean, &NoiseModel::new(1000.0, 11)).unwrap();
        let n = noisy.data.len() as f64;
        let mean = noisy.data.sum() / n;
        let std = (noisy.data.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let expected = (1f64.exp() / 1000.0).sqrt();
        assert!((expected - 0.0521).abs() < 1e-3);
        assert!((std - expected).abs() < 0.15 * expected, "std {std}");
    }

    #[test]
    fn count_domain_is_unbiased() {
        let p = 1.0;
        let i0 = 1000.0;
        let clean = constant(p, 100, 100);
        let noisy = apply_noise(&clean, &NoiseModel::new(i0, 5)).unwrap();
        let counts: Vec<f64> = noisy.data.iter().map(|v| i0 * (-v).exp()).collect();
        let n = counts.len() as f64;
        let mean = counts.iter().sum::<f64>() / n;
        let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let se = (var / n).sqrt();
        let expected = i0 * (-p).exp();
        assert!((mean - expected).abs() < 3.0 * se, "mean {mean} expected {expected} se {se}");
    }

    #[test]
    fn deterministic_per_seed() {
        let clean = constant(0.5, 30, 20);
        let mut m = NoiseModel::new(500.0, 42);
        m.structured = Some(StructuredNoise {
            diagonal_sigma: 0.02,
            diagonal_correlation_length: 2.0,
        });
        let a = apply_noise(&clean, &m).unwrap();
        let b = apply_noise(&clean, &m).unwrap();
        assert_eq!(a.data, b.data);
        let c = apply_noise(&clean, &m.for_sample(0, 1)).unwrap();
        assert_ne!(a.data, c.data);
    }

    #[test]
    fn zero_counts_are_clamped() {
        let clean = constant(30.0, 4, 4);
        let noisy = apply_noise(&clean, &NoiseModel::new(10.0, 1)).unwrap();
        assert!(noisy.data.iter().all(|v| v.is_finite()));
        assert!(noisy.data.iter().all(|&v| (v - 10f64.ln()).abs() < 1e-12));
    }

    #[test]
    fn mean_of_samples_converges() {
        let clean = forward_project(&Phantom::ring_and_spokes(0), &ScanGeometry::covering(40, 32)).unwrap();
        let model = NoiseModel::new(1000.0, 9);
        let rmse_of_mean = |n: usize| {
            let mut acc = Array2::<f64>::zeros(clean.data.dim());
            for k in 0..n {
                acc += &apply_noise(&clean, &model.for_sample(0, k)).unwrap().data;
            }
            acc /= n as f64;
            ((&acc - &clean.data).mapv(|v| v * v).mean().unwrap()).sqrt()
        };
        let r10 = rmse_of_mean(10);
        let r100 = rmse_of_mean(100);
        let r1000 = rmse_of_mean(1000);
        let sqrt10 = 10f64.sqrt();
        for (hi, lo) in [(r10, r100), (r100, r1000)] {
            let ratio = hi / lo;
            assert!((ratio - sqrt10).abs() < 0.2 * sqrt10, "ratio {ratio}");
        }
    }

    #[test]
    fn structured_field_has_requested_std() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = StructuredNoise {
            diagonal_sigma: 0.05,
            diagonal_correlation_length: 3.0,
        };
        let f = structured_field(400, 144, &p, &mut rng);
        let std = f.std(0.0);
        assert!((std - 0.05).abs() < 0.1 * 0.05, "std {std}");
        assert!(f.mean().unwrap().abs() < 0.01);
    }

    #[test]
    fn rejects_bad_models() {
        assert!(NoiseModel::new(0.0, 1).validate().is_err());
        let clean = constant(-0.1, 2, 2);
        assert!(apply_noise(&clean, &NoiseModel::new(10.0, 1)).is_err());
    }
}
