//! Quality measures: PSNR and ΔPSNR, noise-map statistics, autocorrelation
//! maps and boxplot summaries.

mod autocorr;
mod boxplot;

pub use autocorr::{autocorrelation_map, AutocorrMap};
pub use boxplot::{boxplot_summary, quantile, BoxplotSummary};

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::serde_float;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsnrResult {
    /// `+∞` when the grids are identical.
    #[serde(with = "serde_float")]
    pub psnr_db: f64,
    pub mse: f64,
    pub data_range: f64,
}

fn check_same_shape(a: &Array2<f64>, b: &Array2<f64>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::shape(format!("{:?} vs {:?}", a.dim(), b.dim())));
    }
    if a.is_empty() {
        return Err(Error::shape("empty grid"));
    }
    Ok(())
}

/// Peak-to-peak range of the reference.
pub fn reference_range(reference: &Array2<f64>) -> f64 {
    let (lo, hi) = reference
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    hi - lo
}

fn resolve_range(reference: &Array2<f64>, data_range: Option<f64>) -> Result<f64> {
    let range = data_range.unwrap_or_else(|| reference_range(reference));
    if !(range > 0.0 && range.is_finite()) {
        return Err(Error::Numerical(format!(
            "PSNR data range must be positive, got {range}"
        )));
    }
    Ok(range)
}

pub fn mse(a: &Array2<f64>, b: &Array2<f64>) -> Result<f64> {
    check_same_shape(a, b)?;
    let mut acc = 0.0;
    Zip::from(a).and(b).for_each(|x, y| acc += (x - y) * (x - y));
    Ok(acc / a.len() as f64)
}

/// `10·log10(range²/mse)`; `data_range` defaults to the reference's
/// max − min.
pub fn psnr(reference: &Array2<f64>, test: &Array2<f64>, data_range: Option<f64>) -> Result<PsnrResult> {
    check_same_shape(reference, test)?;
    let range = resolve_range(reference, data_range)?;
    let m = mse(reference, test)?;
    let psnr_db = if m == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (range * range / m).log10()
    };
    Ok(PsnrResult {
        psnr_db,
        mse: m,
        data_range: range,
    })
}

/// PSNR of the noisy and denoised grids against one reference, sharing one
/// data range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaPsnr {
    #[serde(with = "serde_float")]
    pub psnr_noisy: f64,
    #[serde(with = "serde_float")]
    pub psnr_denoised: f64,
    #[serde(with = "serde_float")]
    pub delta: f64,
}

pub fn delta_psnr_detail(
    noisy: &Array2<f64>,
    denoised: &Array2<f64>,
    reference: &Array2<f64>,
    data_range: Option<f64>,
) -> Result<DeltaPsnr> {
    check_same_shape(noisy, reference)?;
    let range = resolve_range(reference, data_range)?;
    let before = psnr(reference, noisy, Some(range))?.psnr_db;
    let after = psnr(reference, denoised, Some(range))?.psnr_db;
    // identical inputs give 0 even when both PSNRs are infinite
    let delta = if before == after { 0.0 } else { after - before };
    Ok(DeltaPsnr {
        psnr_noisy: before,
        psnr_denoised: after,
        delta,
    })
}

/// `PSNR(reference, denoised) − PSNR(reference, noisy)` in dB.
pub fn delta_psnr(
    noisy: &Array2<f64>,
    denoised: &Array2<f64>,
    reference: &Array2<f64>,
    data_range: Option<f64>,
) -> Result<f64> {
    delta_psnr_detail(noisy, denoised, reference, data_range).map(|d| d.delta)
}

/// Statistics of the noise map `noisy − denoised`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseStats {
    pub mean_abs: f64,
    /// Population standard deviation.
    pub std: f64,
    pub max: f64,
    pub min: f64,
}

pub fn noise_map(noisy: &Array2<f64>, denoised: &Array2<f64>) -> Result<Array2<f64>> {
    check_same_shape(noisy, denoised)?;
    Ok(noisy - denoised)
}

pub fn noise_statistics(noisy: &Array2<f64>, denoised: &Array2<f64>) -> Result<NoiseStats> {
    let diff = noise_map(noisy, denoised)?;
    let n = diff.len() as f64;
    let mean = diff.sum() / n;
    let mut mean_abs = 0.0;
    let mut var = 0.0;
    let mut max = f64::NEG_INFINITY;
    let mut min = f64::INFINITY;
    for &d in &diff {
        mean_abs += d.abs();
        var += (d - mean) * (d - mean);
        max = max.max(d);
        min = min.min(d);
    }
    Ok(NoiseStats {
        mean_abs: mean_abs / n,
        std: (var / n).sqrt(),
        max,
        min,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};

    #[test]
    fn psnr_examples() {
        let a = array![[0.0, 1.0]];
        let r = psnr(&a, &a, None).unwrap();
        assert!(r.psnr_db.is_infinite() && r.psnr_db > 0.0);

        let t = array![[0.0, 0.5]];
        let r = psnr(&a, &t, Some(1.0)).unwrap();
        assert!((r.mse - 0.125).abs() < 1e-15);
        assert!((r.psnr_db - 9.030_899_869_919_434).abs() < 1e-12);
        assert!((r.psnr_db - 9.031).abs() < 1e-3);
    }

    #[test]
    fn psnr_is_scale_invariant() {
        let a = array![[0.1, 0.7], [0.3, 0.9]];
        let b = array![[0.2, 0.6], [0.35, 0.8]];
        let r1 = psnr(&a, &b, None).unwrap().psnr_db;
        let r2 = psnr(&(&a * 37.0), &(&b * 37.0), None).unwrap().psnr_db;
        assert!((r1 - r2).abs() < 1e-10);
    }

    #[test]
    fn psnr_errors() {
        let flat = array![[1.0, 1.0]];
        assert!(matches!(psnr(&flat, &array![[1.0, 2.0]], None), Err(Error::Numerical(_))));
        assert!(psnr(&flat, &array![[1.0, 2.0]], Some(1.0)).is_ok());
        assert!(matches!(psnr(&flat, &array![[1.0]], None), Err(Error::Shape(_))));
    }

    #[test]
    fn delta_examples() {
        let reference = array![[0.0, 1.0, 0.5, 0.2]];
        let e = array![[0.1, -0.2, 0.05, 0.3]];
        let noisy = &reference + &e;
        assert_eq!(delta_psnr(&noisy, &noisy, &reference, None).unwrap(), 0.0);
        assert!(delta_psnr(&noisy, &reference, &reference, None).unwrap().is_infinite());
        let half = &reference + &(&e * 0.5);
        let d = delta_psnr(&noisy, &half, &reference, None).unwrap();
        assert!((d - 10.0 * 4f64.log10()).abs() < 1e-12);
        assert!((d - 6.021).abs() < 1e-3);
        // antisymmetry
        let back = delta_psnr(&half, &noisy, &reference, None).unwrap();
        assert!((d + back).abs() < 1e-12);
        assert_eq!(delta_psnr(&reference, &reference, &reference, None).unwrap(), 0.0);
    }

    #[test]
    fn psnr_decreases_with_noise_amplitude() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let reference = Array2::from_shape_fn((32, 32), |(i, j)| ((i * j) as f64 * 0.1).sin());
        let noise = Array2::from_shape_simple_fn((32, 32), || rng.gen::<f64>() - 0.5);
        let values: Vec<f64> = [0.01, 0.05, 0.2]
            .iter()
            .map(|&a| psnr(&reference, &(&reference + &(&noise * a)), None).unwrap().psnr_db)
            .collect();
        assert!(values[0] > values[1] && values[1] > values[2]);
    }

    #[test]
    fn noise_statistics_examples() {
        let z = array![[0.3, 0.4]];
        let s = noise_statistics(&z, &z).unwrap();
        assert_eq!((s.mean_abs, s.std, s.max, s.min), (0.0, 0.0, 0.0, 0.0));

        let noisy = array![[0.0, 2.0]];
        let denoised = array![[1.0, 1.0]];
        let s = noise_statistics(&noisy, &denoised).unwrap();
        assert_eq!((s.mean_abs, s.std, s.max, s.min), (1.0, 1.0, 1.0, -1.0));

        let table_like = NoiseStats {
            mean_abs: 0.026,
            std: 0.038,
            max: 0.392,
            min: -0.401,
        };
        let json = serde_json::to_value(table_like).unwrap();
        for key in ["mean_abs", "std", "max", "min"] {
            assert!(json.get(key).is_some());
        }
    }

    #[test]
    fn zero_mean_abs_iff_equal() {
        let a = array![[0.1, 0.2], [0.3, 0.4]];
        let mut b = a.clone();
        assert_eq!(noise_statistics(&a, &b).unwrap().mean_abs, 0.0);
        b[[1, 0]] += 1e-9;
        assert!(noise_statistics(&a, &b).unwrap().mean_abs > 0.0);
    }
}
