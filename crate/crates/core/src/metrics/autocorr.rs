use ndarray::Array2;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Normalized autocorrelation over lags `−max_lag..=max_lag` in both axes.
/// `values[[max_lag + Δa, max_lag + Δd]]` holds `A(Δa, Δd)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutocorrMap {
    pub max_lag: usize,
    pub values: Array2<f64>,
}

impl AutocorrMap {
    pub fn at(&self, d_angle: isize, d_detector: isize) -> f64 {
        let l = self.max_lag as isize;
        self.values[[(l + d_angle) as usize, (l + d_detector) as usize]]
    }

    /// Mean |A| along the main diagonal (Δa = Δd) over `lags`, divided by the
    /// same on the anti-diagonal (Δa = −Δd).
    pub fn diagonal_ratio(&self, lags: std::ops::RangeInclusive<usize>) -> f64 {
        let (mut diag, mut anti, mut n) = (0.0, 0.0, 0.0);
        for k in lags {
            let k = k as isize;
            diag += self.at(k, k).abs();
            anti += self.at(k, -k).abs();
            n += 1.0;
        }
        (diag / n) / (anti / n)
    }
}

fn fft2(buf: &mut Array2<Complex<f64>>, inverse: bool) {
    let (rows, cols) = buf.dim();
    let mut planner = FftPlanner::<f64>::new();
    let (row_fft, col_fft) = if inverse {
        (planner.plan_fft_inverse(cols), planner.plan_fft_inverse(rows))
    } else {
        (planner.plan_fft_forward(cols), planner.plan_fft_forward(rows))
    };
    for mut row in buf.rows_mut() {
        let mut tmp: Vec<Complex<f64>> = row.to_vec();
        row_fft.process(&mut tmp);
        row.iter_mut().zip(tmp).for_each(|(d, s)| *d = s);
    }
    for mut col in buf.columns_mut() {
        let mut tmp: Vec<Complex<f64>> = col.to_vec();
        col_fft.process(&mut tmp);
        col.iter_mut().zip(tmp).for_each(|(d, s)| *d = s);
    }
}

/// Mean-subtracted autocorrelation with biased normalization (sums divided
/// by the pixel count, not the overlap), computed through a zero-padded
/// power spectrum and scaled so `A(0, 0) = 1`. The map is point-symmetric
/// exactly.
pub fn autocorrelation_map(grid: &Array2<f64>, max_lag: usize) -> Result<AutocorrMap> {
    let (rows, cols) = grid.dim();
    if 2 * max_lag >= rows.min(cols) {
        return Err(Error::config(format!(
            "max_lag {max_lag} must be below half the smaller dimension ({rows}×{cols})"
        )));
    }
    let mean = grid.sum() / grid.len() as f64;
    let var = grid.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / grid.len() as f64;
    if !(var > 0.0) {
        return Err(Error::Numerical("autocorrelation of a constant grid".into()));
    }
    let (pr, pc) = (rows + max_lag, cols + max_lag);
    let mut buf = Array2::<Complex<f64>>::zeros((pr, pc));
    for ((i, j), &v) in grid.indexed_iter() {
        buf[[i, j]] = Complex::new(v - mean, 0.0);
    }
    fft2(&mut buf, false);
    buf.mapv_inplace(|c| Complex::new(c.norm_sqr(), 0.0));
    fft2(&mut buf, true);

    let l = max_lag as isize;
    let zero = buf[[0, 0]].re;
    let raw = |da: isize, dd: isize| -> f64 {
        let i = da.rem_euclid(pr as isize) as usize;
        let j = dd.rem_euclid(pc as isize) as usize;
        buf[[i, j]].re / zero
    };
    let side = 2 * max_lag + 1;
    let values = Array2::from_shape_fn((side, side), |(i, j)| {
        let da = i as isize - l;
        let dd = j as isize - l;
        if da == 0 && dd == 0 {
            1.0
        } else {
            0.5 * (raw(da, dd) + raw(-da, -dd))
        }
    });
    Ok(AutocorrMap { max_lag, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::{structured_field, StructuredNoise};
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    /// Direct biased autocorrelation at one lag.
    fn brute(grid: &Array2<f64>, da: isize, dd: isize) -> f64 {
        let (r, c) = grid.dim();
        let mean = grid.mean().unwrap();
        let mut acc = 0.0;
        let mut zero = 0.0;
        for i in 0..r as isize {
            for j in 0..c as isize {
                let a = grid[[i as usize, j as usize]] - mean;
                zero += a * a;
                let (i2, j2) = (i + da, j + dd);
                if i2 >= 0 && j2 >= 0 && (i2 as usize) < r && (j2 as usize) < c {
                    acc += a * (grid[[i2 as usize, j2 as usize]] - mean);
                }
            }
        }
        acc / zero
    }

    #[test]
    fn matches_direct_sum() {
        let g = Array2::from_shape_fn((13, 11), |(i, j)| ((i * 3 + j * 7) as f64 * 0.41).sin() + 0.1 * i as f64);
        let m = autocorrelation_map(&g, 4).unwrap();
        for da in -4..=4 {
            for dd in -4..=4 {
                assert!((m.at(da, dd) - brute(&g, da, dd)).abs() < 1e-12, "{da},{dd}");
            }
        }
        assert_eq!(m.at(0, 0), 1.0);
        for da in -4..=4 {
            for dd in -4..=4 {
                assert_eq!(m.at(da, dd), m.at(-da, -dd));
            }
        }
    }

    #[test]
    fn white_noise_is_uncorrelated() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let g = Array2::from_shape_simple_fn((1000, 144), || StandardNormal.sample(&mut rng));
        let m = autocorrelation_map(&g, 20).unwrap();
        let bound = 5.0 / (1000.0f64 * 144.0).sqrt();
        assert!((bound - 0.0132).abs() < 1e-4);
        let lags: Vec<f64> = m
            .values
            .indexed_iter()
            .filter(|((i, j), _)| !(*i == 20 && *j == 20))
            .map(|(_, v)| v.abs())
            .collect();
        let within = lags.iter().filter(|&&v| v < bound).count();
        assert!(within as f64 >= 0.99 * lags.len() as f64);
    }

    #[test]
    fn diagonal_injector_is_detected() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let p = StructuredNoise {
            diagonal_sigma: 1.0,
            diagonal_correlation_length: 3.0,
        };
        let g = structured_field(1000, 144, &p, &mut rng);
        let m = autocorrelation_map(&g, 20).unwrap();
        assert!(m.diagonal_ratio(1..=10) >= 3.0, "{}", m.diagonal_ratio(1..=10));
        assert!(m.at(1, 1) > 0.9);
    }

    #[test]
    fn errors() {
        let c = Array2::from_elem((20, 20), 2.0);
        assert!(matches!(autocorrelation_map(&c, 3), Err(Error::Numerical(_))));
        let g = Array2::from_shape_fn((20, 10), |(i, j)| (i + j) as f64);
        assert!(autocorrelation_map(&g, 5).is_err());
        assert!(autocorrelation_map(&g, 4).is_ok());
    }
}
