use ndarray::{Array2, Axis};

use crate::error::{Error, Result};
use crate::sinogram::Sinogram;

/// Normalized 1D Gaussian kernel with radius `⌈3σ⌉`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as usize;
    let mut k: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let t = i as f64 - radius as f64;
            (-0.5 * t * t / (sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|w| *w /= s);
    k
}

/// Mirror index into `0..n` with edge-inclusive reflection
/// (`… b a | a b c … | c b …`).
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}

fn convolve_axis(input: &Array2<f64>, kernel: &[f64], axis: Axis) -> Array2<f64> {
    let radius = (kernel.len() / 2) as isize;
    let mut out = Array2::zeros(input.dim());
    for (src, mut dst) in input.lanes(axis).into_iter().zip(out.lanes_mut(axis)) {
        let n = src.len();
        for (i, d) in dst.iter_mut().enumerate() {
            *d = kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * src[reflect(i as isize + k as isize - radius, n)])
                .sum();
        }
    }
    out
}

/// Separable Gaussian blur with reflective borders. `sigma` is in pixels;
/// zero returns the input unchanged.
pub fn gaussian_filter(grid: &Array2<f64>, sigma: f64) -> Result<Array2<f64>> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::config("gaussian sigma must be finite and ≥ 0"));
    }
    if sigma == 0.0 {
        return Ok(grid.clone());
    }
    let k = gaussian_kernel(sigma);
    let rows = convolve_axis(grid, &k, Axis(1));
    Ok(convolve_axis(&rows, &k, Axis(0)))
}

pub fn gaussian_denoise(sino: &Sinogram, sigma: f64) -> Result<Sinogram> {
    sino.with_data(gaussian_filter(&sino.data, sigma)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_sigma_is_identity() {
        let g = Array2::from_shape_fn((5, 7), |(i, j)| (i * 7 + j) as f64);
        assert_eq!(gaussian_filter(&g, 0.0).unwrap(), g);
    }

    #[test]
    fn constant_is_preserved() {
        let g = Array2::from_elem((9, 4), 2.5);
        let out = gaussian_filter(&g, 1.7).unwrap();
        assert!(out.iter().all(|v| (v - 2.5).abs() < 1e-12));
        // kernel wider than the grid still reflects correctly
        let out = gaussian_filter(&g, 6.0).unwrap();
        assert!(out.iter().all(|v| (v - 2.5).abs() < 1e-12));
    }

    #[test]
    fn impulse_peak_equals_kernel_peak() {
        let mut g = Array2::zeros((21, 21));
        g[[10, 10]] = 1.0;
        let out = gaussian_filter(&g, 1.0).unwrap();
        let norm: f64 = (-3..=3).map(|k: i32| (-0.5 * (k * k) as f64).exp()).sum();
        let peak = 1.0 / norm;
        assert!((out[[10, 10]] - peak * peak).abs() < 1e-15);
        assert!((out.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reflection_indices() {
        let got: Vec<usize> = (-3..7).map(|i| reflect(i, 4)).collect();
        assert_eq!(got, vec![2, 1, 0, 0, 1, 2, 3, 3, 2, 1]);
    }

    #[test]
    fn negative_sigma_rejected() {
        assert!(gaussian_filter(&Array2::zeros((2, 2)), -1.0).is_err());
    }
}
