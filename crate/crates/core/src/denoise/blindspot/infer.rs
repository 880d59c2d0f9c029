//! Full-sinogram inference by overlapping tiles.

use ndarray::{s, Array2};

use super::train::BlindSpotModel;
use crate::denoise::gaussian::reflect;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::sinogram::Sinogram;

/// Tile origins along an axis of length `n`: a regular stride of
/// `tile − overlap` plus a final tile flush with the end.
pub fn tile_starts(n: usize, tile: usize, overlap: usize) -> Vec<usize> {
    if n <= tile {
        return vec![0];
    }
    let stride = tile - overlap;
    let last = n - tile;
    let mut v: Vec<usize> = (0..last).step_by(stride).collect();
    v.push(last);
    v
}

/// Blending weight of tile position `i`: linear ramps of length
/// `overlap + 1` at both ends, flat in the middle.
fn ramp(tile: usize, overlap: usize) -> Vec<f64> {
    let r = (overlap + 1) as f64;
    (0..tile)
        .map(|i| 1f64.min((i + 1) as f64 / r).min((tile - i) as f64 / r))
        .collect()
}

/// Applies `f` to overlapping `tile × tile` windows and blends the results
/// with separable ramp weights normalized by their sum. Inputs smaller than
/// a tile are reflect-padded first and the output cropped back.
pub fn blend_tiles<F>(grid: &Array2<f64>, tile: usize, overlap: usize, exec: Exec, f: F) -> Result<Array2<f64>>
where
    F: Fn(&Array2<f64>) -> Array2<f64> + Sync + Send,
{
    if tile == 0 || overlap >= tile {
        return Err(Error::config(format!("overlap {overlap} must be below tile size {tile}")));
    }
    let (h, w) = grid.dim();
    let (ph, pw) = (h.max(tile), w.max(tile));
    let padded = if (ph, pw) == (h, w) {
        grid.clone()
    } else {
        Array2::from_shape_fn((ph, pw), |(i, j)| grid[[reflect(i as isize, h), reflect(j as isize, w)]])
    };
    let rows = tile_starts(ph, tile, overlap);
    let cols = tile_starts(pw, tile, overlap);
    let tiles: Vec<(usize, usize)> = rows.iter().flat_map(|&r| cols.iter().map(move |&c| (r, c))).collect();
    let outputs = exec.map(tiles.len(), |k| {
        let (r, c) = tiles[k];
        f(&padded.slice(s![r..r + tile, c..c + tile]).to_owned())
    });

    let weight = ramp(tile, overlap);
    let mut acc = Array2::<f64>::zeros((ph, pw));
    let mut wsum = Array2::<f64>::zeros((ph, pw));
    for (&(r, c), out) in tiles.iter().zip(&outputs) {
        if out.dim() != (tile, tile) {
            return Err(Error::shape(format!("tile function returned {:?}, expected {tile}²", out.dim())));
        }
        for i in 0..tile {
            for j in 0..tile {
                let wt = weight[i] * weight[j];
                acc[[r + i, c + j]] += wt * out[[i, j]];
                wsum[[r + i, c + j]] += wt;
            }
        }
    }
    acc /= &wsum;
    Ok(acc.slice(s![..h, ..w]).to_owned())
}

impl BlindSpotModel {
    /// Denoises a grid with tiles of `patch_size` overlapping by `overlap`.
    pub fn denoise_grid_with_overlap(&self, grid: &Array2<f64>, overlap: usize, exec: Exec) -> Result<Array2<f64>> {
        if !grid.iter().all(|v| v.is_finite()) {
            return Err(Error::Numerical("input contains non-finite values".into()));
        }
        let (mean, std) = (self.norm_mean, self.norm_std);
        let normalized = grid.mapv(|v| (v - mean) / std);
        let out = blend_tiles(&normalized, self.config.patch_size, overlap, exec, |t| {
            self.network.forward(&t.mapv(|v| v as f32)).mapv(f64::from)
        })?;
        Ok(out.mapv(|v| v * std + mean))
    }

    /// Denoises a grid with the default overlap of a quarter tile.
    pub fn denoise_grid(&self, grid: &Array2<f64>) -> Result<Array2<f64>> {
        self.denoise_grid_with_overlap(grid, self.config.patch_size / 4, self.config.exec)
    }
}

pub fn denoise_with_model(model: &BlindSpotModel, sino: &Sinogram) -> Result<Sinogram> {
    sino.with_data(model.denoise_grid(&sino.data)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoise::blindspot::BlindSpotConfig;

    fn smooth(h: usize, w: usize) -> Array2<f64> {
        Array2::from_shape_fn((h, w), |(i, j)| (i as f64 * 0.05).sin() + (j as f64 * 0.08).cos() * 0.5 + 2.0)
    }

    #[test]
    fn starts_cover_the_axis() {
        assert_eq!(tile_starts(64, 64, 16), vec![0]);
        assert_eq!(tile_starts(30, 64, 16), vec![0]);
        assert_eq!(tile_starts(144, 64, 16), vec![0, 48, 80]);
        let s = tile_starts(1000, 64, 16);
        assert_eq!(*s.last().unwrap(), 936);
        assert!(s.windows(2).all(|p| p[1] - p[0] <= 48));
    }

    #[test]
    fn identity_tiles_reproduce_the_input() {
        for (h, w) in [(1000, 144), (64, 64), (70, 33), (20, 10)] {
            let g = smooth(h, w);
            let out = blend_tiles(&g, 64, 16, Exec::Sequential, |t| t.clone()).unwrap();
            assert_eq!(out.dim(), (h, w));
            let err = (&out - &g).mapv(f64::abs).fold(0.0f64, |a, &b| a.max(b));
            assert!(err < 1e-6, "{h}×{w}: {err}");
        }
    }

    #[test]
    fn bad_overlap_rejected() {
        assert!(blend_tiles(&smooth(8, 8), 8, 8, Exec::Sequential, |t| t.clone()).is_err());
    }

    #[test]
    fn model_output_shape_and_policy_agreement() {
        let cfg = BlindSpotConfig {
            base_channels: 4,
            ..BlindSpotConfig::default()
        };
        let model = BlindSpotModel::initialized(cfg, 2.0, 0.5);
        let g = smooth(1000, 144);
        let a = model.denoise_grid_with_overlap(&g, 16, Exec::Sequential).unwrap();
        let b = model.denoise_grid_with_overlap(&g, 16, Exec::Parallel).unwrap();
        assert_eq!(a.dim(), (1000, 144));
        assert_eq!(a, b);
    }

    #[test]
    fn overlap_choice_barely_matters_for_a_smooth_model() {
        // per-tile Gaussian blur: smooth, but with its own border handling
        let model = |t: &Array2<f64>| crate::denoise::gaussian_filter(t, 1.5).unwrap();
        let g = smooth(1000, 144).mapv(|v| v - 2.0);
        let a = blend_tiles(&g, 64, 16, Exec::default(), model).unwrap();
        let b = blend_tiles(&g, 64, 32, Exec::default(), model).unwrap();
        let rms = |x: &Array2<f64>| (x.mapv(|v| v * v).sum() / x.len() as f64).sqrt();
        let rel = rms(&(&a - &b)) / rms(&a);
        assert!(rel < 0.01, "{rel}");
    }
}
