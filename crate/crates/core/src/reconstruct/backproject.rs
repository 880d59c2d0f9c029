use std::f64::consts::PI;

use ndarray::Array2;

use super::{ParallelSinogram, ReconConfig, ReconImage};
use crate::error::{Error, Result};

/// Pixel-center coordinate in the unit field of view.
pub fn pixel_center(index: usize, size: usize) -> f64 {
    (index as f64 + 0.5) / size as f64 * 2.0 - 1.0
}

/// Smears ramp-filtered projections back over the image grid.
///
/// Pixel `(row, col)` sits at `(x, y) = (c(col), c(row))` with `c` from
/// [`pixel_center`]; its value is `(π/n_θ)·Σ_θ q_θ(x cos θ + y sin θ)` with
/// linear interpolation in `s`. Angles are summed in index order for every
/// pixel, so the result is independent of the thread count.
pub fn backproject(filtered: &ParallelSinogram, config: &ReconConfig) -> Result<ReconImage> {
    config.validate()?;
    if !filtered.data.iter().all(|v| v.is_finite()) {
        return Err(Error::Numerical("filtered sinogram is not finite".into()));
    }
    let size = config.image_size;
    let (n_theta, n_off) = filtered.data.dim();
    let trig: Vec<(f64, f64)> = (0..n_theta)
        .map(|k| {
            let (s, c) = (k as f64 * filtered.angle_step()).sin_cos();
            (c, s)
        })
        .collect();
    let smin = -filtered.max_offset;
    let inv_ds = 1.0 / filtered.offset_step();
    let last = (n_off - 1) as f64;
    let weight = PI / n_theta as f64;
    let q = filtered
        .data
        .as_standard_layout()
        .into_owned()
        .into_raw_vec_and_offset()
        .0;

    let mut data = Array2::<f64>::zeros((size, size));
    let slice = data.as_slice_mut().expect("fresh array is contiguous");
    config.exec.for_each_row(slice, size, |row, out| {
        let y = pixel_center(row, size);
        for (col, px) in out.iter_mut().enumerate() {
            let x = pixel_center(col, size);
            if x * x + y * y > 1.0 {
                continue;
            }
            let mut acc = 0.0;
            for (k, &(c, s)) in trig.iter().enumerate() {
                let f = (x * c + y * s - smin) * inv_ds;
                if f < 0.0 || f > last {
                    continue;
                }
                let m = (f as usize).min(n_off - 2);
                let t = f - m as f64;
                let base = k * n_off + m;
                acc += q[base] * (1.0 - t) + q[base + 1] * t;
            }
            *px = acc * weight;
        }
    });
    ReconImage::new(data)
}
