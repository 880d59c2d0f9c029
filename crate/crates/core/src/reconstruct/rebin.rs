use std::f64::consts::TAU;

use ndarray::Array2;

use super::{Interpolation, ParallelSinogram, ReconConfig};
use crate::error::{Error, Result};
use crate::sinogram::Sinogram;

/// Value of the fan sinogram along the parallel ray `(theta, s)`.
///
/// Uses `γ = asin(s/R)`, `β = θ − γ`, interpolating in `(β, γ)` with angular
/// wrap-around. Rays outside the fan return 0.
pub fn fan_sample(sino: &Sinogram, theta: f64, s: f64, interp: Interpolation) -> f64 {
    let g = &sino.geometry;
    let ratio = s / g.source_radius;
    if !(-1.0..=1.0).contains(&ratio) {
        return 0.0;
    }
    let gamma = ratio.asin();
    let fj = (gamma + g.fan_half_angle) / g.fan_step();
    let last = (g.n_detectors - 1) as f64;
    const EDGE: f64 = 1e-9;
    if fj < -EDGE || fj > last + EDGE {
        return 0.0;
    }
    let fj = fj.clamp(0.0, last);
    let fi = (theta - gamma).rem_euclid(TAU) / g.angle_step();
    let n_a = g.n_angles;
    let data = &sino.data;

    match interp {
        Interpolation::Nearest => {
            let i = (fi.round() as usize) % n_a;
            let j = fj.round() as usize;
            data[[i, j]]
        }
        Interpolation::Linear => {
            let i0f = fi.floor();
            let ti = fi - i0f;
            let i0 = (i0f as usize) % n_a;
            let i1 = (i0 + 1) % n_a;
            let j0 = (fj.floor() as usize).min(g.n_detectors - 2);
            let tj = fj - j0 as f64;
            let a = data[[i0, j0]] * (1.0 - tj) + data[[i0, j0 + 1]] * tj;
            let b = data[[i1, j0]] * (1.0 - tj) + data[[i1, j0 + 1]] * tj;
            a * (1.0 - ti) + b * ti
        }
    }
}

/// Resamples a full-turn fan-beam sinogram onto the parallel grid of
/// `config`.
pub fn rebin_fan_to_parallel(sino: &Sinogram, config: &ReconConfig) -> Result<ParallelSinogram> {
    sino.validate()?;
    let g = &sino.geometry;
    g.validate()?;
    if !g.is_full_turn() {
        return Err(Error::config("rebinning requires a full-turn scan"));
    }
    let n_theta = config.parallel_n_angles.unwrap_or(g.n_angles);
    let n_off = config.parallel_n_offsets.unwrap_or(g.n_detectors);
    if n_theta < 2 || n_off < 2 {
        return Err(Error::config("parallel grid counts must be at least 2"));
    }
    let mut out = ParallelSinogram {
        data: Array2::zeros((n_theta, n_off)),
        max_offset: g.max_offset(),
    };
    let offsets: Vec<f64> = (0..n_off).map(|m| out.offset(m)).collect();
    let d_theta = out.angle_step();
    let slice = out.data.as_slice_mut().expect("fresh array is contiguous");
    config.exec.for_each_row(slice, n_off, |k, row| {
        let theta = k as f64 * d_theta;
        for (v, &s) in row.iter_mut().zip(&offsets) {
            *v = fan_sample(sino, theta, s, config.rebin_interpolation);
        }
    });
    Ok(out)
}
