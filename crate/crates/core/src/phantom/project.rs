use ndarray::Array2;

use super::{Phantom, ScanGeometry};
use crate::error::Result;
use crate::exec::Exec;
use crate::sinogram::{Sinogram, SinogramMeta};

/// Exact line integral of the phantom along the parallel ray with normal
/// angle `theta` and signed offset `s`.
pub fn parallel_line_integral(phantom: &Phantom, theta: f64, s: f64) -> f64 {
    let (sin_t, cos_t) = theta.sin_cos();
    phantom
        .disks
        .iter()
        .map(|d| d.mu * d.chord(cos_t, sin_t, s))
        .sum()
}

/// Analytic fan-beam projection of `phantom`.
pub fn forward_project(phantom: &Phantom, geometry: &ScanGeometry) -> Result<Sinogram> {
    forward_project_with(phantom, geometry, Exec::default())
}

pub fn forward_project_with(
    phantom: &Phantom,
    geometry: &ScanGeometry,
    exec: Exec,
) -> Result<Sinogram> {
    geometry.validate()?;
    phantom.validate()?;
    let n_det = geometry.n_detectors;
    let fan: Vec<(f64, f64)> = (0..n_det)
        .map(|j| {
            let gamma = geometry.fan_angle(j);
            (gamma, geometry.source_radius * gamma.sin())
        })
        .collect();
    let mut data = Array2::<f64>::zeros((geometry.n_angles, n_det));
    let slice = data.as_slice_mut().expect("fresh array is contiguous");
    exec.for_each_row(slice, n_det, |i, row| {
        let beta = geometry.source_angle(i);
        for (v, &(gamma, s)) in row.iter_mut().zip(&fan) {
            *v = parallel_line_integral(phantom, beta + gamma, s);
        }
    });
    Sinogram::new(data, *geometry, SinogramMeta::default())
}
