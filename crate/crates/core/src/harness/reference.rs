//! Averaged references in sinogram and image space.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::reconstruct::{reconstruct, ReconConfig, ReconImage};
use crate::sinogram::Sinogram;

/// Largest relative deviation tolerated between the mean of reconstructions
/// and the reconstruction of the mean.
pub const LINEARITY_TOLERANCE: f64 = 1e-5;

fn check_compatible(samples: &[Sinogram]) -> Result<()> {
    let first = &samples[0];
    for s in &samples[1..] {
        if s.dim() != first.dim() || s.geometry != first.geometry {
            return Err(Error::shape("samples differ in shape or geometry"));
        }
        if s.meta.label != first.meta.label {
            return Err(Error::config(format!(
                "cannot average different configurations (`{}` and `{}`)",
                first.meta.label, s.meta.label
            )));
        }
    }
    Ok(())
}

/// Elementwise mean of at least two samples of one configuration.
pub fn make_reference(samples: &[Sinogram]) -> Result<Sinogram> {
    if samples.len() < 2 {
        return Err(Error::config(format!(
            "a reference needs at least 2 samples, got {}",
            samples.len()
        )));
    }
    check_compatible(samples)?;
    let mut sum = Array2::<f64>::zeros(samples[0].dim());
    for s in samples {
        sum += &s.data;
    }
    sum /= samples.len() as f64;
    let mut reference = samples[0].with_data(sum)?;
    reference.meta.sample_index = None;
    Ok(reference)
}

/// Largest absolute difference relative to the largest magnitude of `b`
/// (absolute when `b` is zero).
pub fn relative_max_error(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let scale = b.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

/// Mean of the per-sample reconstructions. For two or more samples the
/// result is cross-checked against the reconstruction of the averaged
/// sinogram, which must agree by linearity.
pub fn make_image_reference(samples: &[Sinogram], config: &ReconConfig) -> Result<ReconImage> {
    if samples.is_empty() {
        return Err(Error::config("an image reference needs at least one sample"));
    }
    check_compatible(samples)?;
    let images = config
        .exec
        .map_slice(samples, |s| reconstruct(s, &ReconConfig { exec: crate::Exec::Sequential, ..*config }));
    let mut sum: Option<Array2<f64>> = None;
    for img in images {
        let img = img?;
        match &mut sum {
            Some(acc) => *acc += &img.data,
            None => sum = Some(img.data),
        }
    }
    let mean = sum.expect("non-empty") / samples.len() as f64;
    if samples.len() >= 2 {
        let direct = reconstruct(&make_reference(samples)?, config)?;
        let err = relative_max_error(&mean, &direct.data);
        if err > LINEARITY_TOLERANCE {
            return Err(Error::Numerical(format!(
                "mean of reconstructions deviates from reconstruction of the mean by {err:.3e}"
            )));
        }
    }
    ReconImage::new(mean)
}
