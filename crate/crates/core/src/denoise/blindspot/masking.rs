//! Patch extraction and blind-spot masking.

use ndarray::{s, Array2};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::BlindSpotConfig;
use crate::error::{Error, Result};
use crate::sinogram::Sinogram;

/// A square crop of one sinogram.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    /// Index of the source sinogram in the input list.
    pub source: usize,
    pub row: usize,
    pub col: usize,
    pub data: Array2<f64>,
}

/// Draws `per_sinogram` crops of `patch_size²` from each sinogram with
/// top-left corners uniform over all valid positions.
pub fn extract_patches(sinos: &[Sinogram], patch_size: usize, per_sinogram: usize, seed: u64) -> Result<Vec<Patch>> {
    if patch_size == 0 {
        return Err(Error::config("patch_size must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(sinos.len() * per_sinogram);
    for (source, sino) in sinos.iter().enumerate() {
        let (h, w) = sino.dim();
        if h < patch_size || w < patch_size {
            return Err(Error::shape(format!(
                "sinogram {source} is {h}×{w}, smaller than patch {patch_size}"
            )));
        }
        for _ in 0..per_sinogram {
            let row = rng.gen_range(0..=h - patch_size);
            let col = rng.gen_range(0..=w - patch_size);
            let data = sino
                .data
                .slice(s![row..row + patch_size, col..col + patch_size])
                .to_owned();
            out.push(Patch { source, row, col, data });
        }
    }
    Ok(out)
}

/// Masked pixels per patch: `percentage/100 · patch²` rounded half to even,
/// at least one.
pub fn masked_count(patch_size: usize, percentage: f64) -> usize {
    let exact = percentage / 100.0 * (patch_size * patch_size) as f64;
    (exact.round_ties_even() as usize).clamp(1, patch_size * patch_size)
}

/// Network inputs with blind spots.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedBatch {
    /// Patches after replacement of the masked pixels.
    pub patches: Vec<Array2<f32>>,
    /// Per patch, masked `(row, col)` positions.
    pub mask_coords: Vec<Vec<(usize, usize)>>,
    /// Per patch, the values at the masked positions before replacement.
    pub original_values: Vec<Vec<f32>>,
}

impl MaskedBatch {
    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    pub fn total_masked(&self) -> usize {
        self.mask_coords.iter().map(Vec::len).sum()
    }
}

/// Masks each patch at positions drawn without replacement and replaces each
/// masked value by a uniformly chosen pixel of its ROI window (clipped at the
/// borders). The centre and other masked positions are never chosen as the
/// source, so no masked original value survives anywhere in the input.
pub fn build_masked_batch<R: Rng>(patches: &[Array2<f32>], config: &BlindSpotConfig, rng: &mut R) -> MaskedBatch {
    let half = (config.roi_size / 2) as isize;
    let mut batch = MaskedBatch {
        patches: Vec::with_capacity(patches.len()),
        mask_coords: Vec::with_capacity(patches.len()),
        original_values: Vec::with_capacity(patches.len()),
    };
    let mut candidates: Vec<(usize, usize)> = Vec::with_capacity(config.roi_size * config.roi_size);
    for patch in patches {
        let (h, w) = patch.dim();
        let n = masked_count(h.min(w), config.masked_pixel_percentage).min(h * w);
        let flat = sample(rng, h * w, n);
        let coords: Vec<(usize, usize)> = flat.iter().map(|k| (k / w, k % w)).collect();
        let mut is_masked = vec![false; h * w];
        flat.iter().for_each(|k| is_masked[k] = true);

        let mut input = patch.clone();
        let mut originals = Vec::with_capacity(n);
        for &(r, c) in &coords {
            originals.push(patch[[r, c]]);
            let rows = (r as isize - half).max(0) as usize..=((r as isize + half) as usize).min(h - 1);
            let cols = (c as isize - half).max(0) as usize..=((c as isize + half) as usize).min(w - 1);
            candidates.clear();
            for rr in rows.clone() {
                for cc in cols.clone() {
                    if !is_masked[rr * w + cc] {
                        candidates.push((rr, cc));
                    }
                }
            }
            if candidates.is_empty() {
                // every neighbour is masked too: fall back to any non-centre pixel
                for rr in rows.clone() {
                    for cc in cols.clone() {
                        if (rr, cc) != (r, c) {
                            candidates.push((rr, cc));
                        }
                    }
                }
            }
            let (sr, sc) = candidates[rng.gen_range(0..candidates.len())];
            input[[r, c]] = patch[[sr, sc]];
        }
        batch.patches.push(input);
        batch.mask_coords.push(coords);
        batch.original_values.push(originals);
    }
    batch
}
