//! Two-stage BM3D for additive white Gaussian noise.
//!
//! Stage 1 groups similar blocks of the noisy image, hard-thresholds the
//! group in a separable 3D transform (orthonormal 2D DCT per block, then an
//! orthonormal Haar transform along the stack) and aggregates the estimates.
//! Stage 2 regroups on the stage-1 estimate and applies empirical Wiener
//! shrinkage to the noisy groups.

use std::f64::consts::PI;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;

/// Matching threshold of stage 1, in units of σ² per pixel. Corresponds to
/// the usual 2500 at σ = 25 on 8-bit data.
const MATCH_TAU_HARD: f64 = 4.0;
/// Matching threshold of stage 2 (400 at σ = 25 on 8-bit data).
const MATCH_TAU_WIENER: f64 = 0.64;
/// References processed per parallel batch.
const REF_CHUNK: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm3dConfig {
    /// Noise standard deviation in data units.
    pub sigma: f64,
    pub block_size: usize,
    pub search_window: usize,
    pub max_group_size: usize,
    pub hard_threshold_lambda: f64,
    pub step: usize,
    #[serde(skip)]
    pub exec: Exec,
}

impl Bm3dConfig {
    pub fn with_sigma(sigma: f64) -> Self {
        Self {
            sigma,
            block_size: 8,
            search_window: 39,
            max_group_size: 16,
            hard_threshold_lambda: 2.7,
            step: 3,
            exec: Exec::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::config("BM3D sigma must be positive"));
        }
        if self.block_size == 0 || self.step == 0 {
            return Err(Error::config("BM3D block_size and step must be positive"));
        }
        if self.block_size > self.search_window {
            return Err(Error::config("BM3D block_size must not exceed search_window"));
        }
        if !self.max_group_size.is_power_of_two() {
            return Err(Error::config("BM3D max_group_size must be a power of two"));
        }
        if !(self.hard_threshold_lambda >= 0.0) {
            return Err(Error::config("BM3D threshold must be ≥ 0"));
        }
        Ok(())
    }
}

/// Orthonormal DCT-II matrix, row `k` = basis function `k`.
fn dct_matrix(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for k in 0..n {
        let a = if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
        for i in 0..n {
            m[k * n + i] = a * (PI * (2 * i + 1) as f64 * k as f64 / (2 * n) as f64).cos();
        }
    }
    m
}

struct Transforms {
    b: usize,
    /// Forward matrix `C` and its transpose, both row-major.
    dct: Vec<f64>,
    dct_t: Vec<f64>,
}

impl Transforms {
    fn new(b: usize) -> Self {
        let dct = dct_matrix(b);
        let dct_t = (0..b * b).map(|idx| dct[(idx % b) * b + idx / b]).collect();
        Self { b, dct, dct_t }
    }

    fn transposed(&self, inverse: bool) -> &[f64] {
        if inverse {
            &self.dct
        } else {
            &self.dct_t
        }
    }

    /// `C X Cᵀ` (forward) or `Cᵀ X C` (inverse), in place.
    fn dct2(&self, block: &mut [f64], inverse: bool) {
        let b = self.b;
        let m = if inverse { &self.dct_t } else { &self.dct };
        let mut local = [0.0; 256];
        let mut heap = Vec::new();
        let tmp: &mut [f64] = if b * b <= local.len() {
            &mut local[..b * b]
        } else {
            heap.resize(b * b, 0.0);
            &mut heap
        };
        // rows: tmp = X Mᵀ, accumulated one input column at a time
        tmp.fill(0.0);
        for (row, out) in block.chunks_exact(b).zip(tmp.chunks_exact_mut(b)) {
            for (&x, mt) in row.iter().zip(self.transposed(inverse).chunks_exact(b)) {
                out.iter_mut().zip(mt).for_each(|(o, w)| *o += w * x);
            }
        }
        // columns
        block.fill(0.0);
        for (out, w) in block.chunks_exact_mut(b).zip(m.chunks_exact(b)) {
            for (&wi, src) in w.iter().zip(tmp.chunks_exact(b)) {
                out.iter_mut().zip(src).for_each(|(o, x)| *o += wi * x);
            }
        }
    }
}

/// Orthonormal multi-level Haar transform of a power-of-two length signal.
#[cfg(test)]
fn haar_forward(x: &mut [f64]) {
    let mut n = x.len();
    let mut tmp = vec![0.0; n];
    let s = std::f64::consts::FRAC_1_SQRT_2;
    while n > 1 {
        let h = n / 2;
        for i in 0..h {
            tmp[i] = (x[2 * i] + x[2 * i + 1]) * s;
            tmp[h + i] = (x[2 * i] - x[2 * i + 1]) * s;
        }
        x[..n].copy_from_slice(&tmp[..n]);
        n = h;
    }
}

#[cfg(test)]
fn haar_inverse(x: &mut [f64]) {
    let len = x.len();
    let mut tmp = vec![0.0; len];
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut n = 2;
    while n <= len {
        let h = n / 2;
        for i in 0..h {
            tmp[2 * i] = (x[i] + x[h + i]) * s;
            tmp[2 * i + 1] = (x[i] - x[h + i]) * s;
        }
        x[..n].copy_from_slice(&tmp[..n]);
        n *= 2;
    }
}

/// Top-left corners of reference blocks along one axis: multiples of `step`
/// plus the last valid position.
fn reference_positions(len: usize, block: usize, step: usize) -> Vec<usize> {
    let last = len - block;
    let mut v: Vec<usize> = (0..=last).step_by(step).collect();
    if *v.last().unwrap() != last {
        v.push(last);
    }
    v
}

fn block_distance(img: &[f64], width: usize, b: usize, (r0, c0): (usize, usize), (r1, c1): (usize, usize), cutoff: f64) -> f64 {
    let mut acc = 0.0;
    for i in 0..b {
        let a = &img[(r0 + i) * width + c0..][..b];
        let c = &img[(r1 + i) * width + c1..][..b];
        acc += a.iter().zip(c).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
        if acc > cutoff {
            return f64::INFINITY;
        }
    }
    acc
}

/// Blocks within the search window whose mean squared difference to the
/// reference is below `tau`, best first, truncated to a power of two.
fn find_group(img: &Array2<f64>, reference: (usize, usize), tau: f64, cfg: &Bm3dConfig) -> Vec<(usize, usize)> {
    let (h, w) = img.dim();
    let b = cfg.block_size;
    let half = (cfg.search_window / 2) as isize;
    let cutoff = tau * (b * b) as f64;
    let (r, c) = (reference.0 as isize, reference.1 as isize);
    let flat = img.as_slice().expect("standard layout");
    let r_lo = (r - half).max(0) as usize;
    let r_hi = ((r + half) as usize).min(h - b);
    let c_lo = (c - half).max(0) as usize;
    let c_hi = ((c + half) as usize).min(w - b);

    let mut cands: Vec<(f64, usize, usize)> = Vec::new();
    for rr in r_lo..=r_hi {
        for cc in c_lo..=c_hi {
            let d = if (rr, cc) == reference {
                0.0
            } else {
                block_distance(flat, w, b, reference, (rr, cc), cutoff)
            };
            if d <= cutoff {
                cands.push((d, rr, cc));
            }
        }
    }
    cands.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let keep = cands.len().min(cfg.max_group_size);
    let keep = 1usize << (usize::BITS - 1 - keep.leading_zeros());
    cands.truncate(keep);
    cands.into_iter().map(|(_, r, c)| (r, c)).collect()
}

/// 2D transforms of every `b × b` block of an image, indexed by top-left
/// corner.
struct BlockSpectra {
    cols: usize,
    bb: usize,
    coeffs: Vec<f64>,
}

impl BlockSpectra {
    fn new(img: &Array2<f64>, t: &Transforms, exec: Exec) -> Self {
        let (h, w) = img.dim();
        let b = t.b;
        let bb = b * b;
        let (rows, cols) = (h - b + 1, w - b + 1);
        let flat = img.as_slice().expect("standard layout");
        let per_row = exec.map(rows, |r| {
            let mut out = vec![0.0; cols * bb];
            for (c, blk) in out.chunks_exact_mut(bb).enumerate() {
                for i in 0..b {
                    blk[i * b..(i + 1) * b].copy_from_slice(&flat[(r + i) * w + c..][..b]);
                }
                t.dct2(blk, false);
            }
            out
        });
        Self {
            cols,
            bb,
            coeffs: per_row.concat(),
        }
    }

    fn get(&self, (r, c): (usize, usize)) -> &[f64] {
        let at = (r * self.cols + c) * self.bb;
        &self.coeffs[at..at + self.bb]
    }

    /// Stack of the blocks at `positions`, transformed along the stack too.
    fn group(&self, positions: &[(usize, usize)]) -> Vec<f64> {
        let mut stack = Vec::with_capacity(positions.len() * self.bb);
        for &p in positions {
            stack.extend_from_slice(self.get(p));
        }
        haar_along_stack(&mut stack, positions.len(), self.bb, false);
        stack
    }
}

/// `(x + y)/√2` into `sum` and `(x − y)/√2` into `diff`, elementwise.
fn butterfly(x: &[f64], y: &[f64], sum: &mut [f64], diff: &mut [f64]) {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    for (((a, b), p), m) in x.iter().zip(y).zip(sum).zip(diff) {
        *p = (a + b) * s;
        *m = (a - b) * s;
    }
}

/// Orthonormal multi-level Haar transform of each coefficient across a
/// stack laid out as `[block][pixel]`, computed a whole block at a time.
fn haar_along_stack(stack: &mut [f64], n: usize, bb: usize, inverse: bool) {
    let mut tmp = vec![0.0; n * bb];
    if inverse {
        let mut len = 2;
        while len <= n {
            let h = len / 2;
            for i in 0..h {
                let (even, odd) = tmp[2 * i * bb..(2 * i + 2) * bb].split_at_mut(bb);
                butterfly(&stack[i * bb..(i + 1) * bb], &stack[(h + i) * bb..(h + i + 1) * bb], even, odd);
            }
            stack[..len * bb].copy_from_slice(&tmp[..len * bb]);
            len *= 2;
        }
    } else {
        let mut len = n;
        while len > 1 {
            let h = len / 2;
            let (sums, diffs) = tmp[..len * bb].split_at_mut(h * bb);
            for i in 0..h {
                butterfly(
                    &stack[2 * i * bb..(2 * i + 1) * bb],
                    &stack[(2 * i + 1) * bb..(2 * i + 2) * bb],
                    &mut sums[i * bb..(i + 1) * bb],
                    &mut diffs[i * bb..(i + 1) * bb],
                );
            }
            stack[..len * bb].copy_from_slice(&tmp[..len * bb]);
            len = h;
        }
    }
}

fn inverse_stack(t: &Transforms, stack: &mut [f64], n: usize) {
    let bb = t.b * t.b;
    haar_along_stack(stack, n, bb, true);
    for blk in stack.chunks_mut(bb) {
        t.dct2(blk, true);
    }
}

struct GroupEstimate {
    weight: f64,
    positions: Vec<(usize, usize)>,
    blocks: Vec<f64>,
}

fn hard_threshold_group(
    noisy: &Array2<f64>,
    spectra: &BlockSpectra,
    t: &Transforms,
    reference: (usize, usize),
    cfg: &Bm3dConfig,
) -> GroupEstimate {
    let sigma2 = cfg.sigma * cfg.sigma;
    let positions = find_group(noisy, reference, MATCH_TAU_HARD * sigma2, cfg);
    let n = positions.len();
    let mut stack = spectra.group(&positions);
    let thr = cfg.hard_threshold_lambda * cfg.sigma;
    let mut retained = 0usize;
    for (i, c) in stack.iter_mut().enumerate() {
        // index 0: DC of the 2D DC coefficients along the stack
        if i == 0 || c.abs() >= thr {
            retained += 1;
        } else {
            *c = 0.0;
        }
    }
    inverse_stack(t, &mut stack, n);
    GroupEstimate {
        weight: 1.0 / retained.max(1) as f64,
        positions,
        blocks: stack,
    }
}

fn wiener_group(
    basic: &Array2<f64>,
    noisy_spectra: &BlockSpectra,
    basic_spectra: &BlockSpectra,
    t: &Transforms,
    reference: (usize, usize),
    cfg: &Bm3dConfig,
) -> GroupEstimate {
    let sigma2 = cfg.sigma * cfg.sigma;
    let positions = find_group(basic, reference, MATCH_TAU_WIENER * sigma2, cfg);
    let n = positions.len();
    let mut noisy_stack = noisy_spectra.group(&positions);
    let basic_stack = basic_spectra.group(&positions);
    let mut energy = 0.0;
    for (i, (c, e)) in noisy_stack.iter_mut().zip(&basic_stack).enumerate() {
        let e2 = e * e;
        // the group DC passes unshrunk, as in stage 1
        let w = if i == 0 { 1.0 } else { e2 / (e2 + sigma2) };
        energy += w * w;
        *c *= w;
    }
    inverse_stack(t, &mut noisy_stack, n);
    GroupEstimate {
        weight: 1.0 / energy.max(1e-12),
        positions,
        blocks: noisy_stack,
    }
}

/// Weighted sums of block estimates: `(numerator, denominator)`.
fn aggregate<F>(shape: (usize, usize), refs: &[(usize, usize)], b: usize, exec: Exec, estimate: F) -> (Array2<f64>, Array2<f64>)
where
    F: Fn((usize, usize)) -> GroupEstimate + Sync + Send,
{
    let mut num = Array2::<f64>::zeros(shape);
    let mut den = Array2::<f64>::zeros(shape);
    let bb = b * b;
    for chunk in refs.chunks(REF_CHUNK) {
        let groups = exec.map_slice(chunk, |&r| estimate(r));
        for g in groups {
            for (k, &(r, c)) in g.positions.iter().enumerate() {
                let blk = &g.blocks[k * bb..(k + 1) * bb];
                for i in 0..b {
                    for j in 0..b {
                        num[[r + i, c + j]] += g.weight * blk[i * b + j];
                        den[[r + i, c + j]] += g.weight;
                    }
                }
            }
        }
    }
    (num, den)
}

fn normalize(noisy: &Array2<f64>, num: Array2<f64>, den: &Array2<f64>) -> Array2<f64> {
    let mut out = num;
    ndarray::Zip::from(&mut out).and(den).and(noisy).for_each(|o, &d, &x| {
        *o = if d > 0.0 { *o / d } else { x };
    });
    out
}

fn check_input(image: &Array2<f64>, cfg: &Bm3dConfig) -> Result<()> {
    cfg.validate()?;
    let (h, w) = image.dim();
    if h < cfg.block_size || w < cfg.block_size {
        return Err(Error::shape(format!(
            "image {h}×{w} smaller than BM3D block {}",
            cfg.block_size
        )));
    }
    if !image.iter().all(|v| v.is_finite()) {
        return Err(Error::Numerical("BM3D input is not finite".into()));
    }
    Ok(())
}

fn references(image: &Array2<f64>, cfg: &Bm3dConfig) -> Vec<(usize, usize)> {
    let (h, w) = image.dim();
    let rows = reference_positions(h, cfg.block_size, cfg.step);
    let cols = reference_positions(w, cfg.block_size, cfg.step);
    rows.iter().flat_map(|&r| cols.iter().map(move |&c| (r, c))).collect()
}

/// Stage-1 (hard-thresholding) estimate on its own, with the aggregation
/// denominator.
pub fn bm3d_basic_estimate(image: &Array2<f64>, cfg: &Bm3dConfig) -> Result<(Array2<f64>, Array2<f64>)> {
    check_input(image, cfg)?;
    let image = &image.as_standard_layout().into_owned();
    let t = Transforms::new(cfg.block_size);
    let spectra = BlockSpectra::new(image, &t, cfg.exec);
    let refs = references(image, cfg);
    let (num, den) = aggregate(image.dim(), &refs, cfg.block_size, cfg.exec, |r| {
        hard_threshold_group(image, &spectra, &t, r, cfg)
    });
    Ok((normalize(image, num, &den), den))
}

pub fn bm3d_denoise(image: &Array2<f64>, cfg: &Bm3dConfig) -> Result<Array2<f64>> {
    let (basic, _) = bm3d_basic_estimate(image, cfg)?;
    let image = &image.as_standard_layout().into_owned();
    let t = Transforms::new(cfg.block_size);
    let noisy_spectra = BlockSpectra::new(image, &t, cfg.exec);
    let basic_spectra = BlockSpectra::new(&basic, &t, cfg.exec);
    let refs = references(image, cfg);
    let (num, den) = aggregate(image.dim(), &refs, cfg.block_size, cfg.exec, |r| {
        wiener_group(&basic, &noisy_spectra, &basic_spectra, &t, r, cfg)
    });
    Ok(normalize(image, num, &den))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn small_cfg(sigma: f64) -> Bm3dConfig {
        Bm3dConfig {
            search_window: 15,
            ..Bm3dConfig::with_sigma(sigma)
        }
    }

    #[test]
    fn dct_is_orthonormal() {
        let t = Transforms::new(8);
        let orig: Vec<f64> = (0..64).map(|i| (i as f64 * 0.3).sin()).collect();
        let mut x = orig.clone();
        t.dct2(&mut x, false);
        let e0: f64 = orig.iter().map(|v| v * v).sum();
        let e1: f64 = x.iter().map(|v| v * v).sum();
        assert!((e0 - e1).abs() < 1e-12);
        t.dct2(&mut x, true);
        for (a, b) in x.iter().zip(&orig) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn haar_is_orthonormal() {
        for n in [1usize, 2, 4, 16] {
            let orig: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5).ln()).collect();
            let mut x = orig.clone();
            haar_forward(&mut x);
            let e0: f64 = orig.iter().map(|v| v * v).sum();
            let e1: f64 = x.iter().map(|v| v * v).sum();
            assert!((e0 - e1).abs() < 1e-12);
            assert!((x[0] - orig.iter().sum::<f64>() / (n as f64).sqrt()).abs() < 1e-12);
            haar_inverse(&mut x);
            for (a, b) in x.iter().zip(&orig) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn stacked_haar_matches_per_coefficient_haar() {
        let bb = 5;
        for n in [1usize, 2, 8, 16] {
            let orig: Vec<f64> = (0..n * bb).map(|i| ((i * 7 % 13) as f64).sin()).collect();
            let mut stacked = orig.clone();
            haar_along_stack(&mut stacked, n, bb, false);
            for p in 0..bb {
                let mut line: Vec<f64> = (0..n).map(|k| orig[k * bb + p]).collect();
                haar_forward(&mut line);
                for k in 0..n {
                    assert_eq!(stacked[k * bb + p], line[k]);
                }
            }
            haar_along_stack(&mut stacked, n, bb, true);
            for (a, b) in stacked.iter().zip(&orig) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dct2_matches_direct_sums() {
        let b = 8;
        let t = Transforms::new(b);
        let c = dct_matrix(b);
        let x: Vec<f64> = (0..b * b).map(|i| ((i * 11 % 17) as f64) - 8.0).collect();
        let mut fwd = x.clone();
        t.dct2(&mut fwd, false);
        for k in 0..b {
            for l in 0..b {
                let mut direct = 0.0;
                for i in 0..b {
                    for j in 0..b {
                        direct += c[k * b + i] * x[i * b + j] * c[l * b + j];
                    }
                }
                assert!((fwd[k * b + l] - direct).abs() < 1e-10);
            }
        }
        t.dct2(&mut fwd, true);
        for (a, b) in fwd.iter().zip(&x) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn constant_image_is_preserved() {
        let img = Array2::from_elem((30, 27), 0.75);
        for sigma in [0.01, 0.5, 3.0] {
            let out = bm3d_denoise(&img, &small_cfg(sigma)).unwrap();
            assert!(out.iter().all(|v| (v - 0.75).abs() < 1e-12));
        }
    }

    #[test]
    fn aggregation_weights_cover_and_normalize() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let n = Normal::new(0.0, 0.1).unwrap();
        let img = Array2::from_shape_simple_fn((29, 31), || n.sample(&mut rng));
        let cfg = small_cfg(0.1);
        let (_, den) = bm3d_basic_estimate(&img, &cfg).unwrap();
        assert!(den.iter().all(|&d| d > 0.0));
        // normalizing the weights of a constant field returns the constant
        let refs = references(&img, &cfg);
        let b = cfg.block_size;
        let (num, den) = aggregate(img.dim(), &refs, b, Exec::Sequential, |r| GroupEstimate {
            weight: 1.0 + (r.0 * 31 + r.1) as f64,
            positions: vec![r],
            blocks: vec![1.0; b * b],
        });
        let unit = normalize(&img, num, &den);
        assert!(unit.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn flat_noise_is_strongly_suppressed() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let n = Normal::new(0.0, 0.1).unwrap();
        let img = Array2::from_shape_simple_fn((64, 64), || 0.5 + n.sample(&mut rng));
        let out = bm3d_denoise(&img, &Bm3dConfig::with_sigma(0.1)).unwrap();
        let resid = out.mapv(|v| v - 0.5);
        let std = (resid.mapv(|v| v * v).mean().unwrap()).sqrt();
        assert!(std <= 0.25 * 0.1, "residual std {std}");
    }

    #[test]
    fn group_sizes_are_powers_of_two() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let n = Normal::new(0.0, 1.0).unwrap();
        let img = Array2::from_shape_simple_fn((40, 40), || n.sample(&mut rng));
        let cfg = small_cfg(1.0);
        for r in references(&img, &cfg).into_iter().take(30) {
            let g = find_group(&img, r, MATCH_TAU_HARD, &cfg);
            assert!(g.len().is_power_of_two() && g.len() <= 16);
            assert_eq!(g[0], r);
        }
    }

    #[test]
    fn policies_agree_and_shape_is_kept() {
        let img = Array2::from_shape_fn((33, 20), |(i, j)| ((i * j) as f64 * 0.05).sin());
        let mut cfg = small_cfg(0.05);
        cfg.exec = Exec::Sequential;
        let a = bm3d_denoise(&img, &cfg).unwrap();
        cfg.exec = Exec::Parallel;
        let b = bm3d_denoise(&img, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.dim(), img.dim());
        assert!(a.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn config_errors() {
        let img = Array2::zeros((16, 16));
        assert!(matches!(bm3d_denoise(&img, &Bm3dConfig::with_sigma(0.0)), Err(Error::Config(_))));
        let mut c = Bm3dConfig::with_sigma(1.0);
        c.max_group_size = 12;
        assert!(c.validate().is_err());
        c = Bm3dConfig::with_sigma(1.0);
        c.search_window = 4;
        assert!(c.validate().is_err());
        assert!(bm3d_denoise(&Array2::zeros((4, 40)), &Bm3dConfig::with_sigma(1.0)).is_err());
    }
}
