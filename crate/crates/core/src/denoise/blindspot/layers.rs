//! Layer primitives with explicit backward passes. Feature maps are
//! `(channels, height, width)` arrays of one sample.

use std::fmt::Debug;
use std::iter::Sum;

use ndarray::{Array1, Array2, Array3, Axis, LinalgScalar, ScalarOperand};
use num_traits::Float;

/// Scalar type of the network: f32 for training, f64 for gradient checks.
pub trait Real:
    Float + LinalgScalar + ScalarOperand + Sum + Debug + Send + Sync + std::ops::AddAssign + 'static
{
    fn of(v: f64) -> Self {
        <Self as num_traits::NumCast>::from(v).expect("representable")
    }

    fn as_f64(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).expect("finite cast")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Convolution with `k × k` kernels, stride 1, zero "same" padding.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv<T> {
    pub name: String,
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    /// `(out_ch, in_ch·k·k)`, column index `(c·k + dy)·k + dx`.
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Real> Conv<T> {
    pub fn zeros(name: impl Into<String>, in_ch: usize, out_ch: usize, kernel: usize) -> Self {
        Self {
            name: name.into(),
            in_ch,
            out_ch,
            kernel,
            weight: Array2::zeros((out_ch, in_ch * kernel * kernel)),
            bias: Array1::zeros(out_ch),
        }
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn forward(&self, x: &Array3<T>) -> (Array3<T>, Array2<T>) {
        let (_, h, w) = x.dim();
        let cols = im2col(x, self.kernel);
        let mut out = self.weight.dot(&cols);
        for (mut row, &b) in out.axis_iter_mut(Axis(0)).zip(&self.bias) {
            row.mapv_inplace(|v| v + b);
        }
        let out = out
            .into_shape_with_order((self.out_ch, h, w))
            .expect("conv output shape");
        (out, cols)
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&self, cols: &Array2<T>, d_out: &Array3<T>, grad: &mut ConvGrad<T>, shape: (usize, usize, usize)) -> Array3<T> {
        let (_, h, w) = shape;
        let d2 = d_out
            .view()
            .into_shape_with_order((self.out_ch, h * w))
            .expect("grad shape");
        grad.weight += &d2.dot(&cols.t());
        grad.bias += &d2.sum_axis(Axis(1));
        let d_cols = self.weight.t().dot(&d2);
        col2im(&d_cols, shape, self.kernel)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrad<T> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Real> ConvGrad<T> {
    pub fn zeros_like(c: &Conv<T>) -> Self {
        Self {
            weight: Array2::zeros(c.weight.dim()),
            bias: Array1::zeros(c.bias.dim()),
        }
    }

    pub fn add(&mut self, other: &Self) {
        self.weight += &other.weight;
        self.bias += &other.bias;
    }
}

/// Output columns `j` whose source column `j + dx − r` lies inside `0..w`.
fn valid_span(w: usize, dx: usize, r: usize) -> std::ops::Range<usize> {
    r.saturating_sub(dx)..(w + r).saturating_sub(dx).min(w)
}

pub fn im2col<T: Real>(x: &Array3<T>, k: usize) -> Array2<T> {
    let (c, h, w) = x.dim();
    let r = k / 2;
    let x = x.as_standard_layout();
    let src = x.as_slice().expect("standard layout");
    let mut cols = Array2::<T>::zeros((c * k * k, h * w));
    for ch in 0..c {
        let plane = &src[ch * h * w..(ch + 1) * h * w];
        for dy in 0..k {
            for dx in 0..k {
                let mut row = cols.row_mut((ch * k + dy) * k + dx);
                let row = row.as_slice_mut().expect("contiguous row");
                let span = valid_span(w, dx, r);
                for i in valid_span(h, dy, r) {
                    let si = i + dy - r;
                    let s0 = span.start + dx - r;
                    row[i * w + span.start..i * w + span.end]
                        .copy_from_slice(&plane[si * w + s0..si * w + s0 + span.len()]);
                }
            }
        }
    }
    cols
}

pub fn col2im<T: Real>(cols: &Array2<T>, (c, h, w): (usize, usize, usize), k: usize) -> Array3<T> {
    let r = k / 2;
    let cols = cols.as_standard_layout();
    let mut x = Array3::<T>::zeros((c, h, w));
    let dst = x.as_slice_mut().expect("fresh array");
    for ch in 0..c {
        let plane = &mut dst[ch * h * w..(ch + 1) * h * w];
        for dy in 0..k {
            for dx in 0..k {
                let row = cols.row((ch * k + dy) * k + dx);
                let row = row.as_slice().expect("contiguous row");
                let span = valid_span(w, dx, r);
                for i in valid_span(h, dy, r) {
                    let si = i + dy - r;
                    let s0 = span.start + dx - r;
                    plane[si * w + s0..si * w + s0 + span.len()]
                        .iter_mut()
                        .zip(&row[i * w + span.start..i * w + span.end])
                        .for_each(|(d, &v)| *d += v);
                }
            }
        }
    }
    x
}

pub fn relu<T: Real>(x: &mut Array3<T>) {
    x.mapv_inplace(|v| if v > T::zero() { v } else { T::zero() });
}

/// Zeroes gradient entries where the activation was clamped.
pub fn relu_backward<T: Real>(activation: &Array3<T>, grad: &mut Array3<T>) {
    ndarray::Zip::from(grad).and(activation).for_each(|g, &a| {
        if a <= T::zero() {
            *g = T::zero();
        }
    });
}

/// 2×2 max pooling; also returns the flat argmax within each window.
pub fn max_pool<T: Real>(x: &Array3<T>) -> (Array3<T>, Vec<u8>) {
    let (c, h, w) = x.dim();
    let (ho, wo) = (h / 2, w / 2);
    let mut out = Array3::<T>::zeros((c, ho, wo));
    let mut arg = Vec::with_capacity(c * ho * wo);
    for ch in 0..c {
        for i in 0..ho {
            for j in 0..wo {
                let mut best = x[[ch, 2 * i, 2 * j]];
                let mut idx = 0u8;
                for (n, (a, b)) in [(0, 1), (1, 0), (1, 1)].into_iter().enumerate() {
                    let v = x[[ch, 2 * i + a, 2 * j + b]];
                    if v > best {
                        best = v;
                        idx = n as u8 + 1;
                    }
                }
                out[[ch, i, j]] = best;
                arg.push(idx);
            }
        }
    }
    (out, arg)
}

pub fn max_pool_backward<T: Real>(d_out: &Array3<T>, arg: &[u8], shape: (usize, usize, usize)) -> Array3<T> {
    let (c, ho, wo) = d_out.dim();
    let mut dx = Array3::<T>::zeros(shape);
    let mut n = 0;
    for ch in 0..c {
        for i in 0..ho {
            for j in 0..wo {
                let (a, b) = match arg[n] {
                    0 => (0, 0),
                    1 => (0, 1),
                    2 => (1, 0),
                    _ => (1, 1),
                };
                dx[[ch, 2 * i + a, 2 * j + b]] += d_out[[ch, i, j]];
                n += 1;
            }
        }
    }
    dx
}

const BLUR_TAPS: [f64; 3] = [0.25, 0.5, 0.25];

/// Blur with `[1,2,1]ᵀ[1,2,1]/16` (zero padding) then subsample by 2; output
/// `(i, j)` is centred on input `(2i, 2j)`.
pub fn blur_pool<T: Real>(x: &Array3<T>) -> Array3<T> {
    let (c, h, w) = x.dim();
    let (ho, wo) = (h / 2, w / 2);
    let mut out = Array3::<T>::zeros((c, ho, wo));
    for ch in 0..c {
        for i in 0..ho {
            for j in 0..wo {
                let mut acc = T::zero();
                for (a, ka) in BLUR_TAPS.iter().enumerate() {
                    let y = 2 * i as isize + a as isize - 1;
                    if y < 0 || y >= h as isize {
                        continue;
                    }
                    for (b, kb) in BLUR_TAPS.iter().enumerate() {
                        let xx = 2 * j as isize + b as isize - 1;
                        if xx < 0 || xx >= w as isize {
                            continue;
                        }
                        acc += T::of(ka * kb) * x[[ch, y as usize, xx as usize]];
                    }
                }
                out[[ch, i, j]] = acc;
            }
        }
    }
    out
}

pub fn blur_pool_backward<T: Real>(d_out: &Array3<T>, shape: (usize, usize, usize)) -> Array3<T> {
    let (_, h, w) = shape;
    let (c, ho, wo) = d_out.dim();
    let mut dx = Array3::<T>::zeros(shape);
    for ch in 0..c {
        for i in 0..ho {
            for j in 0..wo {
                let g = d_out[[ch, i, j]];
                for (a, ka) in BLUR_TAPS.iter().enumerate() {
                    let y = 2 * i as isize + a as isize - 1;
                    if y < 0 || y >= h as isize {
                        continue;
                    }
                    for (b, kb) in BLUR_TAPS.iter().enumerate() {
                        let xx = 2 * j as isize + b as isize - 1;
                        if xx < 0 || xx >= w as isize {
                            continue;
                        }
                        dx[[ch, y as usize, xx as usize]] += T::of(ka * kb) * g;
                    }
                }
            }
        }
    }
    dx
}

/// Nearest-neighbour 2× upsampling.
pub fn upsample<T: Real>(x: &Array3<T>) -> Array3<T> {
    let (c, h, w) = x.dim();
    Array3::from_shape_fn((c, 2 * h, 2 * w), |(ch, i, j)| x[[ch, i / 2, j / 2]])
}

pub fn upsample_backward<T: Real>(d_out: &Array3<T>) -> Array3<T> {
    let (c, h2, w2) = d_out.dim();
    let mut dx = Array3::<T>::zeros((c, h2 / 2, w2 / 2));
    for ((ch, i, j), &g) in d_out.indexed_iter() {
        dx[[ch, i / 2, j / 2]] += g;
    }
    dx
}

pub fn concat<T: Real>(a: &Array3<T>, b: &Array3<T>) -> Array3<T> {
    ndarray::concatenate(Axis(0), &[a.view(), b.view()]).expect("matching spatial dims")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(c: usize, h: usize, w: usize) -> Array3<f64> {
        Array3::from_shape_fn((c, h, w), |(a, b, d)| ((a * 31 + b * 7 + d) as f64 * 0.37).sin())
    }

    #[test]
    fn conv_matches_direct_sum() {
        let x = ramp(2, 5, 6);
        let mut conv = Conv::<f64>::zeros("t", 2, 3, 3);
        conv.weight = Array2::from_shape_fn((3, 18), |(o, i)| ((o * 18 + i) as f64 * 0.11).cos());
        conv.bias = Array1::from(vec![0.1, -0.2, 0.3]);
        let (y, _) = conv.forward(&x);
        for o in 0..3 {
            for i in 0..5 {
                for j in 0..6 {
                    let mut acc = conv.bias[o];
                    for c in 0..2 {
                        for dy in 0..3 {
                            for dx in 0..3 {
                                let (si, sj) = (i as isize + dy as isize - 1, j as isize + dx as isize - 1);
                                if si >= 0 && sj >= 0 && si < 5 && sj < 6 {
                                    acc += conv.weight[[o, (c * 3 + dy) * 3 + dx]] * x[[c, si as usize, sj as usize]];
                                }
                            }
                        }
                    }
                    assert!((y[[o, i, j]] - acc).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        // <im2col(x), y> == <x, col2im(y)>
        let x = ramp(2, 4, 5);
        let cols = im2col(&x, 3);
        let y = Array2::from_shape_fn(cols.dim(), |(a, b)| ((a * 3 + b) as f64 * 0.21).cos());
        let lhs: f64 = (&cols * &y).sum();
        let rhs: f64 = (&x * &col2im(&y, x.dim(), 3)).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn pooling_adjoints() {
        let x = ramp(3, 6, 8);
        let y = ramp(3, 3, 4).mapv(|v| v + 0.5);
        let lhs: f64 = (&blur_pool(&x) * &y).sum();
        let rhs: f64 = (&x * &blur_pool_backward(&y, x.dim())).sum();
        assert!((lhs - rhs).abs() < 1e-12);

        let up = ramp(3, 6, 8);
        let lhs: f64 = (&upsample(&y) * &up).sum();
        let rhs: f64 = (&y * &upsample_backward(&up)).sum();
        assert!((lhs - rhs).abs() < 1e-12);

        let (m, arg) = max_pool(&x);
        let g = max_pool_backward(&y, &arg, x.dim());
        assert!(((&m * &y).sum() - (&x * &g).sum()).abs() < 1e-12);
    }

    #[test]
    fn blur_pool_is_more_shift_stable_than_max_pool() {
        let impulse = |col: usize| {
            let mut x = Array3::<f64>::zeros((1, 8, 8));
            x[[0, 4, col]] = 1.0;
            x
        };
        let (a, b) = (impulse(3), impulse(4));
        let l2 = |p: &Array3<f64>, q: &Array3<f64>| (p - q).mapv(|v| v * v).sum().sqrt();
        let max_change = l2(&max_pool(&a).0, &max_pool(&b).0);
        let blur_change = l2(&blur_pool(&a), &blur_pool(&b));
        assert!(blur_change < max_change, "{blur_change} vs {max_change}");
        assert!((blur_pool(&Array3::from_elem((1, 8, 8), 1.0))[[0, 2, 2]] - 1.0).abs() < 1e-15);
    }
}
