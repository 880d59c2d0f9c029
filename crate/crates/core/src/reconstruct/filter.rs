use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::ParallelSinogram;
use crate::exec::Exec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterKind {
    #[default]
    RamLak,
    SheppLogan,
}

/// Transform length used for `n` offsets: `2n` rounded up to a power of two.
pub fn padded_len(n: usize) -> usize {
    (2 * n).next_power_of_two()
}

/// Sampled frequency response on a padded grid of length `len`, for offset
/// spacing `ds`. Index `k` holds frequency `min(k, len − k)/(len·ds)`.
pub fn frequency_response(kind: FilterKind, len: usize, ds: f64) -> Vec<f64> {
    (0..len)
        .map(|k| {
            let f = k.min(len - k) as f64 / (len as f64 * ds);
            match kind {
                FilterKind::RamLak => f,
                FilterKind::SheppLogan => {
                    let x = PI * f * ds;
                    if x == 0.0 {
                        0.0
                    } else {
                        f * x.sin() / x
                    }
                }
            }
        })
        .collect()
}

/// Ramp-filters every angle row.
///
/// Rows are embedded in a buffer of [`padded_len`] samples whose tail is
/// filled by replicating the row's edge values (right edge first, then the
/// left edge, so the circular wrap is continuous). For data with compact
/// support this is the usual zero padding; for a constant row it keeps the
/// whole buffer at DC, which the ramp removes exactly.
pub fn ramp_filter(parallel: &ParallelSinogram, kind: FilterKind, exec: Exec) -> ParallelSinogram {
    let (_, n) = parallel.data.dim();
    let len = padded_len(n);
    let response = frequency_response(kind, len, parallel.offset_step());
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(len);
    let inv = planner.plan_fft_inverse(len);
    let scale = 1.0 / len as f64;

    let mut out = parallel.clone();
    let slice = out.data.as_slice_mut().expect("standard layout");
    exec.for_each_row(slice, n, |_, row| {
        let mut buf: Vec<Complex<f64>> = Vec::with_capacity(len);
        buf.extend(row.iter().map(|&v| Complex::new(v, 0.0)));
        let tail = len - n;
        let right = row[n - 1];
        let left = row[0];
        buf.extend((0..tail).map(|t| Complex::new(if t < tail / 2 { right } else { left }, 0.0)));
        fwd.process(&mut buf);
        for (c, h) in buf.iter_mut().zip(&response) {
            *c *= h * scale;
        }
        inv.process(&mut buf);
        for (v, c) in row.iter_mut().zip(&buf) {
            *v = c.re;
        }
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn par(rows: Vec<Vec<f64>>) -> ParallelSinogram {
        let n = rows[0].len();
        let flat: Vec<f64> = rows.concat();
        ParallelSinogram {
            data: Array2::from_shape_vec((flat.len() / n, n), flat).unwrap(),
            max_offset: 1.0,
        }
    }

    /// Direct O(N²) inverse DFT of a real even response, evaluated at `m`.
    fn naive_kernel(response: &[f64], m: isize) -> f64 {
        let n = response.len();
        (0..n)
            .map(|k| response[k] * (2.0 * PI * k as f64 * m as f64 / n as f64).cos())
            .sum::<f64>()
            / n as f64
    }

    #[test]
    fn padded_lengths() {
        assert_eq!(padded_len(144), 512);
        assert_eq!(padded_len(64), 128);
        assert_eq!(padded_len(5), 16);
    }

    #[test]
    fn zero_stays_zero() {
        let p = par(vec![vec![0.0; 64]; 3]);
        for kind in [FilterKind::RamLak, FilterKind::SheppLogan] {
            let q = ramp_filter(&p, kind, Exec::Sequential);
            assert!(q.data.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn constant_row_is_annihilated() {
        for n in [64usize, 100, 144] {
            let c = 3.7;
            let p = par(vec![vec![c; n]; 2]);
            for kind in [FilterKind::RamLak, FilterKind::SheppLogan] {
                let q = ramp_filter(&p, kind, Exec::Sequential);
                let max = q.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                assert!(max < 1e-6 * c, "n={n} max={max}");
            }
        }
    }

    #[test]
    fn impulse_response_matches_frequency_oracle() {
        let n = 65;
        let mut row = vec![0.0; n];
        let center = n / 2;
        row[center] = 1.0;
        let p = par(vec![row]);
        let ds = p.offset_step();
        let len = padded_len(n);
        for kind in [FilterKind::RamLak, FilterKind::SheppLogan] {
            let q = ramp_filter(&p, kind, Exec::Sequential);
            let resp = frequency_response(kind, len, ds);
            for m in 0..n {
                let want = naive_kernel(&resp, m as isize - center as isize);
                assert!((q.data[[0, m]] - want).abs() < 1e-9 / ds, "kind {kind:?} m={m}");
            }
        }
        // Ram-Lak peak: Δs · 1/(4Δs²)
        let q = ramp_filter(&p, FilterKind::RamLak, Exec::Sequential);
        assert!((q.data[[0, center]] - 1.0 / (4.0 * ds)).abs() < 1e-9 / ds);
        // odd neighbours approach −1/(π² k² Δs)
        let k1 = q.data[[0, center + 1]] * ds;
        assert!((k1 + 1.0 / (PI * PI)).abs() < 0.01, "{k1}");
        let k2 = q.data[[0, center + 2]] * ds;
        assert!(k2.abs() < 0.01, "{k2}");
    }

    #[test]
    fn policies_agree() {
        let rows: Vec<Vec<f64>> = (0..8)
            .map(|r| (0..40).map(|i| ((r * 40 + i) as f64 * 0.37).sin()).collect())
            .collect();
        let p = par(rows);
        let a = ramp_filter(&p, FilterKind::RamLak, Exec::Sequential);
        let b = ramp_filter(&p, FilterKind::RamLak, Exec::Parallel);
        assert_eq!(a.data, b.data);
    }
}
