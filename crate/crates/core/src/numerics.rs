//! Small numerical kernels shared by the estimators.

use nalgebra::DMatrix;
use num_complex::Complex64;

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.carry += (self.sum - t) + v;
        } else {
            self.carry += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = CompensatedSum::new();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

pub fn compensated_sum_complex(values: impl IntoIterator<Item = Complex64>) -> Complex64 {
    let mut re = CompensatedSum::new();
    let mut im = CompensatedSum::new();
    for v in values {
        re.add(v.re);
        im.add(v.im);
    }
    Complex64::new(re.value(), im.value())
}

/// `log Σ exp(v)`, ignoring `-∞` entries; `-∞` when all are.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + compensated_sum(values.iter().map(|v| (v - max).exp())).ln()
}

/// Normalizes log-weights into probabilities. `None` when every weight is zero.
pub fn softmax(log_w: &[f64]) -> Option<Vec<f64>> {
    let lse = log_sum_exp(log_w);
    if !lse.is_finite() {
        return None;
    }
    Some(log_w.iter().map(|v| (v - lse).exp()).collect())
}

pub(crate) const GRAM_BLOCK: usize = 256;

/// `Σ_μ w_μ Re(conj(A_μi) A_μj)` for row-major complex `a` (`n_rows × n_cols`).
///
/// Rows are processed in fixed blocks whose partial products are summed in
/// block order, so the result does not depend on the thread count.
pub fn weighted_real_gram(a: &[Complex64], weights: &[f64], n_cols: usize) -> DMatrix<f64> {
    use rayon::prelude::*;
    let n_rows = weights.len();
    debug_assert_eq!(a.len(), n_rows * n_cols);
    let blocks: Vec<DMatrix<f64>> = (0..n_rows.div_ceil(GRAM_BLOCK))
        .into_par_iter()
        .map(|b| {
            let lo = b * GRAM_BLOCK;
            let hi = (lo + GRAM_BLOCK).min(n_rows);
            let rows = hi - lo;
            // real and imaginary parts scaled by sqrt(w), one column per
            // sample so that the product below runs through gemm
            let mut stacked = DMatrix::<f64>::zeros(n_cols, 2 * rows);
            for r in 0..rows {
                let s = weights[lo + r].sqrt();
                let row = &a[(lo + r) * n_cols..(lo + r + 1) * n_cols];
                let (mut re, mut im) = stacked.columns_range_pair_mut(2 * r, 2 * r + 1);
                for (c, z) in row.iter().enumerate() {
                    re[c] = s * z.re;
                    im[c] = s * z.im;
                }
            }
            &stacked * stacked.transpose()
        })
        .collect();
    let mut out = DMatrix::<f64>::zeros(n_cols, n_cols);
    for b in blocks {
        out += b;
    }
    out.fill_lower_triangle_with_upper_triangle();
    out
}

/// [`weighted_real_gram`] for holomorphic parametrizations, where column
/// `2k+1` equals `i` times column `2k`.
///
/// With `A_k` the even columns, `Re(A_k* A_l)` fills the diagonal 2×2 blocks
/// and `Im(A_k* A_l)` the off-diagonal ones, so the product runs over half as
/// many columns.
pub fn weighted_real_gram_holomorphic(a: &[Complex64], weights: &[f64], n_cols: usize) -> DMatrix<f64> {
    use rayon::prelude::*;
    debug_assert_eq!(n_cols % 2, 0);
    let n_rows = weights.len();
    let half = n_cols / 2;
    let blocks: Vec<DMatrix<f64>> = (0..n_rows.div_ceil(GRAM_BLOCK))
        .into_par_iter()
        .map(|b| {
            let lo = b * GRAM_BLOCK;
            let hi = (lo + GRAM_BLOCK).min(n_rows);
            // column r holds sqrt(w) [Re A_r, Im A_r] over the even parameters
            let mut stacked = DMatrix::<f64>::zeros(n_cols, hi - lo);
            for r in 0..hi - lo {
                let s = weights[lo + r].sqrt();
                let row = &a[(lo + r) * n_cols..(lo + r + 1) * n_cols];
                let mut col = stacked.column_mut(r);
                for k in 0..half {
                    let z = row[2 * k];
                    col[k] = s * z.re;
                    col[half + k] = s * z.im;
                }
            }
            &stacked * stacked.transpose()
        })
        .collect();
    let mut g = DMatrix::<f64>::zeros(n_cols, n_cols);
    for b in blocks {
        g += b;
    }
    let mut out = DMatrix::<f64>::zeros(n_cols, n_cols);
    for k in 0..half {
        for l in 0..half {
            let re = g[(k, l)] + g[(half + k, half + l)];
            let im = g[(k, half + l)] - g[(half + k, l)];
            out[(2 * k, 2 * l)] = re;
            out[(2 * k + 1, 2 * l + 1)] = re;
            out[(2 * k, 2 * l + 1)] = -im;
            out[(2 * k + 1, 2 * l)] = im;
        }
    }
    out
}
