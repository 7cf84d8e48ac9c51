//! Variational wavefunctions with analytic log-derivatives.
//!
//! Every model stores its parameters as one real vector. Complex parameters
//! are interleaved `(re, im)` pairs, so the Jacobian entry for the real part
//! of `z` is `∂_z log ψ` and the entry for the imaginary part is
//! `i ∂_z log ψ` (all models here are holomorphic in their parameters).

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::lattice::SpinConfig;

/// Anything that assigns a complex log-amplitude to a configuration.
///
/// A real part of `-∞` encodes an exact zero.
pub trait LogAmplitude: Sync {
    fn n_sites(&self) -> usize;

    /// `log ψ(x)` without validating the configuration size.
    fn log_amplitude_unchecked(&self, x: SpinConfig) -> Complex64;

    fn log_amplitude(&self, x: SpinConfig) -> Result<Complex64> {
        if x.n_sites() != self.n_sites() {
            return Err(Error::SizeMismatch {
                what: "configuration sites",
                expected: self.n_sites(),
                got: x.n_sites(),
            });
        }
        Ok(self.log_amplitude_unchecked(x))
    }

    /// `log ψ(x')` for every `x'` in `others`, given `log ψ(x)`.
    ///
    /// Implementations may exploit that `others` differ from `x` in a few
    /// sites; the default evaluates each one from scratch.
    fn log_amplitudes_near(&self, x: SpinConfig, others: &[SpinConfig], out: &mut Vec<Complex64>) {
        let _ = x;
        out.clear();
        out.extend(others.iter().map(|&y| self.log_amplitude_unchecked(y)));
    }
}

/// Real-encoded variational parameters with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector(Vec<f64>);

impl ParameterVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "parameter {i} is not finite ({})",
                values[i]
            )));
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    /// `log ψ(x) = Σ_i c_i σ_i`, with real or complex `c`.
    LogLinear { complex: bool },
    /// `log ψ(x) = Σ_i a_i σ_i + Σ_j log 2cosh(b_j + Σ_i W_ji σ_i)`.
    ComplexRbm { n_hidden: usize },
    /// `log ψ(x) = Σ_i θ_{i, x_i}`, one complex log-amplitude per site state.
    MeanFieldProduct,
}

impl ModelKind {
    pub fn n_params(&self, n_sites: usize) -> usize {
        match *self {
            ModelKind::LogLinear { complex: false } => n_sites,
            ModelKind::LogLinear { complex: true } => 2 * n_sites,
            ModelKind::ComplexRbm { n_hidden } => 2 * (n_sites + n_hidden + n_sites * n_hidden),
            ModelKind::MeanFieldProduct => 4 * n_sites,
        }
    }

    /// Whether `log ψ` is holomorphic in the complex parameters, i.e. every
    /// odd-indexed derivative is `i` times the preceding one.
    pub fn is_holomorphic(&self) -> bool {
        !matches!(self, ModelKind::LogLinear { complex: false })
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::LogLinear { .. } => "log-linear",
            ModelKind::ComplexRbm { .. } => "complex-rbm",
            ModelKind::MeanFieldProduct => "mean-field-product",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WavefunctionModel {
    kind: ModelKind,
    n_sites: usize,
    params: ParameterVector,
}

/// Overflow-safe `log(2 cosh z)`.
#[inline]
pub(crate) fn log_2cosh(z: Complex64) -> Complex64 {
    // cosh is even, so fold onto Re z ≥ 0 where 2cosh z = e^z (1 + e^{-2z}).
    let z = if z.re < 0.0 { -z } else { z };
    let tail = (-2.0 * z).exp();
    if z.re > 20.0 {
        z + tail
    } else {
        z + (Complex64::new(1.0, 0.0) + tail).ln()
    }
}

impl WavefunctionModel {
    pub fn new(kind: ModelKind, n_sites: usize, params: Vec<f64>) -> Result<Self> {
        if n_sites == 0 || n_sites > crate::lattice::MAX_SITES {
            return Err(Error::InvalidArgument(format!(
                "model size {n_sites} outside 1..={}",
                crate::lattice::MAX_SITES
            )));
        }
        let expected = kind.n_params(n_sites);
        if params.len() != expected {
            return Err(Error::SizeMismatch {
                what: "parameter vector",
                expected,
                got: params.len(),
            });
        }
        Ok(Self {
            kind,
            n_sites,
            params: ParameterVector::new(params)?,
        })
    }

    /// All parameters zero.
    pub fn zeros(kind: ModelKind, n_sites: usize) -> Result<Self> {
        Self::new(kind, n_sites, vec![0.0; kind.n_params(n_sites)])
    }

    /// Parameters drawn uniformly from `[-scale, scale]`.
    pub fn random(kind: ModelKind, n_sites: usize, scale: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = (0..kind.n_params(n_sites))
            .map(|_| scale * (2.0 * rng.random::<f64>() - 1.0))
            .collect();
        Self::new(kind, n_sites, params)
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        self.params.as_slice()
    }

    /// Returns a copy with `params + delta`; `self` is left untouched.
    pub fn perturb(&self, delta: &[f64]) -> Result<Self> {
        if delta.len() != self.n_params() {
            return Err(Error::SizeMismatch {
                what: "parameter update",
                expected: self.n_params(),
                got: delta.len(),
            });
        }
        let params = self
            .params()
            .iter()
            .zip(delta)
            .map(|(p, d)| p + d)
            .collect();
        Self::new(self.kind, self.n_sites, params)
    }

    pub fn with_params(&self, params: Vec<f64>) -> Result<Self> {
        Self::new(self.kind, self.n_sites, params)
    }

    #[inline]
    fn complex_param(&self, k: usize) -> Complex64 {
        let p = self.params();
        Complex64::new(p[2 * k], p[2 * k + 1])
    }

    fn rbm_hidden(&self) -> usize {
        match self.kind {
            ModelKind::ComplexRbm { n_hidden } => n_hidden,
            _ => 0,
        }
    }

    /// Hidden pre-activations `θ_j(x) = b_j + Σ_i W_ji σ_i`.
    fn rbm_theta(&self, x: SpinConfig, theta: &mut Vec<Complex64>) {
        let n = self.n_sites;
        let m = self.rbm_hidden();
        theta.clear();
        for j in 0..m {
            let mut t = self.complex_param(n + j);
            let row = n + m + j * n;
            for i in 0..n {
                let w = self.complex_param(row + i);
                if x.is_up(i) {
                    t += w;
                } else {
                    t -= w;
                }
            }
            theta.push(t);
        }
    }

    fn rbm_visible(&self, x: SpinConfig) -> Complex64 {
        (0..self.n_sites)
            .map(|i| self.complex_param(i) * x.sigma(i))
            .sum()
    }

    pub fn log_amplitude(&self, x: SpinConfig) -> Result<Complex64> {
        LogAmplitude::log_amplitude(self, x)
    }

    /// `∂ log ψ(x) / ∂θ_k` for every real-encoded parameter `θ_k`.
    pub fn log_derivatives(&self, x: SpinConfig) -> Result<Vec<Complex64>> {
        if x.n_sites() != self.n_sites {
            return Err(Error::SizeMismatch {
                what: "configuration sites",
                expected: self.n_sites,
                got: x.n_sites(),
            });
        }
        let mut out = vec![Complex64::default(); self.n_params()];
        self.log_derivatives_into(x, &mut out);
        Ok(out)
    }

    /// Writes the Jacobian row of `x` into `out` (length `n_params`).
    pub fn log_derivatives_into(&self, x: SpinConfig, out: &mut [Complex64]) {
        let n = self.n_sites;
        let i_unit = Complex64::new(0.0, 1.0);
        match self.kind {
            ModelKind::LogLinear { complex: false } => {
                for (i, o) in out.iter_mut().enumerate().take(n) {
                    *o = Complex64::new(x.sigma(i), 0.0);
                }
            }
            ModelKind::LogLinear { complex: true } => {
                for i in 0..n {
                    let s = x.sigma(i);
                    out[2 * i] = Complex64::new(s, 0.0);
                    out[2 * i + 1] = Complex64::new(0.0, s);
                }
            }
            ModelKind::MeanFieldProduct => {
                for i in 0..n {
                    let up = x.is_up(i);
                    let (d, u) = if up { (0.0, 1.0) } else { (1.0, 0.0) };
                    out[4 * i] = Complex64::new(d, 0.0);
                    out[4 * i + 1] = Complex64::new(0.0, d);
                    out[4 * i + 2] = Complex64::new(u, 0.0);
                    out[4 * i + 3] = Complex64::new(0.0, u);
                }
            }
            ModelKind::ComplexRbm { n_hidden: m } => {
                let mut theta = Vec::with_capacity(m);
                self.rbm_theta(x, &mut theta);
                for i in 0..n {
                    let s = x.sigma(i);
                    out[2 * i] = Complex64::new(s, 0.0);
                    out[2 * i + 1] = Complex64::new(0.0, s);
                }
                for (j, t) in theta.iter().enumerate() {
                    let th = t.tanh();
                    let k = n + j;
                    out[2 * k] = th;
                    out[2 * k + 1] = i_unit * th;
                    let row = n + m + j * n;
                    for i in 0..n {
                        let d = th * x.sigma(i);
                        out[2 * (row + i)] = d;
                        out[2 * (row + i) + 1] = i_unit * d;
                    }
                }
            }
        }
    }
}

impl LogAmplitude for WavefunctionModel {
    fn n_sites(&self) -> usize {
        self.n_sites
    }

    fn log_amplitude_unchecked(&self, x: SpinConfig) -> Complex64 {
        let n = self.n_sites;
        let p = self.params();
        match self.kind {
            ModelKind::LogLinear { complex: false } => {
                Complex64::new((0..n).map(|i| p[i] * x.sigma(i)).sum(), 0.0)
            }
            ModelKind::LogLinear { complex: true } => {
                (0..n).map(|i| self.complex_param(i) * x.sigma(i)).sum()
            }
            ModelKind::MeanFieldProduct => (0..n)
                .map(|i| self.complex_param(2 * i + usize::from(x.is_up(i))))
                .sum(),
            ModelKind::ComplexRbm { n_hidden } => {
                let mut theta = Vec::with_capacity(n_hidden);
                self.rbm_theta(x, &mut theta);
                self.rbm_visible(x) + theta.iter().map(|&t| log_2cosh(t)).sum::<Complex64>()
            }
        }
    }

    fn log_amplitudes_near(&self, x: SpinConfig, others: &[SpinConfig], out: &mut Vec<Complex64>) {
        out.clear();
        let ModelKind::ComplexRbm { n_hidden: m } = self.kind else {
            out.extend(others.iter().map(|&y| self.log_amplitude_unchecked(y)));
            return;
        };
        let n = self.n_sites;
        let mut theta = Vec::with_capacity(m);
        self.rbm_theta(x, &mut theta);
        let visible = self.rbm_visible(x);
        let mut shifted = vec![Complex64::default(); m];
        for &y in others {
            let diff = x.bits() ^ y.bits();
            if diff.count_ones() as usize * 2 > n {
                out.push(self.log_amplitude_unchecked(y));
                continue;
            }
            shifted.copy_from_slice(&theta);
            let mut vis = visible;
            let mut rest = diff;
            while rest != 0 {
                let i = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                // σ_i → -σ_i changes every linear term by -2 σ_i (coefficient)
                let s2 = 2.0 * x.sigma(i);
                vis -= self.complex_param(i) * s2;
                for (j, t) in shifted.iter_mut().enumerate() {
                    *t -= self.complex_param(n + m + j * n + i) * s2;
                }
            }
            out.push(vis + shifted.iter().map(|&t| log_2cosh(t)).sum::<Complex64>());
        }
    }
}

/// Row-major `N_s × N_p` matrix of `∂_{θ_i} log ψ(x_μ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianMatrix {
    n_rows: usize,
    n_cols: usize,
    data: Vec<Complex64>,
}

impl JacobianMatrix {
    pub fn compute(model: &WavefunctionModel, configs: &[SpinConfig]) -> Result<Self> {
        use rayon::prelude::*;
        if let Some(x) = configs.iter().find(|x| x.n_sites() != model.n_sites) {
            return Err(Error::SizeMismatch {
                what: "configuration sites",
                expected: model.n_sites,
                got: x.n_sites(),
            });
        }
        let n_cols = model.n_params();
        let mut data = vec![Complex64::default(); configs.len() * n_cols];
        if n_cols > 0 {
            data.par_chunks_mut(n_cols)
                .zip(configs.par_iter())
                .for_each(|(row, &x)| model.log_derivatives_into(x, row));
        }
        Ok(Self {
            n_rows: configs.len(),
            n_cols,
            data,
        })
    }

    pub fn from_rows(n_cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if n_cols == 0 || data.len() % n_cols != 0 {
            return Err(Error::InvalidArgument(format!(
                "{} entries do not form rows of length {n_cols}",
                data.len()
            )));
        }
        Ok(Self {
            n_rows: data.len() / n_cols,
            n_cols,
            data,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, mu: usize) -> &[Complex64] {
        &self.data[mu * self.n_cols..(mu + 1) * self.n_cols]
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }
}
