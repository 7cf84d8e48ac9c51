//! Self-normalized importance-sampling estimators.
//!
//! A batch drawn from `q` estimates Born-averages through the weights
//! `w(x) = |ψ(x)|² / q(x)`. Every sample also carries a probability mass
//! `m_μ`: `1/N_s` for Markov chains, the exact `q(x_μ)` for an enumerated
//! basis. With `w̃_μ = m_μ w_μ / Σ m w` the same formulas then yield plug-in
//! estimates for MCMC batches and exact population values for enumerations.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::ansatz::JacobianMatrix;
use crate::error::{Error, Result};
use crate::numerics::{
    compensated_sum, compensated_sum_complex, log_sum_exp, softmax, weighted_real_gram,
    CompensatedSum,
};
use crate::sampler::{SampleBatch, SamplingMode};

/// Variance floor below which a component counts as noiseless.
pub const EPS_VAR: f64 = 1e-30;
/// Gradient floor below which a noiseless component contributes zero SNR.
pub const EPS_F: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq)]
pub struct WeightSet {
    log_w: Vec<f64>,
    w_tilde: Vec<f64>,
    masses: Vec<f64>,
    mode: SamplingMode,
}

impl WeightSet {
    /// Raw log-weights `log |ψ|²/q` (up to a constant for MCMC batches).
    pub fn log_w(&self) -> &[f64] {
        &self.log_w
    }

    /// Self-normalized weights; they sum to one.
    pub fn w_tilde(&self) -> &[f64] {
        &self.w_tilde
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn mode(&self) -> SamplingMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.w_tilde.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w_tilde.is_empty()
    }

    /// `w̃_μ² / m_μ`, the per-sample factor of every delta-method variance.
    #[inline]
    pub fn variance_factor(&self, mu: usize) -> f64 {
        if self.masses[mu] > 0.0 {
            self.w_tilde[mu] * self.w_tilde[mu] / self.masses[mu]
        } else {
            0.0
        }
    }

    fn check_len(&self, what: &'static str, got: usize) -> Result<()> {
        if got != self.len() {
            return Err(Error::SizeMismatch {
                what,
                expected: self.len(),
                got,
            });
        }
        Ok(())
    }

    fn check_variance_samples(&self) -> Result<()> {
        if self.mode == SamplingMode::Mcmc && self.len() < 2 {
            return Err(Error::InsufficientSamples {
                required: 2,
                got: self.len(),
            });
        }
        Ok(())
    }
}

/// Importance weights of a batch toward the Born distribution `|ψ|²`.
pub fn compute_weights(batch: &SampleBatch) -> Result<WeightSet> {
    let alpha = batch.alpha();
    let re: Vec<f64> = batch.log_amps().iter().map(|l| l.re).collect();
    let mut log_w: Vec<f64> = re
        .iter()
        .map(|&r| {
            if r == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                (2.0 - alpha) * r
            }
        })
        .collect();
    let (masses, w_tilde) = match batch.exact_probs() {
        Some(q) => {
            // normalize so that E_q[w] = 1
            let log_born: Vec<f64> = re.iter().map(|&r| 2.0 * r).collect();
            let shift = log_sum_exp(batch.log_q_unnorm()) - log_sum_exp(&log_born);
            for lw in log_w.iter_mut() {
                *lw += shift;
            }
            let combined: Vec<f64> = q
                .iter()
                .zip(&log_w)
                .map(|(&qm, &lw)| if qm > 0.0 { qm.ln() + lw } else { f64::NEG_INFINITY })
                .collect();
            (q.to_vec(), softmax(&combined).ok_or(Error::DegenerateWeights)?)
        }
        None => {
            let n = batch.len();
            (vec![1.0 / n as f64; n], softmax(&log_w).ok_or(Error::DegenerateWeights)?)
        }
    };
    Ok(WeightSet {
        log_w,
        w_tilde,
        masses,
        mode: batch.mode(),
    })
}

/// `Σ_μ w̃_μ v_μ`.
pub fn snis_mean(values: &[Complex64], weights: &WeightSet) -> Result<Complex64> {
    weights.check_len("local values", values.len())?;
    Ok(compensated_sum_complex(
        values.iter().zip(weights.w_tilde()).map(|(v, w)| v * *w),
    ))
}

fn weighted_column_means(data: &[Complex64], n_cols: usize, w: &[f64]) -> Vec<Complex64> {
    let mut re = vec![CompensatedSum::new(); n_cols];
    let mut im = vec![CompensatedSum::new(); n_cols];
    for (row, &wm) in data.chunks_exact(n_cols).zip(w) {
        if wm == 0.0 {
            continue;
        }
        for ((r, i), z) in re.iter_mut().zip(im.iter_mut()).zip(row) {
            r.add(wm * z.re);
            i.add(wm * z.im);
        }
    }
    re.iter()
        .zip(&im)
        .map(|(r, i)| Complex64::new(r.value(), i.value()))
        .collect()
}

fn weighted_real_column_sums(data: &[f64], n_cols: usize, w: impl Fn(usize) -> f64) -> Vec<f64> {
    let mut acc = vec![CompensatedSum::new(); n_cols];
    for (mu, row) in data.chunks_exact(n_cols).enumerate() {
        let wm = w(mu);
        if wm == 0.0 {
            continue;
        }
        for (a, g) in acc.iter_mut().zip(row) {
            a.add(wm * g);
        }
    }
    acc.iter().map(|a| a.value()).collect()
}

/// Jacobian rows centered by their weighted column means.
#[derive(Debug, Clone, PartialEq)]
pub struct CenteredJacobian {
    /// Row-major `ΔO_μi = O_μi − Ō_i`.
    pub data: Vec<Complex64>,
    /// Weighted column means `Ō_i`.
    pub mean: Vec<Complex64>,
    pub n_cols: usize,
}

impl CenteredJacobian {
    pub fn row(&self, mu: usize) -> &[Complex64] {
        &self.data[mu * self.n_cols..(mu + 1) * self.n_cols]
    }
}

pub fn centered_jacobian(jac: &JacobianMatrix, weights: &WeightSet) -> Result<CenteredJacobian> {
    weights.check_len("Jacobian rows", jac.n_rows())?;
    let n_cols = jac.n_cols();
    let mean = weighted_column_means(jac.data(), n_cols, weights.w_tilde());
    let mut data = jac.data().to_vec();
    data.par_chunks_mut(n_cols.max(1)).for_each(|row| {
        for (z, m) in row.iter_mut().zip(&mean) {
            *z -= m;
        }
    });
    Ok(CenteredJacobian { data, mean, n_cols })
}

/// Per-sample gradient components `f_i(x_μ) = 2 Re{ΔO_μi* Δℓ_μ}`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalGradients {
    n_rows: usize,
    n_cols: usize,
    data: Vec<f64>,
}

impl LocalGradients {
    pub fn new(n_cols: usize, data: Vec<f64>) -> Self {
        Self {
            n_rows: if n_cols == 0 { 0 } else { data.len() / n_cols },
            n_cols,
            data,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, mu: usize) -> &[f64] {
        &self.data[mu * self.n_cols..(mu + 1) * self.n_cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// `F̂_i = Σ_μ w̃_μ f_i(x_μ)`.
    pub fn mean(&self, weights: &WeightSet) -> Result<Vec<f64>> {
        weights.check_len("local gradient rows", self.n_rows)?;
        Ok(weighted_real_column_sums(&self.data, self.n_cols, |mu| {
            weights.w_tilde()[mu]
        }))
    }

    /// `V̂_i = Σ_μ (w̃_μ²/m_μ) (f_i(x_μ) − F̂_i)²`.
    pub fn variance(&self, weights: &WeightSet, f_hat: &[f64]) -> Result<Vec<f64>> {
        weights.check_len("local gradient rows", self.n_rows)?;
        weights.check_variance_samples()?;
        if f_hat.len() != self.n_cols {
            return Err(Error::SizeMismatch {
                what: "gradient",
                expected: self.n_cols,
                got: f_hat.len(),
            });
        }
        let sq: Vec<f64> = self
            .data
            .par_chunks(self.n_cols.max(1))
            .flat_map_iter(|row| row.iter().zip(f_hat).map(|(g, f)| (g - f) * (g - f)))
            .collect();
        Ok(weighted_real_column_sums(&sq, self.n_cols, |mu| {
            weights.variance_factor(mu)
        }))
    }
}

pub fn local_gradients(
    jac: &JacobianMatrix,
    values: &[Complex64],
    weights: &WeightSet,
) -> Result<LocalGradients> {
    weights.check_len("local values", values.len())?;
    let d_o = centered_jacobian(jac, weights)?;
    let mean = snis_mean(values, weights)?;
    Ok(local_gradients_from_centered(&d_o, values, mean))
}

/// Rows `2 Re{ΔO_μi* (v_μ − mean)}`.
pub fn local_gradients_from_centered(
    d_o: &CenteredJacobian,
    values: &[Complex64],
    mean: Complex64,
) -> LocalGradients {
    let n_cols = d_o.n_cols;
    let mut data = vec![0.0; d_o.data.len()];
    data.par_chunks_mut(n_cols.max(1))
        .zip(d_o.data.par_chunks(n_cols.max(1)))
        .zip(values.par_iter())
        .for_each(|((g, o), v)| {
            let dl = v - mean;
            for (gi, oi) in g.iter_mut().zip(o) {
                *gi = 2.0 * (oi.conj() * dl).re;
            }
        });
    LocalGradients::new(n_cols, data)
}

/// `F̂_i = Σ_μ w̃_μ 2 Re{(O_μi − Ō_i)* (ℓ_μ − ℓ̄)}`.
pub fn gradient_estimate(
    jac: &JacobianMatrix,
    values: &[Complex64],
    weights: &WeightSet,
) -> Result<Vec<f64>> {
    local_gradients(jac, values, weights)?.mean(weights)
}

/// Delta-method per-sample variance, so that `Var[F̂_i] ≈ V̂_i / N_s`.
pub fn component_variance(
    jac: &JacobianMatrix,
    values: &[Complex64],
    weights: &WeightSet,
    f_hat: &[f64],
) -> Result<Vec<f64>> {
    local_gradients(jac, values, weights)?.variance(weights, f_hat)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnrObjective {
    pub snr: Vec<f64>,
    pub l_is: f64,
}

pub fn component_snr(f: f64, v: f64) -> f64 {
    if f.abs() < EPS_F && v < EPS_VAR {
        0.0
    } else {
        f.abs() / v.max(EPS_VAR).sqrt()
    }
}

/// Per-sample SNR of each component and their average `ℒ_IS`.
pub fn snr_and_objective(f_hat: &[f64], variances: &[f64]) -> Result<SnrObjective> {
    if f_hat.len() != variances.len() {
        return Err(Error::SizeMismatch {
            what: "variance vector",
            expected: f_hat.len(),
            got: variances.len(),
        });
    }
    let snr: Vec<f64> = f_hat
        .iter()
        .zip(variances)
        .map(|(&f, &v)| component_snr(f, v))
        .collect();
    let l_is = if snr.is_empty() {
        0.0
    } else {
        compensated_sum(snr.iter().copied()) / snr.len() as f64
    };
    Ok(SnrObjective { snr, l_is })
}

/// `S_ij = Re Σ_μ w̃_μ ΔO_μi* ΔO_μj`.
pub fn qgt_estimate(jac: &JacobianMatrix, weights: &WeightSet) -> Result<DMatrix<f64>> {
    let d_o = centered_jacobian(jac, weights)?;
    Ok(weighted_real_gram(&d_o.data, weights.w_tilde(), jac.n_cols()))
}

/// Normalized effective sample size `E_q[w]² / E_q[w²]` in `(0, 1]`.
pub fn effective_sample_size(weights: &WeightSet) -> f64 {
    let s = compensated_sum((0..weights.len()).map(|mu| weights.variance_factor(mu)));
    1.0 / s
}

/// Plug-in bias shrinkage `ρ₀ = E_q[w²(μ − X)] / (μ E_q[w]²)`.
pub fn shrinkage_factor(weights: &WeightSet, values: &[f64], mean: f64) -> Result<f64> {
    weights.check_len("values", values.len())?;
    let scale = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if !mean.is_finite() || mean.abs() <= f64::EPSILON * scale || mean == 0.0 {
        return Err(Error::Rho0Undefined);
    }
    let num = compensated_sum(
        values
            .iter()
            .enumerate()
            .map(|(mu, x)| weights.variance_factor(mu) * (mean - x)),
    );
    Ok(num / mean)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EssAndBias {
    pub ess: f64,
    /// `None` when the mean vanishes and `ρ₀` is undefined.
    pub rho0: Option<f64>,
}

pub fn ess_and_bias(weights: &WeightSet, values: &[f64], mean: f64) -> Result<EssAndBias> {
    let ess = effective_sample_size(weights);
    let rho0 = match shrinkage_factor(weights, values, mean) {
        Ok(r) => Some(r),
        Err(Error::Rho0Undefined) => None,
        Err(e) => return Err(e),
    };
    Ok(EssAndBias { ess, rho0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StabilityBounds {
    pub min_samples: usize,
    pub max_samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Stability {
    pub reliable: bool,
    pub recommended_n_samples: usize,
}

/// Reliable once `√N_s · ℒ_IS ≥ 1`; recommends `⌈1/ℒ_IS²⌉` samples.
pub fn stability_criterion(l_is: f64, n_samples: usize, bounds: StabilityBounds) -> Stability {
    let reliable = (n_samples as f64).sqrt() * l_is >= 1.0;
    let recommended = if l_is > 0.0 && l_is.is_finite() {
        let r = (1.0 / (l_is * l_is)).ceil();
        if r >= bounds.max_samples as f64 {
            bounds.max_samples
        } else {
            (r as usize).max(bounds.min_samples)
        }
    } else {
        bounds.max_samples
    };
    Stability {
        reliable,
        recommended_n_samples: recommended,
    }
}

/// All estimates of one optimization round.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorReport {
    pub f_hat: Vec<f64>,
    pub component_variance: Vec<f64>,
    pub snr: Vec<f64>,
    pub l_is: f64,
    pub ess: f64,
    pub rho0: Option<f64>,
    pub energy: f64,
    pub energy_variance: f64,
    pub n_samples: usize,
    pub acceptance_rate: Option<f64>,
}

/// Everything the optimizer needs from one batch, computed in one pass.
#[derive(Debug, Clone)]
pub struct BatchEstimates {
    pub report: EstimatorReport,
    pub local_gradients: LocalGradients,
    pub qgt: DMatrix<f64>,
    pub mean_value: Complex64,
}

pub fn estimate(
    batch: &SampleBatch,
    jac: &JacobianMatrix,
    values: &[Complex64],
    weights: &WeightSet,
) -> Result<BatchEstimates> {
    weights.check_len("local values", values.len())?;
    let d_o = centered_jacobian(jac, weights)?;
    let mean = snis_mean(values, weights)?;
    let g = local_gradients_from_centered(&d_o, values, mean);
    let f_hat = g.mean(weights)?;
    let var = g.variance(weights, &f_hat)?;
    let SnrObjective { snr, l_is } = snr_and_objective(&f_hat, &var)?;
    let re: Vec<f64> = values.iter().map(|v| v.re).collect();
    let EssAndBias { ess, rho0 } = ess_and_bias(weights, &re, mean.re)?;
    let energy_variance = compensated_sum(
        values
            .iter()
            .zip(weights.w_tilde())
            .map(|(v, w)| w * (v - mean).norm_sqr()),
    );
    let qgt = weighted_real_gram(&d_o.data, weights.w_tilde(), jac.n_cols());
    Ok(BatchEstimates {
        report: EstimatorReport {
            f_hat,
            component_variance: var,
            snr,
            l_is,
            ess,
            rho0,
            energy: mean.re,
            energy_variance,
            n_samples: batch.len(),
            acceptance_rate: batch.acceptance_rate(),
        },
        local_gradients: g,
        qgt,
        mean_value: mean,
    })
}

/// Kullback-Leibler divergence `Σ a log(a/b)` with `0 log 0 = 0`.
pub fn kl_divergence(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::SizeMismatch {
            what: "distribution",
            expected: a.len(),
            got: b.len(),
        });
    }
    let mut acc = CompensatedSum::new();
    for (&p, &q) in a.iter().zip(b) {
        if p > 0.0 {
            if q <= 0.0 {
                return Ok(f64::INFINITY);
            }
            acc.add(p * (p / q).ln());
        }
    }
    Ok(acc.value().max(0.0))
}

/// Exact reference distributions for the gradient of one state.
///
/// Built from an enumerated batch; `f_i(x)` and `F_i` are then exact, and
/// any sampling distribution `q` over the same basis can be scored.
#[derive(Debug, Clone)]
pub struct ReferenceDistributions {
    born: Vec<f64>,
    local: LocalGradients,
    f: Vec<f64>,
}

impl ReferenceDistributions {
    pub fn from_exact(batch: &SampleBatch, jac: &JacobianMatrix, values: &[Complex64]) -> Result<Self> {
        if batch.mode() != SamplingMode::Exact {
            return Err(Error::OracleOnly(
                "reference distributions need an enumerated batch".into(),
            ));
        }
        let weights = compute_weights(batch)?;
        let local = local_gradients(jac, values, &weights)?;
        let f = local.mean(&weights)?;
        Ok(Self {
            born: weights.w_tilde().to_vec(),
            local,
            f,
        })
    }

    pub fn born(&self) -> &[f64] {
        &self.born
    }

    pub fn exact_gradient(&self) -> &[f64] {
        &self.f
    }

    pub fn local_gradients(&self) -> &LocalGradients {
        &self.local
    }

    fn normalized(mut v: Vec<f64>) -> Result<Vec<f64>> {
        let z = compensated_sum(v.iter().copied());
        if !(z > 0.0) {
            return Err(Error::DegenerateWeights);
        }
        for x in v.iter_mut() {
            *x /= z;
        }
        Ok(v)
    }

    /// `q_opt^i ∝ |ψ|² |f_i − F_i|`.
    pub fn optimal_for_component(&self, i: usize) -> Result<Vec<f64>> {
        Self::normalized(
            (0..self.born.len())
                .map(|mu| self.born[mu] * (self.local.row(mu)[i] - self.f[i]).abs())
                .collect(),
        )
    }

    /// Mixture `q_opt^IS ∝ |ψ|² Σ_i |f_i|`.
    pub fn mixture(&self) -> Result<Vec<f64>> {
        Self::normalized(
            (0..self.born.len())
                .map(|mu| {
                    self.born[mu] * compensated_sum(self.local.row(mu).iter().map(|g| g.abs()))
                })
                .collect(),
        )
    }

    /// Average of the normalized per-component optima.
    pub fn averaged_optimum(&self) -> Result<Vec<f64>> {
        let n_p = self.f.len();
        let mut acc = vec![0.0; self.born.len()];
        let mut used = 0usize;
        for i in 0..n_p {
            if let Ok(q) = self.optimal_for_component(i) {
                used += 1;
                for (a, b) in acc.iter_mut().zip(q) {
                    *a += b;
                }
            }
        }
        if used == 0 {
            return Err(Error::DegenerateWeights);
        }
        Self::normalized(acc)
    }

    /// Exact per-sample variance of each component when sampling from `q`.
    pub fn variance_under(&self, q: &[f64]) -> Result<Vec<f64>> {
        if q.len() != self.born.len() {
            return Err(Error::SizeMismatch {
                what: "distribution",
                expected: self.born.len(),
                got: q.len(),
            });
        }
        let n_p = self.f.len();
        let mut acc = vec![CompensatedSum::new(); n_p];
        let mut infinite = vec![false; n_p];
        for (mu, &qm) in q.iter().enumerate() {
            let p = self.born[mu];
            if p == 0.0 {
                continue;
            }
            for i in 0..n_p {
                let d = self.local.row(mu)[i] - self.f[i];
                if qm > 0.0 {
                    acc[i].add(p * p / qm * d * d);
                } else if d != 0.0 {
                    infinite[i] = true;
                }
            }
        }
        Ok(acc
            .iter()
            .zip(infinite)
            .map(|(a, inf)| if inf { f64::INFINITY } else { a.value() })
            .collect())
    }

    pub fn snr_under(&self, q: &[f64]) -> Result<SnrObjective> {
        snr_and_objective(&self.f, &self.variance_under(q)?)
    }

    /// Per-component SNR each under its own optimal distribution,
    /// `|F_i| / Σ_x |ψ|² |f_i − F_i|`.
    pub fn optimal_snr(&self) -> SnrObjective {
        let n_p = self.f.len();
        let mut dev = vec![CompensatedSum::new(); n_p];
        for mu in 0..self.born.len() {
            let p = self.born[mu];
            if p == 0.0 {
                continue;
            }
            for (i, d) in dev.iter_mut().enumerate() {
                d.add(p * (self.local.row(mu)[i] - self.f[i]).abs());
            }
        }
        let var: Vec<f64> = dev.iter().map(|d| d.value() * d.value()).collect();
        snr_and_objective(&self.f, &var).expect("matching lengths")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ansatz::{LogAmplitude, ModelKind, WavefunctionModel};
    use crate::lattice::{enumerate_basis, SpinConfig};
    use crate::sampler::sample_exact;

    struct Table(Vec<Complex64>);

    impl LogAmplitude for Table {
        fn n_sites(&self) -> usize {
            self.0.len().trailing_zeros() as usize
        }
        fn log_amplitude_unchecked(&self, x: SpinConfig) -> Complex64 {
            self.0[x.bits() as usize]
        }
    }

    fn mcmc_batch(log_re: &[f64], alpha: f64) -> SampleBatch {
        let n = log_re.len().next_power_of_two().max(2);
        let mut t = vec![Complex64::new(0.0, 0.0); n];
        for (k, &l) in log_re.iter().enumerate() {
            t[k] = Complex64::new(l, 0.0);
        }
        let table = Table(t);
        let configs = (0..log_re.len())
            .map(|k| SpinConfig::new(k as u64, table.n_sites()).unwrap())
            .collect();
        SampleBatch::from_configs(&table, alpha, configs).unwrap()
    }

    #[test]
    fn born_batches_have_uniform_weights() {
        let b = mcmc_batch(&[0.3, -1.2, 4.0, 0.0], 2.0);
        let w = compute_weights(&b).unwrap();
        assert!(w.w_tilde().iter().all(|&x| x == 0.25));
    }

    #[test]
    fn two_sample_normalization() {
        // α = 0 makes log w = 2 Re log ψ; choose Re log ψ = (0, log 3 / 2)
        let b = mcmc_batch(&[0.0, 0.5 * 3f64.ln()], 0.0);
        let w = compute_weights(&b).unwrap();
        assert!((w.w_tilde()[0] - 0.25).abs() < 1e-15);
        assert!((w.w_tilde()[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn exact_uniform_proposal_reweights_to_born() {
        let amps = [2.0f64, 1.0, 1.0, 1e-300];
        let table = Table(amps.iter().map(|a| Complex64::new(a.ln(), 0.0)).collect());
        let basis = enumerate_basis(2, None).unwrap();
        let b = sample_exact(&table, 0.0, &basis).unwrap();
        let w = compute_weights(&b).unwrap();
        for (a, e) in w.w_tilde().iter().zip([4.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0, 0.0]) {
            assert!((a - e).abs() < 1e-15);
        }
    }

    #[test]
    fn degenerate_weights() {
        let b = mcmc_batch(&[f64::NEG_INFINITY, f64::NEG_INFINITY], 1.0);
        assert_eq!(compute_weights(&b), Err(Error::DegenerateWeights));
    }

    #[test]
    fn snis_mean_examples() {
        let b = mcmc_batch(&[0.0; 4], 2.0);
        let w = compute_weights(&b).unwrap();
        let v: Vec<Complex64> = [2.0, 4.0, 6.0, 8.0].iter().map(|&x| x.into()).collect();
        assert_eq!(snis_mean(&v, &w).unwrap(), Complex64::new(5.0, 0.0));
        assert!(snis_mean(&v[..3], &w).is_err());

        let peaked = mcmc_batch(&[0.0, 800.0, 0.0, 0.0], 0.0);
        let w = compute_weights(&peaked).unwrap();
        assert_eq!(snis_mean(&v, &w).unwrap(), Complex64::new(4.0, 0.0));
    }

    #[test]
    fn constant_jacobian_column_has_no_gradient_or_metric() {
        let b = mcmc_batch(&[0.1, 0.4, -0.3, 0.9], 1.0);
        let w = compute_weights(&b).unwrap();
        let c = Complex64::new(0.7, -0.2);
        let jac = JacobianMatrix::from_rows(
            2,
            vec![
                c,
                Complex64::new(1.0, 0.0),
                c,
                Complex64::new(-1.0, 0.5),
                c,
                Complex64::new(0.3, 0.0),
                c,
                Complex64::new(0.0, 2.0),
            ],
        )
        .unwrap();
        let v: Vec<Complex64> = [1.0, -2.0, 0.5, 3.0].iter().map(|&x| x.into()).collect();
        let f = gradient_estimate(&jac, &v, &w).unwrap();
        assert!(f[0].abs() < 1e-15);
        assert!(f[1].abs() > 1e-3);
        let s = qgt_estimate(&jac, &w).unwrap();
        assert!(s[(0, 0)].abs() < 1e-15 && s[(0, 1)].abs() < 1e-15);
    }

    #[test]
    fn born_variance_is_plain_empirical_variance() {
        let b = mcmc_batch(&[0.0; 5], 2.0);
        let w = compute_weights(&b).unwrap();
        let g = LocalGradients::new(1, vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        let f = g.mean(&w).unwrap();
        assert!((f[0] - 3.0).abs() < 1e-15);
        let v = g.variance(&w, &f).unwrap();
        assert!((v[0] - 2.0).abs() < 1e-14);

        let one = mcmc_batch(&[0.0], 2.0);
        let w1 = compute_weights(&one).unwrap();
        let g1 = LocalGradients::new(1, vec![1.0]);
        assert!(matches!(
            g1.variance(&w1, &[1.0]),
            Err(Error::InsufficientSamples { .. })
        ));
    }

    #[test]
    fn snr_examples() {
        let r = snr_and_objective(&[2.0, -3.0], &[4.0, 9.0]).unwrap();
        assert!((r.l_is - 1.0).abs() < 1e-15);
        let r = snr_and_objective(&[0.0, 0.0], &[1.0, 2.0]).unwrap();
        assert_eq!(r.l_is, 0.0);
        let r = snr_and_objective(&[1e-16, 1.0], &[0.0, 1.0]).unwrap();
        assert_eq!(r.snr[0], 0.0);
    }

    #[test]
    fn stability_examples() {
        let bounds = StabilityBounds {
            min_samples: 16,
            max_samples: 1 << 20,
        };
        assert!(stability_criterion(1.0, 1, bounds).reliable);
        assert!(!stability_criterion(0.5, 3, bounds).reliable);
        assert_eq!(
            stability_criterion(0.01, 100, bounds).recommended_n_samples,
            10_000
        );
        assert_eq!(
            stability_criterion(0.0, 100, bounds).recommended_n_samples,
            1 << 20
        );
        assert_eq!(stability_criterion(10.0, 1, bounds).recommended_n_samples, 16);
    }

    #[test]
    fn ess_examples() {
        let b = mcmc_batch(&[0.5; 8], 2.0);
        let w = compute_weights(&b).unwrap();
        let e = ess_and_bias(&w, &[1.0, 2.0, 3.0, 1.0, 2.0, 3.0, 1.0, 2.0], 1.875).unwrap();
        assert!((e.ess - 1.0).abs() < 1e-14);
        assert!(e.rho0.unwrap().is_finite());

        // Born mass on one of D = 8 states, exact uniform proposal
        let d = 8;
        let mut t = vec![Complex64::new(-400.0, 0.0); d];
        t[5] = Complex64::new(0.0, 0.0);
        let table = Table(t);
        let b = sample_exact(&table, 0.0, &enumerate_basis(3, None).unwrap()).unwrap();
        let w = compute_weights(&b).unwrap();
        assert!((effective_sample_size(&w) - 1.0 / d as f64).abs() < 1e-12);
        assert_eq!(shrinkage_factor(&w, &[0.0; 8], 0.0), Err(Error::Rho0Undefined));
        assert_eq!(ess_and_bias(&w, &[0.0; 8], 0.0).unwrap().rho0, None);
    }

    #[test]
    fn kl_properties() {
        let a = [0.2, 0.3, 0.5, 0.0];
        assert_eq!(kl_divergence(&a, &a).unwrap(), 0.0);
        assert!(kl_divergence(&a, &[0.25; 4]).unwrap() > 0.0);
        assert_eq!(kl_divergence(&[0.5, 0.5], &[1.0, 0.0]).unwrap(), f64::INFINITY);
    }

    #[test]
    fn exact_mode_ignores_sampling_exponent() {
        let lat = crate::lattice::Lattice::chain(6, true).unwrap();
        let op = crate::operators::LocalOperator::heisenberg_j1j2(&lat, 1.0, 0.2);
        let m = WavefunctionModel::random(ModelKind::ComplexRbm { n_hidden: 3 }, 6, 0.4, 9).unwrap();
        let basis = enumerate_basis(6, None).unwrap();
        let reference = {
            let b = sample_exact(&m, 2.0, &basis).unwrap();
            let jac = JacobianMatrix::compute(&m, b.configs()).unwrap();
            let v = crate::operators::local_values(&op, &m, &b).unwrap();
            let w = compute_weights(&b).unwrap();
            (gradient_estimate(&jac, &v, &w).unwrap(), snis_mean(&v, &w).unwrap())
        };
        for alpha in [0.0, 0.5, 1.0, 1.5] {
            let b = sample_exact(&m, alpha, &basis).unwrap();
            let jac = JacobianMatrix::compute(&m, b.configs()).unwrap();
            let v = crate::operators::local_values(&op, &m, &b).unwrap();
            let w = compute_weights(&b).unwrap();
            let f = gradient_estimate(&jac, &v, &w).unwrap();
            for (a, e) in f.iter().zip(&reference.0) {
                assert!((a - e).abs() < 1e-10 * e.abs().max(1e-3));
            }
            assert!((snis_mean(&v, &w).unwrap() - reference.1).norm() < 1e-12);
        }
    }

    #[test]
    fn reference_scores_match_estimator_in_exact_mode() {
        let lat = crate::lattice::Lattice::chain(6, true).unwrap();
        let op = crate::operators::LocalOperator::tfim(&lat, 1.0, 0.8);
        let m = WavefunctionModel::random(ModelKind::ComplexRbm { n_hidden: 2 }, 6, 0.5, 4).unwrap();
        let basis = enumerate_basis(6, None).unwrap();
        let born = sample_exact(&m, 2.0, &basis).unwrap();
        let jac = JacobianMatrix::compute(&m, born.configs()).unwrap();
        let v = crate::operators::local_values(&op, &m, &born).unwrap();
        let refs = ReferenceDistributions::from_exact(&born, &jac, &v).unwrap();
        for alpha in [0.5, 1.0, 2.0] {
            let b = sample_exact(&m, alpha, &basis).unwrap();
            let w = compute_weights(&b).unwrap();
            let est = estimate(&b, &jac, &v, &w).unwrap();
            let scored = refs.snr_under(b.exact_probs().unwrap()).unwrap();
            assert!((est.report.l_is - scored.l_is).abs() < 1e-10 * scored.l_is);
            let env = refs.optimal_snr();
            for (e, s) in env.snr.iter().zip(&scored.snr) {
                assert!(e + 1e-12 >= *s);
            }
        }
    }
}
