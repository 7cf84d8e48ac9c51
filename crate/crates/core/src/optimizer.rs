//! Stochastic reconfiguration driven by importance-sampled estimates.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::adaptive::{dalpha_objective, dalpha_variance, update_alpha, OverdispersionState};
use crate::ansatz::{JacobianMatrix, LogAmplitude, WavefunctionModel};
use crate::error::{Error, Result};
use crate::estimators::{
    centered_jacobian, compute_weights, ess_and_bias, local_gradients_from_centered, snis_mean,
    snr_and_objective, stability_criterion, CenteredJacobian, LocalGradients, StabilityBounds,
    WeightSet,
};
use crate::lattice::BasisEnumeration;
use crate::numerics::{compensated_sum, weighted_real_gram, weighted_real_gram_holomorphic};
use crate::operators::{local_values, LocalOperator};
use crate::sampler::{sample_exact, McmcSampler, SampleBatch, SamplerConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decay {
    Cosine,
    Linear,
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    pub init: f64,
    #[serde(rename = "final")]
    pub final_value: f64,
    pub decay: Decay,
    pub decay_steps: usize,
}

impl Schedule {
    pub fn constant(v: f64) -> Self {
        Self {
            init: v,
            final_value: v,
            decay: Decay::Constant,
            decay_steps: 0,
        }
    }

    pub fn value(&self, step: usize) -> f64 {
        if self.decay == Decay::Constant || self.decay_steps == 0 {
            return if self.decay == Decay::Constant {
                self.init
            } else {
                self.final_value
            };
        }
        let t = (step as f64 / self.decay_steps as f64).min(1.0);
        let frac = match self.decay {
            Decay::Cosine => 0.5 * (1.0 + (std::f64::consts::PI * t).cos()),
            Decay::Linear => 1.0 - t,
            Decay::Constant => 1.0,
        };
        self.final_value + (self.init - self.final_value) * frac
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaptiveSamples {
    pub min_samples: usize,
    pub max_samples: usize,
    /// Steps between sample-size adjustments.
    pub every: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SrConfig {
    pub n_steps: usize,
    pub learning_rate: Schedule,
    pub diag_shift: Schedule,
    pub momentum: f64,
    pub adaptive_samples: Option<AdaptiveSamples>,
}

impl Default for SrConfig {
    fn default() -> Self {
        Self {
            n_steps: 1000,
            learning_rate: Schedule {
                init: 1e-3,
                final_value: 1e-4,
                decay: Decay::Cosine,
                decay_steps: 1000,
            },
            diag_shift: Schedule {
                init: 1e-2,
                final_value: 1e-4,
                decay: Decay::Cosine,
                decay_steps: 1000,
            },
            momentum: 0.0,
            adaptive_samples: None,
        }
    }
}

impl SrConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |s: &Schedule| s.init > 0.0 && s.final_value > 0.0;
        if !positive(&self.learning_rate) || !positive(&self.diag_shift) {
            return Err(Error::InvalidArgument(
                "learning rates and diagonal shifts must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidArgument(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if let Some(a) = &self.adaptive_samples {
            if a.min_samples < 2 || a.min_samples > a.max_samples || a.every == 0 {
                return Err(Error::InvalidArgument(format!(
                    "invalid adaptive sample bounds {a:?}"
                )));
            }
        }
        Ok(())
    }
}

/// Solves `(S + λI) u = F` by Cholesky, falling back to an eigendecomposition
/// with eigenvalues floored at `λ`.
pub fn sr_solve(s: &DMatrix<f64>, f: &[f64], diag_shift: f64) -> Result<Vec<f64>> {
    let n = f.len();
    if s.nrows() != n || s.ncols() != n {
        return Err(Error::SizeMismatch {
            what: "metric dimension",
            expected: n,
            got: s.nrows(),
        });
    }
    if !(diag_shift > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "diagonal shift must be positive, got {diag_shift}"
        )));
    }
    let mut a = s.clone();
    for i in 0..n {
        a[(i, i)] += diag_shift;
    }
    let rhs = DVector::from_column_slice(f);
    if let Some(chol) = a.clone().cholesky() {
        let u = chol.solve(&rhs);
        if u.iter().all(|v| v.is_finite()) {
            return Ok(u.iter().copied().collect());
        }
    }
    let eig = SymmetricEigen::new(a);
    let proj = eig.eigenvectors.tr_mul(&rhs);
    let scaled = DVector::from_iterator(
        n,
        proj.iter()
            .zip(eig.eigenvalues.iter())
            .map(|(p, &e)| p / e.max(diag_shift)),
    );
    let u = &eig.eigenvectors * scaled;
    if u.iter().all(|v| v.is_finite()) {
        Ok(u.iter().copied().collect())
    } else {
        Err(Error::LinearSolve("non-finite solution".into()))
    }
}

/// `u_k = μ u_{k−1} + (S + λ)⁻¹ (F − μ S u_{k−1})`.
pub fn momentum_blend(
    u_prev: &[f64],
    s: &DMatrix<f64>,
    f: &[f64],
    diag_shift: f64,
    mu: f64,
) -> Result<Vec<f64>> {
    if u_prev.len() != f.len() {
        return Err(Error::SizeMismatch {
            what: "previous update",
            expected: f.len(),
            got: u_prev.len(),
        });
    }
    if !(0.0..1.0).contains(&mu) {
        return Err(Error::InvalidArgument(format!("momentum {mu} outside [0, 1)")));
    }
    if mu == 0.0 {
        return sr_solve(s, f, diag_shift);
    }
    let su = s * DVector::from_column_slice(u_prev);
    let rhs: Vec<f64> = f.iter().zip(su.iter()).map(|(fi, si)| fi - mu * si).collect();
    let corr = sr_solve(s, &rhs, diag_shift)?;
    Ok(u_prev
        .iter()
        .zip(corr)
        .map(|(u, c)| mu * u + c)
        .collect())
}

/// Where batches come from.
#[derive(Debug, Clone)]
pub enum Sampler {
    Exact(BasisEnumeration),
    Mcmc(McmcSampler),
}

impl Sampler {
    pub fn mcmc(cfg: SamplerConfig, n_sites: usize) -> Result<Self> {
        Ok(Sampler::Mcmc(McmcSampler::new(cfg, n_sites)?))
    }

    pub fn draw<M: LogAmplitude + ?Sized>(&mut self, model: &M, alpha: f64) -> Result<SampleBatch> {
        match self {
            Sampler::Exact(basis) => sample_exact(model, alpha, basis),
            Sampler::Mcmc(s) => s.sample(model, alpha),
        }
    }

    pub fn reseed(&mut self, offset: u64) {
        if let Sampler::Mcmc(s) = self {
            s.reseed(offset);
        }
    }

    pub fn set_n_samples(&mut self, n: usize) {
        if let Sampler::Mcmc(s) = self {
            s.set_n_samples(n);
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Sampler::Exact(_))
    }
}

/// Per-sample contributions of a loss for one batch.
#[derive(Debug, Clone)]
pub struct ObjectiveEval {
    pub loss: f64,
    pub loss_variance: f64,
    /// Rows whose weighted mean is the loss gradient.
    pub local: LocalGradients,
    /// Real per-sample values entering the bias diagnostic, with their mean.
    pub values: Vec<f64>,
    pub mean: f64,
}

pub trait Objective {
    fn evaluate(
        &mut self,
        model: &WavefunctionModel,
        batch: &SampleBatch,
        weights: &WeightSet,
        jac: &CenteredJacobian,
        alpha: f64,
    ) -> Result<ObjectiveEval>;
}

/// Variational energy `⟨ψ|H|ψ⟩ / ⟨ψ|ψ⟩`.
#[derive(Debug, Clone)]
pub struct EnergyObjective {
    pub op: LocalOperator,
}

impl Objective for EnergyObjective {
    fn evaluate(
        &mut self,
        model: &WavefunctionModel,
        batch: &SampleBatch,
        weights: &WeightSet,
        jac: &CenteredJacobian,
        _alpha: f64,
    ) -> Result<ObjectiveEval> {
        let values = local_values(&self.op, model, batch)?;
        let mean = snis_mean(&values, weights)?;
        let local = local_gradients_from_centered(jac, &values, mean);
        let loss_variance = compensated_sum(
            values
                .iter()
                .zip(weights.w_tilde())
                .map(|(v, w)| w * (v - mean).norm_sqr()),
        );
        Ok(ObjectiveEval {
            loss: mean.re,
            loss_variance,
            local,
            values: values.iter().map(|v| v.re).collect(),
            mean: mean.re,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    pub enabled: bool,
    pub state: OverdispersionState,
}

impl ControllerConfig {
    pub fn fixed(alpha: f64) -> Self {
        Self {
            enabled: false,
            state: OverdispersionState {
                alpha,
                ..OverdispersionState::default()
            },
        }
    }

    pub fn adaptive(alpha0: f64) -> Self {
        Self {
            enabled: true,
            state: OverdispersionState {
                alpha: alpha0,
                ..OverdispersionState::default()
            },
        }
    }
}

/// One telemetry record per optimization step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: usize,
    /// Loss estimate: the energy, or the infidelity for compression runs.
    pub energy: f64,
    pub variance: f64,
    #[serde(rename = "L_IS")]
    pub l_is: f64,
    pub ess: f64,
    pub rho0: Option<f64>,
    /// Exponent the batch of this step was drawn with.
    pub alpha: f64,
    pub acceptance_rate: Option<f64>,
    #[serde(rename = "N_s")]
    pub n_samples: usize,
    pub update_norm: f64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub controller_frozen: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub model: WavefunctionModel,
    pub trace: Vec<TraceRecord>,
    pub controller: OverdispersionState,
    /// Set when the run stopped early; the trace holds the completed steps.
    pub abort: Option<Error>,
}

struct StepResult {
    record: TraceRecord,
    model: WavefunctionModel,
    update: Vec<f64>,
    controller: OverdispersionState,
    recommended: Option<usize>,
}

#[allow(clippy::too_many_arguments)]
fn sr_step<O: Objective>(
    step: usize,
    model: &WavefunctionModel,
    objective: &mut O,
    sampler: &mut Sampler,
    cfg: &SrConfig,
    controller: &ControllerConfig,
    state: &OverdispersionState,
    u_prev: &[f64],
) -> Result<StepResult> {
    let alpha = state.alpha;
    let batch = sampler.draw(model, alpha)?;
    let weights = compute_weights(&batch)?;
    let jac = JacobianMatrix::compute(model, batch.configs())?;
    let d_o = centered_jacobian(&jac, &weights)?;
    drop(jac);
    let eval = objective.evaluate(model, &batch, &weights, &d_o, alpha)?;
    let f_hat = eval.local.mean(&weights)?;
    let var = eval.local.variance(&weights, &f_hat)?;
    let snr = snr_and_objective(&f_hat, &var)?;
    let bias = ess_and_bias(&weights, &eval.values, eval.mean)?;
    let s = if model.kind().is_holomorphic() {
        weighted_real_gram_holomorphic(&d_o.data, weights.w_tilde(), model.n_params())
    } else {
        weighted_real_gram(&d_o.data, weights.w_tilde(), model.n_params())
    };
    drop(d_o);

    let update = momentum_blend(u_prev, &s, &f_hat, cfg.diag_shift.value(step), cfg.momentum)?;
    let lr = cfg.learning_rate.value(step);
    let delta: Vec<f64> = update.iter().map(|u| -lr * u).collect();
    let next = model.perturb(&delta)?;
    let update_norm = delta.iter().map(|d| d * d).sum::<f64>().sqrt();

    let mut new_state = *state;
    let mut frozen = false;
    if controller.enabled {
        let dvar = dalpha_variance(&eval.local, &weights, &f_hat, &batch)?;
        let g = dalpha_objective(&f_hat, &var, &dvar)?;
        let u = update_alpha(state, g);
        new_state = u.state;
        frozen = u.frozen;
    }

    let recommended = cfg.adaptive_samples.and_then(|a| {
        if (step + 1) % a.every == 0 {
            Some(
                stability_criterion(
                    snr.l_is,
                    batch.len(),
                    StabilityBounds {
                        min_samples: a.min_samples,
                        max_samples: a.max_samples,
                    },
                )
                .recommended_n_samples,
            )
        } else {
            None
        }
    });

    Ok(StepResult {
        record: TraceRecord {
            step,
            energy: eval.loss,
            variance: eval.loss_variance,
            l_is: snr.l_is,
            ess: bias.ess,
            rho0: bias.rho0,
            alpha,
            acceptance_rate: batch.acceptance_rate(),
            n_samples: batch.len(),
            update_norm,
            controller_frozen: frozen,
        },
        model: next,
        update,
        controller: new_state,
        recommended,
    })
}

fn retryable(e: &Error) -> bool {
    matches!(
        e,
        Error::SamplerStall(_)
            | Error::DegenerateWeights
            | Error::DegenerateState
            | Error::ZeroAmplitudeInBatch { .. }
            | Error::LinearSolve(_)
    )
}

/// Offset applied to the sampler seed when a step is retried.
pub const RETRY_SEED_OFFSET: u64 = 0x9e37_79b9_7f4a_7c15;

/// Stochastic-reconfiguration loop for an arbitrary objective.
pub fn run_sr<O: Objective>(
    model: WavefunctionModel,
    objective: &mut O,
    sampler: &mut Sampler,
    cfg: &SrConfig,
    controller: &ControllerConfig,
) -> Result<RunOutcome> {
    cfg.validate()?;
    controller.state.validate()?;
    let mut model = model;
    let mut state = controller.state;
    let mut u_prev = vec![0.0; model.n_params()];
    let mut trace = Vec::with_capacity(cfg.n_steps);
    for step in 0..cfg.n_steps {
        let mut attempt = sr_step(step, &model, objective, sampler, cfg, controller, &state, &u_prev);
        if let Err(e) = &attempt {
            if retryable(e) {
                sampler.reseed(RETRY_SEED_OFFSET);
                attempt = sr_step(step, &model, objective, sampler, cfg, controller, &state, &u_prev);
            }
        }
        match attempt {
            Ok(r) => {
                trace.push(r.record);
                model = r.model;
                u_prev = r.update;
                state = r.controller;
                if let Some(n) = r.recommended {
                    sampler.set_n_samples(n);
                }
            }
            Err(e) => {
                return Ok(RunOutcome {
                    model,
                    trace,
                    controller: state,
                    abort: Some(e),
                })
            }
        }
    }
    Ok(RunOutcome {
        model,
        trace,
        controller: state,
        abort: None,
    })
}

/// Ground-state search minimizing the variational energy of `op`.
pub fn run_ground_state(
    model: WavefunctionModel,
    op: &LocalOperator,
    sampler: &mut Sampler,
    cfg: &SrConfig,
    controller: &ControllerConfig,
) -> Result<RunOutcome> {
    let mut objective = EnergyObjective { op: op.clone() };
    run_sr(model, &mut objective, sampler, cfg, controller)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn wishart(n: usize, k: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(k, n, |_, _| rng.random::<f64>() - 0.5);
        x.tr_mul(&x)
    }

    #[test]
    fn sr_solve_examples() {
        let f = vec![1.0, -2.0, 0.5];
        let zero = DMatrix::zeros(3, 3);
        assert_eq!(sr_solve(&zero, &f, 1.0).unwrap(), f);
        let id = DMatrix::identity(3, 3);
        let u = sr_solve(&id, &f, 1.0).unwrap();
        for (a, b) in u.iter().zip(&f) {
            assert!((a - b / 2.0).abs() < 1e-15);
        }
        assert!(sr_solve(&id, &f, 0.0).is_err());
        assert!(sr_solve(&id, &f[..2], 1.0).is_err());
    }

    #[test]
    fn sr_solve_residual_on_random_metric() {
        let s = wishart(50, 100, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f: Vec<f64> = (0..50).map(|_| rng.random::<f64>() - 0.5).collect();
        let lambda = 1e-3;
        let u = sr_solve(&s, &f, lambda).unwrap();
        let a = &s + DMatrix::identity(50, 50) * lambda;
        let r = a * DVector::from_column_slice(&u) - DVector::from_column_slice(&f);
        assert!(r.norm() <= 1e-8 * DVector::from_column_slice(&f).norm());
    }

    #[test]
    fn momentum_examples() {
        let s = wishart(20, 40, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let f: Vec<f64> = (0..20).map(|_| rng.random::<f64>()).collect();
        let prev: Vec<f64> = (0..20).map(|_| rng.random::<f64>()).collect();
        assert_eq!(
            momentum_blend(&prev, &s, &f, 1e-2, 0.0).unwrap(),
            sr_solve(&s, &f, 1e-2).unwrap()
        );
        let z = momentum_blend(&[0.0; 20], &s, &[0.0; 20], 1e-2, 0.9).unwrap();
        assert!(z.iter().all(|v| *v == 0.0));
        assert!(momentum_blend(&prev[..3], &s, &f, 1e-2, 0.9).is_err());
        assert!(momentum_blend(&prev, &s, &f, 1e-2, 1.0).is_err());
    }

    #[test]
    fn schedules() {
        let c = Schedule {
            init: 1e-2,
            final_value: 1e-4,
            decay: Decay::Cosine,
            decay_steps: 100,
        };
        assert_eq!(c.value(0), 1e-2);
        assert!((c.value(50) - 0.5 * (1e-2 + 1e-4)).abs() < 1e-15);
        assert!((c.value(100) - 1e-4).abs() < 1e-18);
        assert!((c.value(1000) - 1e-4).abs() < 1e-18);
        let l = Schedule {
            decay: Decay::Linear,
            ..c
        };
        assert!((l.value(25) - (1e-2 - 0.25 * (1e-2 - 1e-4))).abs() < 1e-15);
        assert_eq!(Schedule::constant(3.0).value(77), 3.0);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut c = SrConfig::default();
        assert!(c.validate().is_ok());
        c.momentum = 1.0;
        assert!(c.validate().is_err());
        let mut c = SrConfig::default();
        c.learning_rate.init = 0.0;
        assert!(c.validate().is_err());
    }
}
