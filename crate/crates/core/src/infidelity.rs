//! State compression: importance-sampled infidelity between the variational
//! state `ψ` and a fixed target `φ`.
//!
//! With `A_x = φ(x)/ψ(x)` on samples of `ψ` and `A_y = ψ(y)/φ(y)` on samples
//! of `φ`, the local fidelity with control variate `c` is
//! `f(x) = Re{A_x E_y[A_y]} + c (|A_x|² E_y[|A_y|²] − 1)`;
//! its Born average is the fidelity and the correction term averages to zero.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::ansatz::{JacobianMatrix, LogAmplitude, WavefunctionModel};
use crate::error::{Error, Result};
use crate::estimators::{
    centered_jacobian, compute_weights, effective_sample_size, snr_and_objective,
    CenteredJacobian, LocalGradients, WeightSet,
};
use crate::exact::{apply_propagator, state_vector};
use crate::lattice::{BasisEnumeration, SpinConfig};
use crate::numerics::{compensated_sum, compensated_sum_complex, CompensatedSum};
use crate::operators::LocalOperator;
use crate::optimizer::{run_sr, ControllerConfig, Objective, ObjectiveEval, RunOutcome, Sampler, SrConfig};
use crate::sampler::SampleBatch;

/// Default control-variate coefficient.
pub const DEFAULT_CV: f64 = 0.5;

#[derive(Debug, Clone)]
pub enum TargetState {
    /// Amplitudes listed over an enumerated basis; zero elsewhere.
    Table {
        basis: BasisEnumeration,
        log_amps: Vec<Complex64>,
    },
    Model(WavefunctionModel),
}

impl TargetState {
    pub fn from_amplitudes(basis: BasisEnumeration, amps: &[Complex64]) -> Result<Self> {
        if amps.len() != basis.len() {
            return Err(Error::SizeMismatch {
                what: "target amplitudes",
                expected: basis.len(),
                got: amps.len(),
            });
        }
        if amps.iter().all(|a| a.norm_sqr() == 0.0) {
            return Err(Error::DegenerateState);
        }
        let log_amps = amps
            .iter()
            .map(|a| {
                if a.norm_sqr() == 0.0 {
                    Complex64::new(f64::NEG_INFINITY, 0.0)
                } else {
                    a.ln()
                }
            })
            .collect();
        Ok(TargetState::Table { basis, log_amps })
    }

    /// `exp(−i dt H) |φ⟩` for a state given by its log-amplitudes.
    pub fn propagated<M: LogAmplitude + ?Sized>(
        state: &M,
        op: &LocalOperator,
        basis: &BasisEnumeration,
        dt: f64,
    ) -> Result<Self> {
        let v = state_vector(state, basis)?;
        let evolved = apply_propagator(op, basis, &v, dt)?;
        Self::from_amplitudes(basis.clone(), &evolved)
    }

    /// Amplitudes in basis order.
    pub fn amplitudes(&self, basis: &BasisEnumeration) -> Result<Vec<Complex64>> {
        basis
            .configs()
            .iter()
            .map(|&x| self.log_amplitude(x).map(|l| l.exp()))
            .collect()
    }
}

impl LogAmplitude for TargetState {
    fn n_sites(&self) -> usize {
        match self {
            TargetState::Table { basis, .. } => basis.n_sites(),
            TargetState::Model(m) => m.n_sites(),
        }
    }

    fn log_amplitude_unchecked(&self, x: SpinConfig) -> Complex64 {
        match self {
            TargetState::Table { basis, log_amps } => match basis.index_of(x) {
                Some(i) => log_amps[i],
                None => Complex64::new(f64::NEG_INFINITY, 0.0),
            },
            TargetState::Model(m) => m.log_amplitude_unchecked(x),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FidelityEstimate {
    pub infidelity: f64,
    pub gradient: Vec<f64>,
    /// Per-component SNR of the gradient rows on the x-batch.
    pub snr: Vec<f64>,
    pub l_is: f64,
    pub ess_x: f64,
    pub ess_y: f64,
}

/// Everything derived from one pair of batches.
#[derive(Debug, Clone)]
pub struct FidelityTerms {
    /// Local fidelity `f(x_μ)`; zero on samples of zero mass.
    pub local: Vec<f64>,
    pub fidelity: f64,
    /// Rows whose weighted mean is `∂_θ I`.
    pub gradient_rows: LocalGradients,
    pub ess_y: f64,
}

fn ratio(num: Complex64, den: Complex64) -> Complex64 {
    (num - den).exp()
}

/// Local fidelity, its mean and the per-sample infidelity gradient.
///
/// The gradient rows hold the total derivative of the estimator:
/// the score term `2 Re{ΔO} Δf` plus the explicit dependence of `f` on `θ`
/// through `A_x`, `E_y[A_y]` and `E_y[|A_y|²]`.
#[allow(clippy::too_many_arguments)]
pub fn fidelity_terms<T: LogAmplitude + ?Sized>(
    model: &WavefunctionModel,
    target: &T,
    x_batch: &SampleBatch,
    x_weights: &WeightSet,
    x_jac: &CenteredJacobian,
    y_batch: &SampleBatch,
    c: f64,
) -> Result<FidelityTerms> {
    let n_p = model.n_params();
    let y_weights = compute_weights(y_batch)?;
    let zero_mass = |w: &WeightSet, mu: usize| w.w_tilde()[mu] == 0.0 && w.masses()[mu] == 0.0;

    // y-side expectations and their parameter derivatives
    let psi_y: Vec<Complex64> = y_batch
        .configs()
        .par_iter()
        .map(|&y| model.log_amplitude_unchecked(y))
        .collect();
    let y_jac = JacobianMatrix::compute(model, y_batch.configs())?;
    let mut k_a = Vec::with_capacity(y_batch.len());
    let mut k_2 = Vec::with_capacity(y_batch.len());
    let mut dk_a_re = vec![CompensatedSum::new(); n_p];
    let mut dk_a_im = vec![CompensatedSum::new(); n_p];
    let mut dk_2 = vec![CompensatedSum::new(); n_p];
    for (nu, (&lp, &lf)) in psi_y.iter().zip(y_batch.log_amps()).enumerate() {
        let w = y_weights.w_tilde()[nu];
        if w == 0.0 {
            continue;
        }
        if lf.re == f64::NEG_INFINITY {
            return Err(Error::ZeroAmplitudeInBatch { index: nu });
        }
        let a = ratio(lp, lf);
        let a2 = a.norm_sqr();
        k_a.push(a * w);
        k_2.push(w * a2);
        for (i, o) in y_jac.row(nu).iter().enumerate() {
            let t = o * a * w;
            dk_a_re[i].add(t.re);
            dk_a_im[i].add(t.im);
            dk_2[i].add(2.0 * o.re * a2 * w);
        }
    }
    let k_a = compensated_sum_complex(k_a);
    let k_2 = compensated_sum(k_2);
    let dk_a: Vec<Complex64> = dk_a_re
        .iter()
        .zip(&dk_a_im)
        .map(|(r, i)| Complex64::new(r.value(), i.value()))
        .collect();
    let dk_2: Vec<f64> = dk_2.iter().map(|s| s.value()).collect();

    // x-side local values
    let phi_x: Vec<Complex64> = x_batch
        .configs()
        .par_iter()
        .map(|&x| target.log_amplitude_unchecked(x))
        .collect();
    let mut a_x = vec![Complex64::new(0.0, 0.0); x_batch.len()];
    let mut local = vec![0.0; x_batch.len()];
    for mu in 0..x_batch.len() {
        if zero_mass(x_weights, mu) {
            continue;
        }
        let lp = x_batch.log_amps()[mu];
        if lp.re == f64::NEG_INFINITY {
            return Err(Error::ZeroAmplitudeInBatch { index: mu });
        }
        let a = ratio(phi_x[mu], lp);
        a_x[mu] = a;
        local[mu] = (a * k_a).re + c * (a.norm_sqr() * k_2 - 1.0);
    }
    let fidelity = compensated_sum(local.iter().zip(x_weights.w_tilde()).map(|(f, w)| f * w));

    let mut rows = vec![0.0; x_batch.len() * n_p];
    rows.par_chunks_mut(n_p.max(1))
        .enumerate()
        .for_each(|(mu, row)| {
            if zero_mass(x_weights, mu) {
                return;
            }
            let a = a_x[mu];
            let a2 = a.norm_sqr();
            let df = local[mu] - fidelity;
            for (i, r) in row.iter_mut().enumerate() {
                let d_o = x_jac.row(mu)[i];
                let o = d_o + x_jac.mean[i];
                let direct = (-o * a * k_a + a * dk_a[i]).re
                    + c * (-2.0 * o.re * a2 * k_2 + a2 * dk_2[i]);
                *r = -(2.0 * d_o.re * df + direct);
            }
        });
    Ok(FidelityTerms {
        local,
        fidelity,
        gradient_rows: LocalGradients::new(n_p, rows),
        ess_y: effective_sample_size(&y_weights),
    })
}

/// Local fidelity values on the x-batch.
pub fn fidelity_local<T: LogAmplitude + ?Sized>(
    model: &WavefunctionModel,
    target: &T,
    x_batch: &SampleBatch,
    y_batch: &SampleBatch,
    c: f64,
) -> Result<Vec<f64>> {
    let w = compute_weights(x_batch)?;
    let jac = centered_jacobian(&JacobianMatrix::compute(model, x_batch.configs())?, &w)?;
    Ok(fidelity_terms(model, target, x_batch, &w, &jac, y_batch, c)?.local)
}

/// Infidelity, its gradient and sampling diagnostics for one pair of batches.
pub fn estimate_infidelity<T: LogAmplitude + ?Sized>(
    model: &WavefunctionModel,
    target: &T,
    x_batch: &SampleBatch,
    y_batch: &SampleBatch,
    c: f64,
) -> Result<FidelityEstimate> {
    let w = compute_weights(x_batch)?;
    let jac = centered_jacobian(&JacobianMatrix::compute(model, x_batch.configs())?, &w)?;
    let terms = fidelity_terms(model, target, x_batch, &w, &jac, y_batch, c)?;
    let gradient = terms.gradient_rows.mean(&w)?;
    let var = terms.gradient_rows.variance(&w, &gradient)?;
    let snr = snr_and_objective(&gradient, &var)?;
    Ok(FidelityEstimate {
        infidelity: 1.0 - terms.fidelity,
        gradient,
        snr: snr.snr,
        l_is: snr.l_is,
        ess_x: effective_sample_size(&w),
        ess_y: terms.ess_y,
    })
}

/// Gradient of the infidelity for one pair of batches.
pub fn infidelity_gradient<T: LogAmplitude + ?Sized>(
    model: &WavefunctionModel,
    target: &T,
    x_batch: &SampleBatch,
    y_batch: &SampleBatch,
    c: f64,
) -> Result<Vec<f64>> {
    Ok(estimate_infidelity(model, target, x_batch, y_batch, c)?.gradient)
}

/// Infidelity loss; the y-batch is drawn from the target with the same `α`
/// as the x-batch.
#[derive(Debug, Clone)]
pub struct InfidelityObjective {
    pub target: TargetState,
    pub target_sampler: Sampler,
    pub c: f64,
}

impl Objective for InfidelityObjective {
    fn evaluate(
        &mut self,
        model: &WavefunctionModel,
        batch: &SampleBatch,
        weights: &WeightSet,
        jac: &CenteredJacobian,
        alpha: f64,
    ) -> Result<ObjectiveEval> {
        let y_batch = self.target_sampler.draw(&self.target, alpha)?;
        let terms = fidelity_terms(model, &self.target, batch, weights, jac, &y_batch, self.c)?;
        let loss_variance = compensated_sum(
            terms
                .local
                .iter()
                .zip(weights.w_tilde())
                .map(|(f, w)| w * (f - terms.fidelity).powi(2)),
        );
        Ok(ObjectiveEval {
            loss: 1.0 - terms.fidelity,
            loss_variance,
            local: terms.gradient_rows,
            values: terms.local,
            mean: terms.fidelity,
        })
    }
}

/// Compresses `target` into `model` by minimizing the infidelity with SR.
pub fn run_compression(
    model: WavefunctionModel,
    target: TargetState,
    sampler: &mut Sampler,
    target_sampler: Sampler,
    cfg: &SrConfig,
    controller: &ControllerConfig,
    c: f64,
) -> Result<RunOutcome> {
    let mut objective = InfidelityObjective {
        target,
        target_sampler,
        c,
    };
    run_sr(model, &mut objective, sampler, cfg, controller)
}
