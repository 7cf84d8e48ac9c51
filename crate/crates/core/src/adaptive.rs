//! Adaptive overdispersion: gradient ascent of `ℒ_IS` in the exponent `α`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{LocalGradients, WeightSet, EPS_VAR};
use crate::numerics::compensated_sum;
use crate::sampler::SampleBatch;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverdispersionState {
    pub alpha: f64,
    pub eta: f64,
    pub max_step: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
}

impl Default for OverdispersionState {
    fn default() -> Self {
        Self {
            alpha: 2.0,
            eta: 0.1,
            max_step: 0.01,
            alpha_min: 0.05,
            alpha_max: 2.5,
        }
    }
}

impl OverdispersionState {
    pub fn new(alpha: f64, eta: f64, max_step: f64, alpha_min: f64, alpha_max: f64) -> Result<Self> {
        let s = Self {
            alpha,
            eta,
            max_step,
            alpha_min,
            alpha_max,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.eta > 0.0
            && self.max_step > 0.0
            && self.alpha_min >= 0.0
            && self.alpha_min <= self.alpha_max
            && (self.alpha_min..=self.alpha_max).contains(&self.alpha);
        if !ok {
            return Err(Error::InvalidArgument(format!(
                "invalid controller state {self:?}"
            )));
        }
        Ok(())
    }
}

/// `∂_α V̂_i = −Σ_μ (w̃_μ²/m_μ) (a_μ − ā) (f_i(x_μ) − F̂_i)²`
/// with `a = Re log ψ = ∂_α log q_α + const` and `ā` its mean under the
/// sampling distribution.
pub fn dalpha_variance(
    local: &LocalGradients,
    weights: &WeightSet,
    f_hat: &[f64],
    batch: &SampleBatch,
) -> Result<Vec<f64>> {
    if batch.len() != weights.len() || local.n_rows() != weights.len() {
        return Err(Error::SizeMismatch {
            what: "batch rows",
            expected: weights.len(),
            got: batch.len(),
        });
    }
    if f_hat.len() != local.n_cols() {
        return Err(Error::SizeMismatch {
            what: "gradient",
            expected: local.n_cols(),
            got: f_hat.len(),
        });
    }
    let a: Vec<f64> = batch.log_amps().iter().map(|l| l.re).collect();
    let masses = weights.masses();
    let a_bar = compensated_sum(
        a.iter()
            .zip(masses)
            .filter(|(_, &m)| m > 0.0)
            .map(|(x, m)| m * x),
    );
    let n_p = local.n_cols();
    let mut acc = vec![crate::numerics::CompensatedSum::new(); n_p];
    for mu in 0..local.n_rows() {
        let factor = weights.variance_factor(mu);
        if factor == 0.0 {
            continue;
        }
        let da = a[mu] - a_bar;
        for ((s, g), f) in acc.iter_mut().zip(local.row(mu)).zip(f_hat) {
            let d = g - f;
            s.add(-factor * da * d * d);
        }
    }
    Ok(acc.iter().map(|s| s.value()).collect())
}

/// `∂_α ℒ_IS = (1/N_p) Σ_i −½ ∂_α V̂_i |F̂_i| / V̂_i^{3/2}`; components at
/// the variance floor contribute nothing.
pub fn dalpha_objective(f_hat: &[f64], variances: &[f64], dvar: &[f64]) -> Result<f64> {
    if f_hat.len() != variances.len() || f_hat.len() != dvar.len() {
        return Err(Error::SizeMismatch {
            what: "controller inputs",
            expected: f_hat.len(),
            got: variances.len().min(dvar.len()),
        });
    }
    if f_hat.is_empty() {
        return Ok(0.0);
    }
    let total = compensated_sum(f_hat.iter().zip(variances).zip(dvar).map(|((f, &v), dv)| {
        if v > EPS_VAR {
            -0.5 * dv * f.abs() / (v * v.sqrt())
        } else {
            0.0
        }
    }));
    Ok(total / f_hat.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaUpdate {
    pub state: OverdispersionState,
    /// Set when the gradient was not finite and `α` was left unchanged.
    pub frozen: bool,
}

/// `α' = clamp(α + clamp(η g, ±max_step), [α_min, α_max])`.
pub fn update_alpha(state: &OverdispersionState, grad: f64) -> AlphaUpdate {
    if !grad.is_finite() {
        return AlphaUpdate {
            state: *state,
            frozen: true,
        };
    }
    let step = (state.eta * grad).clamp(-state.max_step, state.max_step);
    let alpha = (state.alpha + step).clamp(state.alpha_min, state.alpha_max);
    AlphaUpdate {
        state: OverdispersionState { alpha, ..*state },
        frozen: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ansatz::{JacobianMatrix, ModelKind, WavefunctionModel};
    use crate::estimators::{compute_weights, local_gradients};
    use crate::lattice::{enumerate_basis, Lattice};
    use crate::operators::{local_values, LocalOperator};
    use crate::sampler::sample_exact;

    #[test]
    fn update_examples() {
        let s = OverdispersionState::default();
        assert_eq!(update_alpha(&s, 0.0).state.alpha, 2.0);
        let u = update_alpha(&s, -5.0);
        assert!((u.state.alpha - 1.99).abs() < 1e-15);
        let low = OverdispersionState {
            alpha: 0.05,
            ..s
        };
        assert_eq!(update_alpha(&low, -1.0).state.alpha, 0.05);
        let frozen = update_alpha(&s, f64::NAN);
        assert!(frozen.frozen);
        assert_eq!(frozen.state, s);
    }

    #[test]
    fn objective_examples() {
        assert_eq!(dalpha_objective(&[1.0, 2.0], &[1.0, 3.0], &[0.0, 0.0]).unwrap(), 0.0);
        assert!((dalpha_objective(&[1.0], &[1.0], &[-2.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(dalpha_objective(&[1.0], &[0.0], &[-2.0]).unwrap(), 0.0);
    }

    #[test]
    fn invalid_state_is_rejected() {
        assert!(OverdispersionState::new(3.0, 0.1, 0.01, 0.05, 2.5).is_err());
        assert!(OverdispersionState::new(1.0, 0.0, 0.01, 0.05, 2.5).is_err());
        assert!(OverdispersionState::new(1.0, 0.1, 0.01, 0.05, 2.5).is_ok());
    }

    #[test]
    fn uniform_state_has_flat_variance() {
        let lat = Lattice::chain(4, true).unwrap();
        let op = LocalOperator::tfim(&lat, 1.0, 0.5);
        let m = WavefunctionModel::new(
            ModelKind::LogLinear { complex: true },
            4,
            vec![0.0, 0.1, 0.0, -0.2, 0.0, 0.3, 0.0, 0.05],
        )
        .unwrap();
        let b = sample_exact(&m, 1.3, &enumerate_basis(4, None).unwrap()).unwrap();
        let w = compute_weights(&b).unwrap();
        let jac = JacobianMatrix::compute(&m, b.configs()).unwrap();
        let v = local_values(&op, &m, &b).unwrap();
        let g = local_gradients(&jac, &v, &w).unwrap();
        let f = g.mean(&w).unwrap();
        let dv = dalpha_variance(&g, &w, &f, &b).unwrap();
        assert!(dv.iter().all(|d| d.abs() < 1e-15));
    }
}
