mod common;

use common::*;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use vmcis::infidelity::DEFAULT_CV;
use vmcis::*;

const FD_STEP: f64 = 1e-5;

fn wrap_phase(p: f64) -> f64 {
    (p + PI).rem_euclid(2.0 * PI) - PI
}

/// Central difference of `log ψ` in parameter `i`, with the phase unwrapped.
fn fd_log_derivative(model: &WavefunctionModel, x: SpinConfig, i: usize) -> Complex64 {
    let mut e = vec![0.0; model.n_params()];
    e[i] = FD_STEP;
    let plus = model.perturb(&e).unwrap().log_amplitude(x).unwrap();
    e[i] = -FD_STEP;
    let minus = model.perturb(&e).unwrap().log_amplitude(x).unwrap();
    let d = plus - minus;
    Complex64::new(d.re, wrap_phase(d.im)) / (2.0 * FD_STEP)
}

#[test]
fn jacobians_match_finite_differences() {
    let n = 7;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for kind in all_kinds(5) {
        for pair in 0..50 {
            let model = WavefunctionModel::random(kind, n, 0.8, 100 + pair).unwrap();
            let x = SpinConfig::new(rng.random_range(0..1u64 << n), n).unwrap();
            let analytic = model.log_derivatives(x).unwrap();
            let fd: Vec<Complex64> = (0..model.n_params()).map(|i| fd_log_derivative(&model, x, i)).collect();
            let scale = analytic.iter().map(|z| z.norm()).fold(0.0, f64::max);
            let err = analytic.iter().zip(&fd).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            assert!(err <= 1e-6 * scale.max(1e-300), "{} pair {pair}: {err:e} vs {scale:e}", kind.name());
        }
    }
}

fn exact_energy(model: &WavefunctionModel, op: &LocalOperator, basis: &BasisEnumeration, alpha: f64) -> f64 {
    let batch = sample_exact(model, alpha, basis).unwrap();
    let values = local_values(op, model, &batch).unwrap();
    snis_mean(&values, &compute_weights(&batch).unwrap()).unwrap().re
}

#[test]
fn energy_gradient_matches_finite_differences() {
    let lat = Lattice::chain(6, true).unwrap();
    let op = LocalOperator::heisenberg_j1j2(&lat, 1.0, 0.3);
    let basis = enumerate_basis(6, Some(3)).unwrap();
    for (k, kind) in all_kinds(4).into_iter().enumerate() {
        let model = WavefunctionModel::random(kind, 6, 0.5, 7 + k as u64).unwrap();
        for alpha in [0.6, 2.0] {
            let batch = sample_exact(&model, alpha, &basis).unwrap();
            let jac = JacobianMatrix::compute(&model, batch.configs()).unwrap();
            let values = local_values(&op, &model, &batch).unwrap();
            let w = compute_weights(&batch).unwrap();
            let g = gradient_estimate(&jac, &values, &w).unwrap();
            let fd = fd_gradient(&model, FD_STEP, |m| exact_energy(m, &op, &basis, alpha));
            let err = rel_err(&g, &fd);
            assert!(err <= 1e-6, "{} alpha={alpha}: {err:e}", kind.name());
        }
    }
}

#[test]
fn infidelity_gradient_matches_finite_differences() {
    let n = 6;
    let basis = enumerate_basis(n, None).unwrap();
    let target_model = WavefunctionModel::random(ModelKind::ComplexRbm { n_hidden: 4 }, n, 0.6, 99).unwrap();
    let target = TargetState::Model(target_model);
    for (k, kind) in all_kinds(4).into_iter().enumerate() {
        let model = WavefunctionModel::random(kind, n, 0.5, 40 + k as u64).unwrap();
        for alpha in [0.8, 2.0] {
            let y = sample_exact(&target, alpha, &basis).unwrap();
            let x = sample_exact(&model, alpha, &basis).unwrap();
            let est = estimate_infidelity(&model, &target, &x, &y, DEFAULT_CV).unwrap();
            let psi = psi_vector(&model);
            let phi = psi_vector(&target);
            assert!((est.infidelity - dense_infidelity(&psi, &phi)).abs() < 1e-10);
            let fd = fd_gradient(&model, FD_STEP, |m| {
                let x = sample_exact(m, alpha, &basis).unwrap();
                estimate_infidelity(m, &target, &x, &y, DEFAULT_CV).unwrap().infidelity
            });
            let err = rel_err(&est.gradient, &fd);
            assert!(err <= 1e-6, "{} alpha={alpha}: {err:e}", kind.name());
        }
    }
}

#[test]
fn exact_infidelity_is_independent_of_control_variate() {
    let n = 5;
    let basis = enumerate_basis(n, None).unwrap();
    let model = WavefunctionModel::random(ModelKind::ComplexRbm { n_hidden: 3 }, n, 0.4, 1).unwrap();
    let target = TargetState::Model(WavefunctionModel::random(ModelKind::ComplexRbm { n_hidden: 3 }, n, 0.4, 2).unwrap());
    let x = sample_exact(&model, 1.2, &basis).unwrap();
    let y = sample_exact(&target, 1.2, &basis).unwrap();
    let a = estimate_infidelity(&model, &target, &x, &y, 0.0).unwrap();
    let b = estimate_infidelity(&model, &target, &x, &y, 0.9).unwrap();
    assert!((a.infidelity - b.infidelity).abs() < 1e-12);
    assert!(rel_err(&a.gradient, &b.gradient) < 1e-10);
}

#[test]
fn infidelity_ignores_global_phase_of_target() {
    let n = 5;
    let basis = enumerate_basis(n, None).unwrap();
    let model = WavefunctionModel::random(ModelKind::ComplexRbm { n_hidden: 3 }, n, 0.4, 8).unwrap();
    let phi = psi_vector(&model);
    let phase = Complex64::from_polar(2.5, 1.1);
    let amps: Vec<Complex64> = basis.configs().iter().map(|x| phase * phi[x.bits() as usize]).collect();
    let target = TargetState::from_amplitudes(basis.clone(), &amps).unwrap();
    let x = sample_exact(&model, 2.0, &basis).unwrap();
    let y = sample_exact(&target, 2.0, &basis).unwrap();
    let est = estimate_infidelity(&model, &target, &x, &y, DEFAULT_CV).unwrap();
    assert!(est.infidelity.abs() < 1e-12);
    assert!(est.gradient.iter().all(|g| g.abs() < 1e-10));
}
