//! Independent dense-algebra oracles shared by the integration tests.
//!
//! Hamiltonians are assembled from Pauli strings acting on the full `2^N`
//! space, without going through `LocalOperator::connected`.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use vmcis::{Lattice, LogAmplitude, ModelKind, SpinConfig, WavefunctionModel};

pub const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Clone, Copy)]
pub enum Pauli {
    X,
    Y,
    Z,
}

/// `σ^a |bit⟩ = coeff |bit'⟩` for a single site.
fn pauli_on_bit(p: Pauli, up: bool) -> (bool, Complex64) {
    match p {
        Pauli::X => (!up, Complex64::new(1.0, 0.0)),
        // σ^y |↑⟩ = i|↓⟩, σ^y |↓⟩ = −i|↑⟩
        Pauli::Y => (!up, if up { I } else { -I }),
        Pauli::Z => (up, Complex64::new(if up { 1.0 } else { -1.0 }, 0.0)),
    }
}

/// Adds `coeff · Π_k σ^{a_k}_{s_k}` to the dense matrix `h`.
pub fn add_pauli_string(h: &mut DMatrix<Complex64>, n: usize, ops: &[(Pauli, usize)], coeff: f64) {
    let dim = 1usize << n;
    for col in 0..dim {
        let mut bits = col;
        let mut amp = Complex64::new(coeff, 0.0);
        for &(p, s) in ops {
            let up = bits >> s & 1 == 1;
            let (new_up, c) = pauli_on_bit(p, up);
            amp *= c;
            if new_up != up {
                bits ^= 1 << s;
            }
        }
        h[(bits, col)] += amp;
    }
}

pub fn heisenberg_dense(lattice: &Lattice, j1: f64, j2: f64) -> DMatrix<Complex64> {
    let n = lattice.n_sites();
    let mut h = DMatrix::zeros(1 << n, 1 << n);
    for (pairs, j) in [(lattice.nn_pairs(), j1), (lattice.nnn_pairs(), j2)] {
        for &(a, b) in pairs {
            for p in [Pauli::X, Pauli::Y, Pauli::Z] {
                add_pauli_string(&mut h, n, &[(p, a), (p, b)], 0.25 * j);
            }
        }
    }
    h
}

pub fn tfim_dense(lattice: &Lattice, j: f64, hx: f64) -> DMatrix<Complex64> {
    let n = lattice.n_sites();
    let mut h = DMatrix::zeros(1 << n, 1 << n);
    for &(a, b) in lattice.nn_pairs() {
        add_pauli_string(&mut h, n, &[(Pauli::Z, a), (Pauli::Z, b)], -j);
    }
    for s in 0..n {
        add_pauli_string(&mut h, n, &[(Pauli::X, s)], -hx);
    }
    h
}

pub fn full_configs(n: usize) -> Vec<SpinConfig> {
    (0..1u64 << n).map(|b| SpinConfig::new(b, n).unwrap()).collect()
}

/// Unnormalized amplitudes over the full basis, rescaled by the largest one.
pub fn psi_vector<M: LogAmplitude + ?Sized>(model: &M) -> DVector<Complex64> {
    let n = model.n_sites();
    let logs: Vec<Complex64> = full_configs(n)
        .iter()
        .map(|&x| model.log_amplitude(x).unwrap())
        .collect();
    let max = logs.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max);
    DVector::from_iterator(logs.len(), logs.iter().map(|l| (l - max).exp()))
}

/// Amplitudes restricted to a magnetization sector (zero elsewhere).
pub fn psi_vector_in_sector<M: LogAmplitude + ?Sized>(model: &M, n_up: usize) -> DVector<Complex64> {
    let mut v = psi_vector(model);
    for (k, z) in v.iter_mut().enumerate() {
        if (k as u64).count_ones() as usize != n_up {
            *z = Complex64::new(0.0, 0.0);
        }
    }
    v
}

pub fn rayleigh(h: &DMatrix<Complex64>, psi: &DVector<Complex64>) -> f64 {
    let hp = h * psi;
    (psi.dotc(&hp) / psi.dotc(psi)).re
}

/// Columns `O_i(x) ψ(x)` of the tangent vectors.
fn tangents(model: &WavefunctionModel, psi: &DVector<Complex64>) -> Vec<DVector<Complex64>> {
    let n = vmcis::LogAmplitude::n_sites(model);
    let configs = full_configs(n);
    let rows: Vec<Vec<Complex64>> = configs
        .iter()
        .map(|&x| model.log_derivatives(x).unwrap())
        .collect();
    (0..model.n_params())
        .map(|i| DVector::from_iterator(psi.len(), (0..psi.len()).map(|k| rows[k][i] * psi[k])))
        .collect()
}

/// `∂E/∂θ_i = 2 Re[⟨∂_iψ|H|ψ⟩ − E ⟨∂_iψ|ψ⟩] / ⟨ψ|ψ⟩`.
pub fn dense_energy_gradient(
    model: &WavefunctionModel,
    h: &DMatrix<Complex64>,
    psi: &DVector<Complex64>,
) -> Vec<f64> {
    let z = psi.dotc(psi).re;
    let hp = h * psi;
    let e = (psi.dotc(&hp)).re / z;
    tangents(model, psi)
        .iter()
        .map(|d| 2.0 * (d.dotc(&hp) - d.dotc(psi) * e).re / z)
        .collect()
}

/// Fubini-Study metric of the real parameters.
pub fn dense_qgt(model: &WavefunctionModel, psi: &DVector<Complex64>) -> DMatrix<f64> {
    let z = psi.dotc(psi).re;
    let t = tangents(model, psi);
    let overlaps: Vec<Complex64> = t.iter().map(|d| d.dotc(psi) / z).collect();
    let n_p = t.len();
    DMatrix::from_fn(n_p, n_p, |i, j| {
        (t[i].dotc(&t[j]) / z - overlaps[i].conj() * overlaps[j]).re
    })
}

pub fn dense_infidelity(psi: &DVector<Complex64>, phi: &DVector<Complex64>) -> f64 {
    let o = psi.dotc(phi);
    1.0 - o.norm_sqr() / (psi.dotc(psi).re * phi.dotc(phi).re)
}

/// Central finite differences of `f` in every real parameter.
pub fn fd_gradient(model: &WavefunctionModel, step: f64, f: impl Fn(&WavefunctionModel) -> f64) -> Vec<f64> {
    (0..model.n_params())
        .map(|i| {
            let mut e = vec![0.0; model.n_params()];
            e[i] = step;
            let plus = f(&model.perturb(&e).unwrap());
            e[i] = -step;
            let minus = f(&model.perturb(&e).unwrap());
            (plus - minus) / (2.0 * step)
        })
        .collect()
}

/// `‖a − b‖∞ / ‖b‖∞`.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let num = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let den = b.iter().map(|y| y.abs()).fold(0.0, f64::max);
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

pub fn all_kinds(n_hidden: usize) -> [ModelKind; 4] {
    [
        ModelKind::LogLinear { complex: false },
        ModelKind::LogLinear { complex: true },
        ModelKind::ComplexRbm { n_hidden },
        ModelKind::MeanFieldProduct,
    ]
}

/// 8-spin periodic TFIM chain used by the sampling tests.
pub fn tfim_chain8() -> (Lattice, vmcis::LocalOperator) {
    let lat = Lattice::chain(8, true).unwrap();
    let op = vmcis::LocalOperator::tfim(&lat, 1.0, 0.7);
    (lat, op)
}

/// Log-linear state with every spin biased up; the all-up configuration
/// carries more than 99.9% of the Born probability.
pub fn peaked_state(n: usize, bias: f64) -> WavefunctionModel {
    WavefunctionModel::new(ModelKind::LogLinear { complex: false }, n, vec![bias; n]).unwrap()
}
