//! Exact linear algebra on enumerated bases: Hamiltonian matrices,
//! ground states and the short-time propagator.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ansatz::LogAmplitude;
use crate::error::{Error, Result};
use crate::lattice::BasisEnumeration;
use crate::operators::LocalOperator;

/// Largest basis handled with dense matrices.
pub const MAX_DENSE_DIM: usize = 4096;

/// Operator restricted to an enumerated basis, in compressed-row form.
///
/// Matrix elements leaving the basis (for instance out of a magnetization
/// sector) are dropped.
#[derive(Debug, Clone)]
pub struct SparseMatrix {
    dim: usize,
    row_start: Vec<usize>,
    cols: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn from_operator(op: &LocalOperator, basis: &BasisEnumeration) -> Result<Self> {
        if op.n_sites() != basis.n_sites() {
            return Err(Error::SizeMismatch {
                what: "operator sites",
                expected: basis.n_sites(),
                got: op.n_sites(),
            });
        }
        let mut row_start = Vec::with_capacity(basis.len() + 1);
        let mut cols = Vec::new();
        let mut values = Vec::new();
        let mut elements = Vec::new();
        row_start.push(0);
        for &x in basis.configs() {
            op.connected_into(x, &mut elements);
            for &(y, mel) in &elements {
                if let Some(c) = basis.index_of(y) {
                    cols.push(c);
                    values.push(mel);
                }
            }
            row_start.push(cols.len());
        }
        Ok(Self {
            dim: basis.len(),
            row_start,
            cols,
            values,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mul_vec(&self, v: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            let lo = self.row_start[r];
            let hi = self.row_start[r + 1];
            *o = (lo..hi).map(|k| self.values[k] * v[self.cols[k]]).sum();
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for r in 0..self.dim {
            for k in self.row_start[r]..self.row_start[r + 1] {
                m[(r, self.cols[k])] += self.values[k];
            }
        }
        m
    }
}

pub fn dense_matrix(op: &LocalOperator, basis: &BasisEnumeration) -> Result<DMatrix<f64>> {
    if basis.len() > MAX_DENSE_DIM {
        return Err(Error::OracleOnly(format!(
            "dense matrix of dimension {} exceeds {MAX_DENSE_DIM}",
            basis.len()
        )));
    }
    Ok(SparseMatrix::from_operator(op, basis)?.to_dense())
}

#[derive(Debug, Clone)]
pub struct GroundState {
    pub energy: f64,
    /// Normalized eigenvector in basis order.
    pub vector: Vec<f64>,
}

/// Lowest eigenpair on the given basis: dense diagonalization for small
/// bases, Lanczos with full reorthogonalization otherwise.
pub fn ground_state(op: &LocalOperator, basis: &BasisEnumeration) -> Result<GroundState> {
    let h = SparseMatrix::from_operator(op, basis)?;
    if h.dim() <= 1024 {
        let eig = SymmetricEigen::new(h.to_dense());
        let k = eig.eigenvalues.imin();
        return Ok(GroundState {
            energy: eig.eigenvalues[k],
            vector: eig.eigenvectors.column(k).iter().copied().collect(),
        });
    }
    lanczos_ground_state(&h, 400, 1e-12)
}

fn lanczos_ground_state(h: &SparseMatrix, max_iter: usize, tol: f64) -> Result<GroundState> {
    let n = h.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(0x1a2c_05);
    let mut v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    normalize(&mut v);
    let mut basis: Vec<Vec<f64>> = vec![v];
    let mut alphas = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut w = vec![0.0; n];
    let mut prev_energy = f64::INFINITY;
    for it in 0..max_iter.min(n) {
        h.mul_vec(&basis[it], &mut w);
        let a = dot(&w, &basis[it]);
        alphas.push(a);
        for q in &basis {
            let c = dot(&w, q);
            axpy(-c, q, &mut w);
        }
        // second pass keeps the Krylov basis orthogonal to working precision
        for q in &basis {
            let c = dot(&w, q);
            axpy(-c, q, &mut w);
        }
        let b = dot(&w, &w).sqrt();
        let (energy, ritz) = tridiagonal_lowest(&alphas, &betas);
        let residual = b * ritz[ritz.len() - 1].abs();
        if residual < tol * energy.abs().max(1.0) || b < 1e-14 || (prev_energy - energy).abs() < 1e-15 && it > 20 {
            return Ok(GroundState {
                energy,
                vector: combine(&basis, &ritz),
            });
        }
        prev_energy = energy;
        betas.push(b);
        let next: Vec<f64> = w.iter().map(|x| x / b).collect();
        basis.push(next);
    }
    Err(Error::LinearSolve(format!(
        "Lanczos did not converge in {max_iter} iterations"
    )))
}

fn tridiagonal_lowest(alphas: &[f64], betas: &[f64]) -> (f64, Vec<f64>) {
    let m = alphas.len();
    let mut t = DMatrix::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alphas[i];
        if i + 1 < m {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    let k = eig.eigenvalues.imin();
    (
        eig.eigenvalues[k],
        eig.eigenvectors.column(k).iter().copied().collect(),
    )
}

fn combine(basis: &[Vec<f64>], coeffs: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; basis[0].len()];
    for (q, &c) in basis.iter().zip(coeffs) {
        axpy(c, q, &mut out);
    }
    normalize(&mut out);
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(c: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += c * xi;
    }
}

fn normalize(v: &mut [f64]) {
    let n = dot(v, v).sqrt();
    for x in v.iter_mut() {
        *x /= n;
    }
}

/// Normalized amplitudes `ψ(x)/‖ψ‖` in basis order.
pub fn state_vector<M: LogAmplitude + ?Sized>(
    model: &M,
    basis: &BasisEnumeration,
) -> Result<Vec<Complex64>> {
    let logs: Vec<Complex64> = basis
        .configs()
        .iter()
        .map(|&x| model.log_amplitude(x))
        .collect::<Result<_>>()?;
    let max = logs.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::DegenerateState);
    }
    let mut v: Vec<Complex64> = logs.iter().map(|l| (l - max).exp()).collect();
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    for z in v.iter_mut() {
        *z /= norm;
    }
    Ok(v)
}

/// `exp(-i dt H) v` on the enumerated basis via a dense eigendecomposition.
pub fn apply_propagator(
    op: &LocalOperator,
    basis: &BasisEnumeration,
    v: &[Complex64],
    dt: f64,
) -> Result<Vec<Complex64>> {
    if v.len() != basis.len() {
        return Err(Error::SizeMismatch {
            what: "state vector",
            expected: basis.len(),
            got: v.len(),
        });
    }
    let eig = SymmetricEigen::new(dense_matrix(op, basis)?);
    let u = &eig.eigenvectors;
    let re = DVector::from_iterator(v.len(), v.iter().map(|z| z.re));
    let im = DVector::from_iterator(v.len(), v.iter().map(|z| z.im));
    let cre = u.tr_mul(&re);
    let cim = u.tr_mul(&im);
    let mut rot_re = DVector::zeros(v.len());
    let mut rot_im = DVector::zeros(v.len());
    for k in 0..v.len() {
        let phase = Complex64::new(0.0, -dt * eig.eigenvalues[k]).exp();
        let c = Complex64::new(cre[k], cim[k]) * phase;
        rot_re[k] = c.re;
        rot_im[k] = c.im;
    }
    let out_re = u * rot_re;
    let out_im = u * rot_im;
    Ok(out_re
        .iter()
        .zip(out_im.iter())
        .map(|(&a, &b)| Complex64::new(a, b))
        .collect())
}
