//! Spin Hamiltonians as sparse connected-element maps, and local estimators.

use std::collections::HashMap;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::ansatz::LogAmplitude;
use crate::error::{Error, Result};
use crate::lattice::{Lattice, SpinConfig};
use crate::sampler::{SampleBatch, SamplingMode};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OperatorKind {
    /// `J1 Σ_⟨ij⟩ S_i·S_j + J2 Σ_⟨⟨ij⟩⟩ S_i·S_j`.
    Heisenberg { j1: f64, j2: f64 },
    /// `-4J Σ_⟨ij⟩ S^z_i S^z_j - 2h Σ_i S^x_i`.
    TransverseFieldIsing { j: f64, h: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalOperator {
    kind: OperatorKind,
    n_sites: usize,
    nn_pairs: Vec<(usize, usize)>,
    nnn_pairs: Vec<(usize, usize)>,
}

impl LocalOperator {
    pub fn heisenberg_j1j2(lattice: &Lattice, j1: f64, j2: f64) -> Self {
        Self {
            kind: OperatorKind::Heisenberg { j1, j2 },
            n_sites: lattice.n_sites(),
            nn_pairs: lattice.nn_pairs().to_vec(),
            nnn_pairs: if j2 != 0.0 {
                lattice.nnn_pairs().to_vec()
            } else {
                Vec::new()
            },
        }
    }

    pub fn tfim(lattice: &Lattice, j: f64, h: f64) -> Self {
        Self {
            kind: OperatorKind::TransverseFieldIsing { j, h },
            n_sites: lattice.n_sites(),
            nn_pairs: lattice.nn_pairs().to_vec(),
            nnn_pairs: Vec::new(),
        }
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    /// Whether the operator commutes with the total magnetization.
    pub fn conserves_magnetization(&self) -> bool {
        match self.kind {
            OperatorKind::Heisenberg { .. } => true,
            OperatorKind::TransverseFieldIsing { h, .. } => h == 0.0,
        }
    }

    pub fn diagonal(&self, x: SpinConfig) -> f64 {
        let zz = |pairs: &[(usize, usize)]| -> f64 {
            pairs.iter().map(|&(i, j)| x.sigma(i) * x.sigma(j)).sum()
        };
        match self.kind {
            OperatorKind::Heisenberg { j1, j2 } => {
                0.25 * j1 * zz(&self.nn_pairs) + 0.25 * j2 * zz(&self.nnn_pairs)
            }
            OperatorKind::TransverseFieldIsing { j, .. } => -j * zz(&self.nn_pairs),
        }
    }

    /// Appends `(x', ⟨x|H|x'⟩)` for every connected `x'`, diagonal first.
    pub fn connected_into(&self, x: SpinConfig, out: &mut Vec<(SpinConfig, f64)>) {
        out.clear();
        out.push((x, self.diagonal(x)));
        match self.kind {
            OperatorKind::Heisenberg { j1, j2 } => {
                for (pairs, coupling) in [(&self.nn_pairs, j1), (&self.nnn_pairs, j2)] {
                    if coupling == 0.0 {
                        continue;
                    }
                    for &(i, j) in pairs.iter() {
                        if x.is_up(i) != x.is_up(j) {
                            out.push((x.exchanged(i, j), 0.5 * coupling));
                        }
                    }
                }
            }
            OperatorKind::TransverseFieldIsing { h, .. } => {
                if h != 0.0 {
                    for i in 0..self.n_sites {
                        out.push((x.flipped(i), -h));
                    }
                }
            }
        }
    }

    pub fn connected(&self, x: SpinConfig) -> Result<Vec<(SpinConfig, Complex64)>> {
        if x.n_sites() != self.n_sites {
            return Err(Error::SizeMismatch {
                what: "configuration sites",
                expected: self.n_sites,
                got: x.n_sites(),
            });
        }
        let mut out = Vec::new();
        self.connected_into(x, &mut out);
        Ok(out
            .into_iter()
            .map(|(y, m)| (y, Complex64::new(m, 0.0)))
            .collect())
    }

    /// `Σ_x' ⟨x|H|x'⟩ ψ(x') / ψ(x)` given `log ψ(x)`.
    pub fn local_value<M: LogAmplitude + ?Sized>(
        &self,
        model: &M,
        x: SpinConfig,
        log_psi: Complex64,
    ) -> Complex64 {
        let mut elements = Vec::new();
        let mut logs = Vec::new();
        self.local_value_with(model, x, log_psi, &mut elements, &mut logs)
    }

    fn local_value_with<M: LogAmplitude + ?Sized>(
        &self,
        model: &M,
        x: SpinConfig,
        log_psi: Complex64,
        elements: &mut Vec<(SpinConfig, f64)>,
        logs: &mut Vec<Complex64>,
    ) -> Complex64 {
        self.connected_into(x, elements);
        let mut acc = Complex64::new(elements[0].1, 0.0);
        let others: Vec<SpinConfig> = elements[1..].iter().map(|e| e.0).collect();
        model.log_amplitudes_near(x, &others, logs);
        for ((_, mel), l) in elements[1..].iter().zip(logs.iter()) {
            acc += *mel * (l - log_psi).exp();
        }
        acc
    }
}

/// Local values `ℓ(x_μ)` for every sample of a batch, in batch order.
///
/// Samples with zero amplitude are an error for MCMC batches; exact batches
/// carry them with zero probability and receive a local value of zero.
pub fn local_values<M: LogAmplitude + ?Sized>(
    op: &LocalOperator,
    model: &M,
    batch: &SampleBatch,
) -> Result<Vec<Complex64>> {
    if op.n_sites() != model.n_sites() {
        return Err(Error::SizeMismatch {
            what: "operator sites",
            expected: model.n_sites(),
            got: op.n_sites(),
        });
    }
    let exact = batch.mode() == SamplingMode::Exact;
    if !exact {
        if let Some(index) = batch.log_amps().iter().position(|l| l.re == f64::NEG_INFINITY) {
            return Err(Error::ZeroAmplitudeInBatch { index });
        }
    }
    if exact {
        return Ok(exact_local_values(op, model, batch));
    }
    Ok(batch
        .configs()
        .par_iter()
        .zip(batch.log_amps().par_iter())
        .map_init(
            || (Vec::new(), Vec::new()),
            |(elements, logs), (&x, &l)| {
                if l.re == f64::NEG_INFINITY {
                    Complex64::new(0.0, 0.0)
                } else {
                    op.local_value_with(model, x, l, elements, logs)
                }
            },
        )
        .collect())
}

/// Enumerated batches already hold `log ψ` on the whole basis, so connected
/// configurations are looked up instead of re-evaluated.
fn exact_local_values<M: LogAmplitude + ?Sized>(
    op: &LocalOperator,
    model: &M,
    batch: &SampleBatch,
) -> Vec<Complex64> {
    let index: HashMap<u64, usize> = batch
        .configs()
        .iter()
        .enumerate()
        .map(|(i, x)| (x.bits(), i))
        .collect();
    let log_amps = batch.log_amps();
    batch
        .configs()
        .par_iter()
        .zip(log_amps.par_iter())
        .map_init(Vec::new, |elements, (&x, &l)| {
            if l.re == f64::NEG_INFINITY {
                return Complex64::new(0.0, 0.0);
            }
            op.connected_into(x, elements);
            let mut acc = Complex64::new(elements[0].1, 0.0);
            for &(y, mel) in &elements[1..] {
                let ly = match index.get(&y.bits()) {
                    Some(&i) => log_amps[i],
                    None => model.log_amplitude_unchecked(y),
                };
                acc += mel * (ly - l).exp();
            }
            acc
        })
        .collect()
}
