//! Shared fixtures for the criterion benchmarks.

use vmcis::{
    Lattice, LocalOperator, ModelKind, MoveKind, SampleBatch, SamplerConfig, WavefunctionModel,
    sample_mcmc,
};

/// A 4×4 periodic Heisenberg problem with a random complex RBM.
pub struct Fixture {
    pub lattice: Lattice,
    pub op: LocalOperator,
    pub model: WavefunctionModel,
}

impl Fixture {
    pub fn heisenberg_4x4(n_hidden: usize) -> Self {
        let lattice = Lattice::square(4, true).expect("valid lattice");
        let op = LocalOperator::heisenberg_j1j2(&lattice, 1.0, 0.0);
        let model = WavefunctionModel::random(ModelKind::ComplexRbm { n_hidden }, 16, 0.1, 7)
            .expect("valid model");
        Self { lattice, op, model }
    }

    pub fn sampler_config(&self, n_samples: usize) -> SamplerConfig {
        let mut cfg = SamplerConfig::mcmc(
            n_samples,
            16,
            MoveKind::Exchange {
                bonds: self.lattice.nn_pairs().to_vec(),
            },
            11,
        );
        cfg.burn_in_sweeps = Some(20);
        cfg
    }

    pub fn batch(&self, n_samples: usize, alpha: f64) -> SampleBatch {
        sample_mcmc(&self.model, alpha, &self.sampler_config(n_samples)).expect("sampling succeeds")
    }
}
