//! Variational Monte Carlo for spin-1/2 lattices with gradients estimated by
//! self-normalized importance sampling from overdispersed distributions
//! `q_α(x) ∝ |ψ(x)|^α`.
//!
//! Every stochastic estimator has an exact counterpart: a [`SampleBatch`]
//! built by [`sample_exact`] enumerates the whole basis and carries the exact
//! probabilities, so the same estimator code returns full-summation values.

pub mod adaptive;
pub mod ansatz;
pub mod checkpoint;
pub mod error;
pub mod estimators;
pub mod exact;
pub mod infidelity;
pub mod lattice;
pub mod numerics;
pub mod operators;
pub mod optimizer;
pub mod sampler;

pub use adaptive::{
    dalpha_objective, dalpha_variance, update_alpha, AlphaUpdate, OverdispersionState,
};
pub use ansatz::{JacobianMatrix, LogAmplitude, ModelKind, ParameterVector, WavefunctionModel};
pub use error::{Error, Result};
pub use estimators::{
    component_variance, compute_weights, ess_and_bias, estimate, gradient_estimate, kl_divergence,
    qgt_estimate, snis_mean, snr_and_objective, stability_criterion, EstimatorReport,
    ReferenceDistributions, WeightSet,
};
pub use infidelity::{
    estimate_infidelity, fidelity_local, infidelity_gradient, run_compression, FidelityEstimate,
    TargetState,
};
pub use lattice::{enumerate_basis, BasisEnumeration, Geometry, Lattice, SpinConfig};
pub use operators::{local_values, LocalOperator, OperatorKind};
pub use optimizer::{
    momentum_blend, run_ground_state, run_sr, sr_solve, ControllerConfig, Decay, RunOutcome,
    Sampler, Schedule, SrConfig, TraceRecord,
};
pub use sampler::{
    chain_diagnostics, sample_exact, sample_mcmc, McmcSampler, MoveKind, SampleBatch,
    SamplerConfig, SamplingMode,
};
