//! Samples from `q_α(x) ∝ |ψ(x)|^α`, either by exhaustive enumeration or by
//! Metropolis chains.

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ansatz::LogAmplitude;
use crate::error::{Error, Result};
use crate::lattice::{BasisEnumeration, SpinConfig};
use crate::numerics::softmax;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingMode {
    Exact,
    Mcmc,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MoveKind {
    /// Flip one uniformly chosen spin.
    Flip,
    /// Swap the two spins of a uniformly chosen bond; conserves magnetization.
    Exchange { bonds: Vec<(usize, usize)> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub mode: SamplingMode,
    pub n_samples: usize,
    pub n_chains: usize,
    /// Sweeps discarded before the first sample; `None` means `10·N`.
    pub burn_in_sweeps: Option<usize>,
    /// Sweeps discarded when a persistent chain resumes for a new round.
    pub reburn_sweeps: usize,
    pub sweeps_per_sample: usize,
    pub move_kind: MoveKind,
    /// Number of up spins for the initial configurations of exchange chains;
    /// `None` means `N/2`.
    pub sector: Option<usize>,
    pub seed: u64,
}

impl SamplerConfig {
    pub fn mcmc(n_samples: usize, n_chains: usize, move_kind: MoveKind, seed: u64) -> Self {
        Self {
            mode: SamplingMode::Mcmc,
            n_samples,
            n_chains,
            burn_in_sweeps: None,
            reburn_sweeps: 0,
            sweeps_per_sample: 1,
            move_kind,
            sector: None,
            seed,
        }
    }

    pub fn samples_per_chain(&self) -> usize {
        self.n_samples.div_ceil(self.n_chains.max(1))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples < 2 {
            return Err(Error::InvalidArgument(format!(
                "n_samples must be at least 2, got {}",
                self.n_samples
            )));
        }
        if self.n_chains == 0 || self.sweeps_per_sample == 0 {
            return Err(Error::InvalidArgument(
                "n_chains and sweeps_per_sample must be positive".into(),
            ));
        }
        if let MoveKind::Exchange { bonds } = &self.move_kind {
            if bonds.is_empty() {
                return Err(Error::InvalidArgument("exchange move needs bonds".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    configs: Vec<SpinConfig>,
    log_amps: Vec<Complex64>,
    log_q_unnorm: Vec<f64>,
    alpha: f64,
    mode: SamplingMode,
    exact_probs: Option<Vec<f64>>,
    acceptance_rate: Option<f64>,
    n_chains: usize,
    samples_per_chain: usize,
}

fn log_q(alpha: f64, l: Complex64) -> f64 {
    // zero amplitudes stay outside the support for every α, including 0
    if l.re == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else {
        alpha * l.re
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "alpha must be finite and non-negative, got {alpha}"
        )));
    }
    Ok(())
}

impl SampleBatch {
    /// An MCMC-mode batch holding the given configurations as one chain.
    pub fn from_configs<M: LogAmplitude + ?Sized>(
        model: &M,
        alpha: f64,
        configs: Vec<SpinConfig>,
    ) -> Result<Self> {
        check_alpha(alpha)?;
        let log_amps: Vec<Complex64> = configs
            .iter()
            .map(|&x| model.log_amplitude(x))
            .collect::<Result<_>>()?;
        let n = configs.len();
        Ok(Self {
            log_q_unnorm: log_amps.iter().map(|&l| log_q(alpha, l)).collect(),
            configs,
            log_amps,
            alpha,
            mode: SamplingMode::Mcmc,
            exact_probs: None,
            acceptance_rate: None,
            n_chains: 1,
            samples_per_chain: n,
        })
    }

    pub fn configs(&self) -> &[SpinConfig] {
        &self.configs
    }

    pub fn log_amps(&self) -> &[Complex64] {
        &self.log_amps
    }

    /// `α Re log ψ(x_μ)`.
    pub fn log_q_unnorm(&self) -> &[f64] {
        &self.log_q_unnorm
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn mode(&self) -> SamplingMode {
        self.mode
    }

    pub fn exact_probs(&self) -> Option<&[f64]> {
        self.exact_probs.as_deref()
    }

    pub fn acceptance_rate(&self) -> Option<f64> {
        self.acceptance_rate
    }

    pub fn n_chains(&self) -> usize {
        self.n_chains
    }

    pub fn samples_per_chain(&self) -> usize {
        self.samples_per_chain
    }

    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }

    /// Per-sample probability mass: `q(x)` in exact mode, `1/N_s` otherwise.
    pub fn masses(&self) -> Vec<f64> {
        match &self.exact_probs {
            Some(p) => p.clone(),
            None => vec![1.0 / self.len() as f64; self.len()],
        }
    }
}

/// Enumerates `basis` with exact probabilities `|ψ|^α / Z_α`.
pub fn sample_exact<M: LogAmplitude + ?Sized>(
    model: &M,
    alpha: f64,
    basis: &BasisEnumeration,
) -> Result<SampleBatch> {
    check_alpha(alpha)?;
    if basis.is_empty() {
        return Err(Error::InvalidArgument("empty basis".into()));
    }
    if basis.n_sites() != model.n_sites() {
        return Err(Error::SizeMismatch {
            what: "basis sites",
            expected: model.n_sites(),
            got: basis.n_sites(),
        });
    }
    let log_amps: Vec<Complex64> = basis
        .configs()
        .par_iter()
        .map(|&x| model.log_amplitude_unchecked(x))
        .collect();
    let log_q_unnorm: Vec<f64> = log_amps.iter().map(|&l| log_q(alpha, l)).collect();
    let probs = softmax(&log_q_unnorm).ok_or(Error::DegenerateState)?;
    Ok(SampleBatch {
        configs: basis.configs().to_vec(),
        log_amps,
        log_q_unnorm,
        alpha,
        mode: SamplingMode::Exact,
        exact_probs: Some(probs),
        acceptance_rate: None,
        n_chains: 1,
        samples_per_chain: basis.len(),
    })
}

const STALL_RETRIES: usize = 8;

fn chain_rng(seed: u64, round: u64, chain: u64, attempt: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    for (k, w) in [seed, round, chain, attempt].into_iter().enumerate() {
        key[8 * k..8 * k + 8].copy_from_slice(&w.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Metropolis sampler whose chains persist across calls.
#[derive(Debug, Clone)]
pub struct McmcSampler {
    cfg: SamplerConfig,
    n_sites: usize,
    chains: Option<Vec<SpinConfig>>,
    round: u64,
}

struct ChainOutput {
    samples: Vec<SpinConfig>,
    log_amps: Vec<Complex64>,
    accepted: usize,
    proposed: usize,
    last: SpinConfig,
}

impl McmcSampler {
    pub fn new(cfg: SamplerConfig, n_sites: usize) -> Result<Self> {
        cfg.validate()?;
        if let MoveKind::Exchange { bonds } = &cfg.move_kind {
            if bonds.iter().any(|&(i, j)| i >= n_sites || j >= n_sites) {
                return Err(Error::InvalidArgument("bond outside the lattice".into()));
            }
        }
        Ok(Self {
            cfg,
            n_sites,
            chains: None,
            round: 0,
        })
    }

    /// Starts the chains from the given configurations and skips burn-in.
    pub fn with_initial_configs(cfg: SamplerConfig, initial: Vec<SpinConfig>) -> Result<Self> {
        let n_sites = initial.first().map(|x| x.n_sites()).unwrap_or(0);
        let mut s = Self::new(
            SamplerConfig {
                n_chains: initial.len(),
                ..cfg
            },
            n_sites,
        )?;
        s.chains = Some(initial);
        Ok(s)
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.cfg
    }

    pub fn set_n_samples(&mut self, n_samples: usize) {
        self.cfg.n_samples = n_samples.max(2);
    }

    /// Shifts the seed of all future rounds, used to retry a failed step.
    pub fn reseed(&mut self, offset: u64) {
        self.cfg.seed = self.cfg.seed.wrapping_add(offset);
    }

    fn random_config(&self, rng: &mut ChaCha8Rng) -> SpinConfig {
        let n = self.n_sites;
        let bits = match &self.cfg.move_kind {
            MoveKind::Flip => {
                let mask = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
                rng.random::<u64>() & mask
            }
            MoveKind::Exchange { .. } => {
                let n_up = self.cfg.sector.unwrap_or(n / 2).min(n);
                let mut sites: Vec<usize> = (0..n).collect();
                sites.shuffle(rng);
                sites[..n_up].iter().fold(0u64, |b, &s| b | (1u64 << s))
            }
        };
        SpinConfig::new(bits, n).expect("masked bits")
    }

    fn propose(&self, x: SpinConfig, rng: &mut ChaCha8Rng) -> SpinConfig {
        match &self.cfg.move_kind {
            MoveKind::Flip => x.flipped(rng.random_range(0..self.n_sites)),
            MoveKind::Exchange { bonds } => {
                let (i, j) = bonds[rng.random_range(0..bonds.len())];
                x.exchanged(i, j)
            }
        }
    }

    /// Advances `x` by one Metropolis step. Returns whether it was accepted.
    #[inline]
    fn step<M: LogAmplitude + ?Sized>(
        &self,
        model: &M,
        alpha: f64,
        x: &mut SpinConfig,
        l: &mut Complex64,
        rng: &mut ChaCha8Rng,
        scratch: &mut Vec<Complex64>,
    ) -> bool {
        let y = self.propose(*x, rng);
        let u: f64 = rng.random();
        if y == *x {
            return true;
        }
        model.log_amplitudes_near(*x, &[y], scratch);
        let ly = scratch[0];
        let accept = if ly.re == f64::NEG_INFINITY {
            // wander freely only while the chain has not reached the support
            l.re == f64::NEG_INFINITY
        } else if l.re == f64::NEG_INFINITY {
            true
        } else {
            let delta = alpha * (ly.re - l.re);
            delta >= 0.0 || u < delta.exp()
        };
        if accept {
            *x = y;
            *l = ly;
        }
        accept
    }

    fn run_chain<M: LogAmplitude + ?Sized>(
        &self,
        model: &M,
        alpha: f64,
        chain: usize,
        start: Option<SpinConfig>,
        burn_in: usize,
    ) -> Result<ChainOutput> {
        let n = self.n_sites;
        let spc = self.cfg.samples_per_chain();
        let mut scratch = Vec::with_capacity(1);
        for attempt in 0..STALL_RETRIES as u64 {
            let mut rng = chain_rng(self.cfg.seed, self.round, chain as u64, attempt);
            let mut x = match start {
                Some(s) if attempt == 0 => s,
                _ => self.random_config(&mut rng),
            };
            let mut l = model.log_amplitude_unchecked(x);
            for _ in 0..burn_in * n {
                self.step(model, alpha, &mut x, &mut l, &mut rng, &mut scratch);
            }
            if l.re == f64::NEG_INFINITY {
                continue;
            }
            let mut out = ChainOutput {
                samples: Vec::with_capacity(spc),
                log_amps: Vec::with_capacity(spc),
                accepted: 0,
                proposed: 0,
                last: x,
            };
            for _ in 0..spc {
                for _ in 0..self.cfg.sweeps_per_sample * n {
                    out.proposed += 1;
                    if self.step(model, alpha, &mut x, &mut l, &mut rng, &mut scratch) {
                        out.accepted += 1;
                    }
                }
                out.samples.push(x);
                out.log_amps.push(l);
            }
            out.last = x;
            return Ok(out);
        }
        Err(Error::SamplerStall(format!(
            "chain {chain} found no configuration with non-zero amplitude after {STALL_RETRIES} attempts"
        )))
    }

    /// Draws one batch; chains resume from where the previous call left them.
    pub fn sample<M: LogAmplitude + ?Sized>(&mut self, model: &M, alpha: f64) -> Result<SampleBatch> {
        check_alpha(alpha)?;
        if model.n_sites() != self.n_sites {
            return Err(Error::SizeMismatch {
                what: "model sites",
                expected: self.n_sites,
                got: model.n_sites(),
            });
        }
        let (starts, burn_in): (Vec<Option<SpinConfig>>, usize) = match &self.chains {
            Some(c) if self.round == 0 => (c.iter().copied().map(Some).collect(), 0),
            Some(c) => (c.iter().copied().map(Some).collect(), self.cfg.reburn_sweeps),
            None => (
                vec![None; self.cfg.n_chains],
                self.cfg.burn_in_sweeps.unwrap_or(10 * self.n_sites),
            ),
        };
        let outputs: Vec<ChainOutput> = starts
            .par_iter()
            .enumerate()
            .map(|(c, &s)| self.run_chain(model, alpha, c, s, burn_in))
            .collect::<Result<_>>()?;
        self.round += 1;
        self.chains = Some(outputs.iter().map(|o| o.last).collect());

        let accepted: usize = outputs.iter().map(|o| o.accepted).sum();
        let proposed: usize = outputs.iter().map(|o| o.proposed).sum();
        let mut configs = Vec::new();
        let mut log_amps = Vec::new();
        for o in outputs {
            configs.extend(o.samples);
            log_amps.extend(o.log_amps);
        }
        Ok(SampleBatch {
            log_q_unnorm: log_amps.iter().map(|&l| log_q(alpha, l)).collect(),
            configs,
            log_amps,
            alpha,
            mode: SamplingMode::Mcmc,
            exact_probs: None,
            acceptance_rate: Some(if proposed == 0 {
                1.0
            } else {
                accepted as f64 / proposed as f64
            }),
            n_chains: self.cfg.n_chains,
            samples_per_chain: self.cfg.samples_per_chain(),
        })
    }
}

/// One batch from freshly initialized chains.
pub fn sample_mcmc<M: LogAmplitude + ?Sized>(
    model: &M,
    alpha: f64,
    cfg: &SamplerConfig,
) -> Result<SampleBatch> {
    McmcSampler::new(cfg.clone(), model.n_sites())?.sample(model, alpha)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainDiagnostics {
    pub acceptance_rate: f64,
    pub split_rhat: f64,
}

/// Acceptance rate and split-R̂ of `Re log ψ` across the chains of a batch.
pub fn chain_diagnostics(batch: &SampleBatch) -> Result<ChainDiagnostics> {
    if batch.mode() != SamplingMode::Mcmc || batch.n_chains() < 2 {
        return Err(Error::DiagnosticsNotApplicable);
    }
    let spc = batch.samples_per_chain();
    let half = spc / 2;
    if half < 2 {
        return Err(Error::InsufficientSamples {
            required: 4,
            got: spc,
        });
    }
    let mut means = Vec::new();
    let mut vars = Vec::new();
    for c in 0..batch.n_chains() {
        let chain = &batch.log_amps()[c * spc..(c + 1) * spc];
        for part in [&chain[..half], &chain[spc - half..]] {
            let m = part.iter().map(|l| l.re).sum::<f64>() / half as f64;
            let v = part.iter().map(|l| (l.re - m).powi(2)).sum::<f64>() / (half - 1) as f64;
            means.push(m);
            vars.push(v);
        }
    }
    let k = means.len() as f64;
    let n = half as f64;
    let grand = means.iter().sum::<f64>() / k;
    let b = n * means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (k - 1.0);
    let w = vars.iter().sum::<f64>() / k;
    let split_rhat = if w == 0.0 && b == 0.0 {
        1.0
    } else if w == 0.0 {
        f64::INFINITY
    } else {
        (((n - 1.0) / n * w + b / n) / w).sqrt()
    };
    Ok(ChainDiagnostics {
        acceptance_rate: batch.acceptance_rate().unwrap_or(1.0),
        split_rhat,
    })
}
