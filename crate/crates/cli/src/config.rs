//! Run configuration files.
//!
//! A run is described by one TOML document; see `docs/config.md` for the
//! full schema. Unknown keys are rejected everywhere.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vmcis::infidelity::DEFAULT_CV;
use vmcis::{
    Lattice, LocalOperator, ModelKind, MoveKind, OverdispersionState, SamplerConfig,
    SamplingMode, Schedule, SrConfig,
};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Gs,
    Infid,
    SnrScan,
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::Gs => "gs",
            Task::Infid => "infid",
            Task::SnrScan => "snr-scan",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub task: Task,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub system: SystemConfig,
    pub ansatz: AnsatzConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampler: Option<SamplerSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sr: Option<SrSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controller: Option<ControllerSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compression: Option<CompressionSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan: Option<ScanSection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatticeKind {
    Chain,
    Square,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum HamiltonianConfig {
    Heisenberg {
        j1: f64,
        #[serde(default)]
        j2: f64,
    },
    Tfim {
        j: f64,
        h: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub lattice: LatticeKind,
    /// Chain length, or side of the square lattice.
    pub size: usize,
    pub periodic: bool,
    /// Required by `gs` and `snr-scan`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hamiltonian: Option<HamiltonianConfig>,
    /// Number of up spins; restricts exact enumeration and exchange chains.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sector: Option<usize>,
}

impl SystemConfig {
    pub fn lattice(&self) -> Result<Lattice, CliError> {
        let lat = match self.lattice {
            LatticeKind::Chain => Lattice::chain(self.size, self.periodic),
            LatticeKind::Square => Lattice::square(self.size, self.periodic),
        };
        lat.map_err(|e| CliError::Config(format!("system: {e}")))
    }

    pub fn operator(&self, lattice: &Lattice) -> Result<LocalOperator, CliError> {
        match self.hamiltonian {
            Some(HamiltonianConfig::Heisenberg { j1, j2 }) => Ok(LocalOperator::heisenberg_j1j2(lattice, j1, j2)),
            Some(HamiltonianConfig::Tfim { j, h }) => Ok(LocalOperator::tfim(lattice, j, h)),
            None => Err(CliError::Config("system: missing field `hamiltonian`".into())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnsatzKind {
    LogLinear,
    LogLinearComplex,
    Rbm,
    MeanField,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnsatzConfig {
    pub kind: AnsatzKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_hidden: Option<usize>,
    /// Half-width of the uniform initial parameter distribution.
    #[serde(default)]
    pub init_scale: f64,
    /// Initial parameters; overrides `init_scale`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
}

impl AnsatzConfig {
    pub fn model_kind(&self) -> Result<ModelKind, CliError> {
        Ok(match self.kind {
            AnsatzKind::LogLinear => ModelKind::LogLinear { complex: false },
            AnsatzKind::LogLinearComplex => ModelKind::LogLinear { complex: true },
            AnsatzKind::MeanField => ModelKind::MeanFieldProduct,
            AnsatzKind::Rbm => ModelKind::ComplexRbm {
                n_hidden: self
                    .n_hidden
                    .ok_or_else(|| CliError::Config("ansatz: missing field `n_hidden`".into()))?,
            },
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MoveConfig {
    Flip,
    Exchange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSection {
    pub mode: SamplingMode,
    #[serde(default = "default_n_samples")]
    pub n_samples: usize,
    #[serde(default = "default_n_chains")]
    pub n_chains: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in_sweeps: Option<usize>,
    #[serde(default)]
    pub reburn_sweeps: usize,
    #[serde(default = "default_sweeps")]
    pub sweeps_per_sample: usize,
    #[serde(default = "default_move", rename = "move")]
    pub move_kind: MoveConfig,
}

fn default_n_samples() -> usize {
    1 << 12
}

fn default_n_chains() -> usize {
    16
}

fn default_sweeps() -> usize {
    1
}

fn default_move() -> MoveConfig {
    MoveConfig::Flip
}

impl Default for SamplerSection {
    fn default() -> Self {
        Self {
            mode: SamplingMode::Exact,
            n_samples: default_n_samples(),
            n_chains: default_n_chains(),
            burn_in_sweeps: None,
            reburn_sweeps: 0,
            sweeps_per_sample: default_sweeps(),
            move_kind: default_move(),
        }
    }
}

impl SamplerSection {
    pub fn sampler_config(&self, lattice: &Lattice, sector: Option<usize>, seed: u64) -> SamplerConfig {
        SamplerConfig {
            mode: self.mode,
            n_samples: self.n_samples,
            n_chains: self.n_chains,
            burn_in_sweeps: self.burn_in_sweeps,
            reburn_sweeps: self.reburn_sweeps,
            sweeps_per_sample: self.sweeps_per_sample,
            move_kind: match self.move_kind {
                MoveConfig::Flip => MoveKind::Flip,
                MoveConfig::Exchange => MoveKind::Exchange {
                    bonds: lattice.nn_pairs().to_vec(),
                },
            },
            sector,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SrSection {
    pub n_steps: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: Schedule,
    #[serde(default = "default_shift")]
    pub diag_shift: Schedule,
    #[serde(default)]
    pub momentum: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adaptive_samples: Option<vmcis::optimizer::AdaptiveSamples>,
}

fn default_lr() -> Schedule {
    SrConfig::default().learning_rate
}

fn default_shift() -> Schedule {
    SrConfig::default().diag_shift
}

impl SrSection {
    pub fn sr_config(&self) -> SrConfig {
        SrConfig {
            n_steps: self.n_steps,
            learning_rate: self.learning_rate,
            diag_shift: self.diag_shift,
            momentum: self.momentum,
            adaptive_samples: self.adaptive_samples,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSection {
    #[serde(default)]
    pub enabled: bool,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_max_step")]
    pub max_step: f64,
    #[serde(default = "default_alpha_min")]
    pub alpha_min: f64,
    #[serde(default = "default_alpha_max")]
    pub alpha_max: f64,
}

fn default_alpha() -> f64 {
    OverdispersionState::default().alpha
}

fn default_eta() -> f64 {
    OverdispersionState::default().eta
}

fn default_max_step() -> f64 {
    OverdispersionState::default().max_step
}

fn default_alpha_min() -> f64 {
    OverdispersionState::default().alpha_min
}

fn default_alpha_max() -> f64 {
    OverdispersionState::default().alpha_max
}

impl Default for ControllerSection {
    fn default() -> Self {
        let s = OverdispersionState::default();
        Self {
            enabled: false,
            alpha: s.alpha,
            eta: s.eta,
            max_step: s.max_step,
            alpha_min: s.alpha_min,
            alpha_max: s.alpha_max,
        }
    }
}

impl ControllerSection {
    pub fn controller(&self) -> Result<vmcis::ControllerConfig, CliError> {
        let state = OverdispersionState::new(self.alpha, self.eta, self.max_step, self.alpha_min, self.alpha_max)
            .map_err(|e| CliError::Config(format!("controller: {e}")))?;
        Ok(vmcis::ControllerConfig {
            enabled: self.enabled,
            state,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum TargetConfig {
    /// Frozen model read from a checkpoint.
    Checkpoint(PathBuf),
    /// `exp(−i dt H_quench)` applied to the initial model.
    Quench { j: f64, h: f64, dt: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompressionSection {
    pub target: TargetConfig,
    #[serde(default = "default_cv")]
    pub c: f64,
}

fn default_cv() -> f64 {
    DEFAULT_CV
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSection {
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub points: usize,
}

impl ScanSection {
    pub fn grid(&self) -> Vec<f64> {
        if self.points <= 1 {
            return vec![self.alpha_min];
        }
        let step = (self.alpha_max - self.alpha_min) / (self.points - 1) as f64;
        (0..self.points).map(|k| self.alpha_min + k as f64 * step).collect()
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        if let Some(dir) = path.parent() {
            cfg.resolve_paths(dir);
        }
        Ok(cfg)
    }

    /// Makes relative checkpoint paths relative to `dir` (the config's directory).
    pub fn resolve_paths(&mut self, dir: &Path) {
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        if let Some(p) = self.ansatz.checkpoint.as_mut() {
            resolve(p);
        }
        if let Some(CompressionSection { target: TargetConfig::Checkpoint(p), .. }) = self.compression.as_mut() {
            resolve(p);
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configs always serialize")
    }

    pub fn sampler(&self) -> SamplerSection {
        self.sampler.clone().unwrap_or_default()
    }

    pub fn controller(&self) -> ControllerSection {
        self.controller.unwrap_or_default()
    }

    /// Sector used for enumeration and chain initialization: the configured
    /// one, or half filling for magnetization-conserving Hamiltonians.
    pub fn sector(&self, n_sites: usize) -> Option<usize> {
        match (self.system.sector, self.system.hamiltonian) {
            (Some(k), _) => Some(k),
            (None, Some(HamiltonianConfig::Heisenberg { .. })) if self.task != Task::Infid => {
                Some(n_sites / 2)
            }
            (None, _) => None,
        }
    }

    fn require_hamiltonian(&self) -> Result<(), CliError> {
        match self.system.hamiltonian {
            Some(_) => Ok(()),
            None => Err(CliError::Config(format!(
                "system: missing field `hamiltonian` required by task `{}`",
                self.task.name()
            ))),
        }
    }

    fn validate(&self) -> Result<(), CliError> {
        let missing = |section: &str| CliError::Config(format!("missing section `[{section}]` required by task `{}`", self.task.name()));
        match self.task {
            Task::Gs => {
                self.sr.as_ref().ok_or_else(|| missing("sr"))?;
                self.require_hamiltonian()?;
            }
            Task::Infid => {
                self.sr.as_ref().ok_or_else(|| missing("sr"))?;
                self.compression.as_ref().ok_or_else(|| missing("compression"))?;
            }
            Task::SnrScan => {
                self.scan.as_ref().ok_or_else(|| missing("scan"))?;
                self.require_hamiltonian()?;
            }
        }
        self.ansatz.model_kind()?;
        if let Some(sr) = &self.sr {
            sr.sr_config()
                .validate()
                .map_err(|e| CliError::Config(format!("sr: {e}")))?;
        }
        self.controller().controller()?;
        if let Some(scan) = &self.scan {
            if scan.points == 0 || !(scan.alpha_min >= 0.0) || scan.alpha_max < scan.alpha_min {
                return Err(CliError::Config("scan: need points ≥ 1 and 0 ≤ alpha_min ≤ alpha_max".into()));
            }
        }
        let s = self.sampler();
        if s.mode == SamplingMode::Mcmc {
            let probe = SamplerConfig {
                mode: s.mode,
                n_samples: s.n_samples,
                n_chains: s.n_chains,
                burn_in_sweeps: s.burn_in_sweeps,
                reburn_sweeps: s.reburn_sweeps,
                sweeps_per_sample: s.sweeps_per_sample,
                move_kind: MoveKind::Flip,
                sector: None,
                seed: 0,
            };
            probe
                .validate()
                .map_err(|e| CliError::Config(format!("sampler: {e}")))?;
        }
        Ok(())
    }
}
