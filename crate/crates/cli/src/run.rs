//! Task drivers.

use std::path::{Path, PathBuf};

use serde::Serialize;
use vmcis::exact::ground_state;
use vmcis::infidelity::TargetState;
use vmcis::{
    checkpoint, compute_weights, enumerate_basis, ess_and_bias, local_values,
    run_compression, run_ground_state, sample_exact, snis_mean, BasisEnumeration, JacobianMatrix,
    Lattice, LocalOperator, ReferenceDistributions, RunOutcome, Sampler, SamplingMode,
    WavefunctionModel,
};

use crate::config::{RunConfig, Task, TargetConfig};
use crate::output::{write_atomic, write_json, write_jsonl};
use crate::CliError;

/// Seed offset separating the target sampler's chains from the model's.
const TARGET_SEED_OFFSET: u64 = 0x5851_f42d_4c95_7f2d;

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct Summary {
    task: &'static str,
    seed: u64,
    steps: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    final_energy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    exact_energy: Option<f64>,
    /// `(E − E₀)/|E₀|`, present when the run enumerated its basis.
    #[serde(skip_serializing_if = "Option::is_none")]
    rel_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    initial_infidelity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    final_infidelity: Option<f64>,
    final_alpha: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    aborted: Option<String>,
}

fn config_err(context: &str) -> impl Fn(vmcis::Error) -> CliError + '_ {
    move |e| CliError::Config(format!("{context}: {e}"))
}

fn runtime_err(e: vmcis::Error) -> CliError {
    CliError::Runtime(e.to_string())
}

/// Runs the task of `cfg`; the task named on the command line must match.
pub fn execute(task: Task, mut cfg: RunConfig, overrides: &Overrides) -> Result<PathBuf, CliError> {
    if task != cfg.task {
        return Err(CliError::Config(format!(
            "subcommand `{}` does not match config task `{}`",
            task.name(),
            cfg.task.name()
        )));
    }
    if let Some(seed) = overrides.seed {
        cfg.seed = seed;
    }
    let out_dir = overrides
        .output
        .clone()
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("vmcis-out"));
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::Config(format!("cannot create {}: {e}", out_dir.display())))?;
    match task {
        Task::Gs => cmd_gs(&cfg, &out_dir)?,
        Task::Infid => cmd_infid(&cfg, &out_dir)?,
        Task::SnrScan => cmd_snr_scan(&cfg, &out_dir)?,
    }
    Ok(out_dir)
}

fn initial_model(cfg: &RunConfig, n_sites: usize) -> Result<WavefunctionModel, CliError> {
    let model = match &cfg.ansatz.checkpoint {
        Some(path) => checkpoint::load(path).map_err(config_err(&path.display().to_string()))?,
        None => WavefunctionModel::random(cfg.ansatz.model_kind()?, n_sites, cfg.ansatz.init_scale, cfg.seed)
            .map_err(config_err("ansatz"))?,
    };
    if vmcis::LogAmplitude::n_sites(&model) != n_sites {
        return Err(CliError::Config(format!(
            "ansatz: checkpoint has {} sites, system has {n_sites}",
            vmcis::LogAmplitude::n_sites(&model)
        )));
    }
    Ok(model)
}

fn basis(n_sites: usize, sector: Option<usize>) -> Result<BasisEnumeration, CliError> {
    enumerate_basis(n_sites, sector).map_err(config_err("system"))
}

fn make_sampler(cfg: &RunConfig, lattice: &Lattice, sector: Option<usize>, seed: u64) -> Result<Sampler, CliError> {
    let s = cfg.sampler();
    match s.mode {
        SamplingMode::Exact => Ok(Sampler::Exact(basis(lattice.n_sites(), sector)?)),
        SamplingMode::Mcmc => {
            Sampler::mcmc(s.sampler_config(lattice, sector, seed), lattice.n_sites()).map_err(config_err("sampler"))
        }
    }
}

fn write_run(out_dir: &Path, outcome: &RunOutcome) -> Result<(), CliError> {
    write_jsonl(&out_dir.join("trace.jsonl"), &outcome.trace)?;
    write_atomic(&out_dir.join("model.ckpt"), checkpoint::to_string(&outcome.model).as_bytes())
}

fn finish(summary: Summary, out_dir: &Path) -> Result<(), CliError> {
    write_json(&out_dir.join("summary.json"), &summary)?;
    match summary.aborted {
        Some(reason) => Err(CliError::Runtime(reason)),
        None => Ok(()),
    }
}

fn cmd_gs(cfg: &RunConfig, out_dir: &Path) -> Result<(), CliError> {
    let lattice = cfg.system.lattice()?;
    let op = cfg.system.operator(&lattice)?;
    let n = lattice.n_sites();
    let sector = cfg.sector(n);
    let model = initial_model(cfg, n)?;
    let mut sampler = make_sampler(cfg, &lattice, sector, cfg.seed)?;
    let sr = cfg.sr.as_ref().expect("validated").sr_config();
    let controller = cfg.controller().controller()?;

    let exact_energy = match &sampler {
        Sampler::Exact(b) => Some(ground_state(&op, b).map_err(runtime_err)?.energy),
        Sampler::Mcmc(_) => None,
    };
    let outcome = run_ground_state(model, &op, &mut sampler, &sr, &controller).map_err(runtime_err)?;
    write_run(out_dir, &outcome)?;

    let final_energy = match &sampler {
        Sampler::Exact(b) => Some(exact_energy_of(&outcome.model, &op, b)?),
        Sampler::Mcmc(_) => outcome.trace.last().map(|r| r.energy),
    };
    let rel_error = match (final_energy, exact_energy) {
        (Some(e), Some(e0)) => Some((e - e0) / e0.abs()),
        _ => None,
    };
    finish(
        Summary {
            task: "gs",
            seed: cfg.seed,
            steps: outcome.trace.len(),
            final_energy,
            exact_energy,
            rel_error,
            initial_infidelity: None,
            final_infidelity: None,
            final_alpha: outcome.controller.alpha,
            aborted: outcome.abort.map(|e| e.to_string()),
        },
        out_dir,
    )
}

fn cmd_infid(cfg: &RunConfig, out_dir: &Path) -> Result<(), CliError> {
    let lattice = cfg.system.lattice()?;
    let n = lattice.n_sites();
    let sector = cfg.sector(n);
    let comp = cfg.compression.as_ref().expect("validated");
    let model = initial_model(cfg, n)?;
    let target = match &comp.target {
        TargetConfig::Checkpoint(path) => {
            let m = checkpoint::load(path).map_err(config_err(&path.display().to_string()))?;
            if vmcis::LogAmplitude::n_sites(&m) != n {
                return Err(CliError::Config(format!(
                    "compression: target has {} sites, system has {n}",
                    vmcis::LogAmplitude::n_sites(&m)
                )));
            }
            TargetState::Model(m)
        }
        &TargetConfig::Quench { j, h, dt } => {
            let op = LocalOperator::tfim(&lattice, j, h);
            TargetState::propagated(&model, &op, &basis(n, sector)?, dt).map_err(config_err("compression"))?
        }
    };
    let mut sampler = make_sampler(cfg, &lattice, sector, cfg.seed)?;
    let target_sampler = make_sampler(cfg, &lattice, sector, cfg.seed.wrapping_add(TARGET_SEED_OFFSET))?;
    let sr = cfg.sr.as_ref().expect("validated").sr_config();
    let controller = cfg.controller().controller()?;
    let exact_basis = match &sampler {
        Sampler::Exact(b) => Some(b.clone()),
        Sampler::Mcmc(_) => None,
    };
    let outcome = run_compression(model, target.clone(), &mut sampler, target_sampler, &sr, &controller, comp.c)
        .map_err(runtime_err)?;
    write_run(out_dir, &outcome)?;
    let final_infidelity = match &exact_basis {
        Some(b) => Some(exact_infidelity_of(&outcome.model, &target, b, comp.c)?),
        None => outcome.trace.last().map(|r| r.energy),
    };
    finish(
        Summary {
            task: "infid",
            seed: cfg.seed,
            steps: outcome.trace.len(),
            final_energy: None,
            exact_energy: None,
            rel_error: None,
            initial_infidelity: outcome.trace.first().map(|r| r.energy),
            final_infidelity,
            final_alpha: outcome.controller.alpha,
            aborted: outcome.abort.map(|e| e.to_string()),
        },
        out_dir,
    )
}

fn exact_energy_of(model: &WavefunctionModel, op: &LocalOperator, basis: &BasisEnumeration) -> Result<f64, CliError> {
    let batch = sample_exact(model, 2.0, basis).map_err(runtime_err)?;
    let values = local_values(op, model, &batch).map_err(runtime_err)?;
    let w = compute_weights(&batch).map_err(runtime_err)?;
    Ok(snis_mean(&values, &w).map_err(runtime_err)?.re)
}

fn exact_infidelity_of(
    model: &WavefunctionModel,
    target: &TargetState,
    basis: &BasisEnumeration,
    c: f64,
) -> Result<f64, CliError> {
    let x = sample_exact(model, 2.0, basis).map_err(runtime_err)?;
    let y = sample_exact(target, 2.0, basis).map_err(runtime_err)?;
    Ok(vmcis::estimate_infidelity(model, target, &x, &y, c).map_err(runtime_err)?.infidelity)
}

#[derive(Debug, Serialize)]
struct ScanRow {
    distribution: String,
    alpha: Option<f64>,
    #[serde(rename = "L_IS")]
    l_is: f64,
    ess: Option<f64>,
    rho0: Option<f64>,
}

/// Normalized ESS `1 / Σ p²/q` of sampling `q` for target `p`.
fn ess_of(p: &[f64], q: &[f64]) -> f64 {
    let s: f64 = p
        .iter()
        .zip(q)
        .filter(|(&a, _)| a > 0.0)
        .map(|(a, b)| if *b > 0.0 { a * a / b } else { f64::INFINITY })
        .sum();
    1.0 / s
}

fn cmd_snr_scan(cfg: &RunConfig, out_dir: &Path) -> Result<(), CliError> {
    let lattice = cfg.system.lattice()?;
    let op = cfg.system.operator(&lattice)?;
    let n = lattice.n_sites();
    let sector = cfg.sector(n);
    let model = initial_model(cfg, n)?;
    let basis = basis(n, sector)?;
    let scan = cfg.scan.as_ref().expect("validated");

    let born_batch = sample_exact(&model, 2.0, &basis).map_err(runtime_err)?;
    let jac = JacobianMatrix::compute(&model, born_batch.configs()).map_err(runtime_err)?;
    let values = local_values(&op, &model, &born_batch).map_err(runtime_err)?;
    let refs = ReferenceDistributions::from_exact(&born_batch, &jac, &values).map_err(runtime_err)?;
    let born = refs.born().to_vec();
    let energy: Vec<f64> = values.iter().map(|v| v.re).collect();
    let e_mean = snis_mean(&values, &compute_weights(&born_batch).map_err(runtime_err)?)
        .map_err(runtime_err)?
        .re;

    let mut rows = Vec::new();
    for alpha in scan.grid() {
        let batch = sample_exact(&model, alpha, &basis).map_err(runtime_err)?;
        let q = batch.exact_probs().expect("exact batch").to_vec();
        let w = compute_weights(&batch).map_err(runtime_err)?;
        let bias = ess_and_bias(&w, &energy, e_mean).map_err(runtime_err)?;
        rows.push(ScanRow {
            distribution: "q_alpha".into(),
            alpha: Some(alpha),
            l_is: refs.snr_under(&q).map_err(runtime_err)?.l_is,
            ess: Some(bias.ess),
            rho0: bias.rho0,
        });
    }
    rows.push(ScanRow {
        distribution: "born".into(),
        alpha: Some(2.0),
        l_is: refs.snr_under(&born).map_err(runtime_err)?.l_is,
        ess: Some(1.0),
        rho0: Some(0.0),
    });
    let mixture = refs.mixture().map_err(runtime_err)?;
    rows.push(ScanRow {
        distribution: "mixture".into(),
        alpha: None,
        l_is: refs.snr_under(&mixture).map_err(runtime_err)?.l_is,
        ess: Some(ess_of(&born, &mixture)),
        rho0: None,
    });
    rows.push(ScanRow {
        distribution: "envelope".into(),
        alpha: None,
        l_is: refs.optimal_snr().l_is,
        ess: None,
        rho0: None,
    });

    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        w.serialize(r).map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))?;
    write_atomic(&out_dir.join("scan.csv"), &bytes)?;

    let best = rows
        .iter()
        .filter(|r| r.distribution == "q_alpha")
        .max_by(|a, b| a.l_is.total_cmp(&b.l_is))
        .and_then(|r| r.alpha)
        .unwrap_or(2.0);
    finish(
        Summary {
            task: "snr-scan",
            seed: cfg.seed,
            steps: 0,
            final_energy: Some(e_mean),
            exact_energy: None,
            rel_error: None,
            initial_infidelity: None,
            final_infidelity: None,
            final_alpha: best,
            aborted: None,
        },
        out_dir,
    )
}
