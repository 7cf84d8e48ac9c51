use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vmcis_cli::{execute, CliError, Overrides, RunConfig, Task};

#[derive(Parser)]
#[command(name = "vmcis", version, about = "Importance-sampled variational Monte Carlo runs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ground-state search with stochastic reconfiguration.
    Gs(RunArgs),
    /// Compress a target state by minimizing the infidelity.
    Infid(RunArgs),
    /// Exact-mode scan of the gradient SNR over the overdispersion exponent.
    SnrScan(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed of the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to the machine's parallelism.
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory; overrides the config file.
    #[arg(long)]
    output: Option<PathBuf>,
}

fn run(task: Task, args: RunArgs) -> Result<PathBuf, CliError> {
    if let Some(n) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    let cfg = RunConfig::load(&args.config)?;
    execute(
        task,
        cfg,
        &Overrides {
            seed: args.seed,
            output: args.output,
        },
    )
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (task, args) = match cli.command {
        Command::Gs(a) => (Task::Gs, a),
        Command::Infid(a) => (Task::Infid, a),
        Command::SnrScan(a) => (Task::SnrScan, a),
    };
    match run(task, args) {
        Ok(dir) => {
            eprintln!("artifacts written to {}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("vmcis: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
