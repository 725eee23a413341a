//! `galflow` command-line front end. See the library's `cli` module for the
//! command implementations and the CSV schemas.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use galflow::cli::{cmd_compare, cmd_converge, cmd_pretrain, cmd_run, CliError};
use galflow::config::ExperimentConfig;
use galflow::evolve::EnergyViolationPolicy;

#[derive(Parser)]
#[command(name = "galflow", version, about = "Structure-preserving neural-Galerkin solver for gradient-flow PDEs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// experiment config file (flat dotted-key format)
    #[arg(long, required = true)]
    config: Vec<PathBuf>,
    /// override every seed in the config
    #[arg(long)]
    seed: Option<u64>,
    /// output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// rayon worker threads (default: all cores)
    #[arg(long)]
    threads: Option<usize>,
    /// what to do when the discrete energy increases
    #[arg(long, value_parser = ["warn", "fail"])]
    energy_violation: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Train the feature network and write a checkpoint
    Pretrain(CommonArgs),
    /// Evolve the configured problem and write the trajectory CSV
    Run(CommonArgs),
    /// Temporal convergence study over a list of step sizes
    Converge {
        #[command(flatten)]
        common: CommonArgs,
        /// comma-separated step sizes (at least 3)
        #[arg(long, value_delimiter = ',', required = true)]
        dt: Vec<f64>,
        /// self-reference step size for problems without an analytic solution
        #[arg(long, default_value_t = 1e-5)]
        ref_dt: f64,
    },
    /// Run several configs on one problem and merge the trajectories
    Compare(CommonArgs),
}

fn load_configs(common: &CommonArgs) -> Result<Vec<ExperimentConfig>, CliError> {
    common
        .config
        .iter()
        .map(|path| {
            let mut cfg = ExperimentConfig::load(path)?;
            if let Some(seed) = common.seed {
                cfg.seed = seed;
                cfg.basis.seed = seed;
                cfg.training.seed = seed;
                cfg.quadrature.seed = seed;
            }
            match common.energy_violation.as_deref() {
                Some("fail") => cfg.energy_policy = EnergyViolationPolicy::Fail,
                Some("warn") => cfg.energy_policy = EnergyViolationPolicy::Warn,
                _ => {}
            }
            Ok(cfg)
        })
        .collect()
}

fn single(common: &CommonArgs) -> Result<ExperimentConfig, CliError> {
    let mut cfgs = load_configs(common)?;
    if cfgs.len() != 1 {
        return Err(CliError::Config(
            "this subcommand takes exactly one --config".into(),
        ));
    }
    Ok(cfgs.remove(0))
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let common = match &cli.command {
        Command::Pretrain(c) | Command::Run(c) | Command::Compare(c) => c,
        Command::Converge { common, .. } => common,
    };
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    match &cli.command {
        Command::Pretrain(c) => {
            let path = cmd_pretrain(&single(c)?, &c.out)?;
            println!("wrote {}", path.display());
        }
        Command::Run(c) => {
            let path = cmd_run(&single(c)?, &c.out)?;
            println!("wrote {}", path.display());
        }
        Command::Converge { common, dt, ref_dt } => {
            let path = cmd_converge(&single(common)?, dt, *ref_dt, &common.out)?;
            println!("wrote {}", path.display());
        }
        Command::Compare(c) => {
            let cfgs = load_configs(c)?;
            let path = cmd_compare(&cfgs, &c.out)?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
