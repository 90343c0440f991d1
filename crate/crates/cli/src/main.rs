use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use starkloop_cli::config::{Experiment, ExperimentConfig};
use starkloop_cli::experiments;
use starkloop_cli::CliError;

/// Default output directory when neither `--out` nor `out_dir` is given.
const OUT_DIR_ENV: &str = "STARKLOOP_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "starkloop", version, about = "Run a starkloop experiment and write its tables")]
struct Args {
    /// phase_law, response_map, theta_sweep, rmse_uniform, rmse_nonuniform, gain_curve or validate.
    experiment: String,
    /// TOML configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config truncation order.
    #[arg(long = "n-max")]
    n_max: Option<usize>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    threads: Option<usize>,
}

fn run(args: Args) -> Result<(), CliError> {
    let experiment = Experiment::parse(&args.experiment).ok_or_else(|| {
        let names: Vec<&str> = Experiment::ALL.iter().map(|e| e.name()).collect();
        CliError::Config(format!(
            "experiment: unknown '{}', expected one of {}",
            args.experiment,
            names.join(", ")
        ))
    })?;
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(e) = cfg.experiment {
        if e != experiment {
            return Err(CliError::Config(format!(
                "experiment: config names '{}' but '{}' was requested",
                e.name(),
                experiment.name()
            )));
        }
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(n) = args.n_max {
        cfg.n_max = n;
    }
    if let Some(t) = args.threads {
        if t == 0 {
            return Err(CliError::Config("threads: must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Config(format!("threads: {e}")))?;
    }
    let out = args
        .out
        .or_else(|| cfg.out_dir.clone())
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("results"));
    let bundle = experiments::run(experiment, &cfg)?;
    for w in &bundle.warnings {
        eprintln!("warning: {w}");
    }
    let files = bundle.write(&out)?;
    for f in files {
        println!("{}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
