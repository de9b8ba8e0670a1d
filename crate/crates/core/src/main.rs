use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use kinetic1d::config::{parse_config, ExperimentKind};
use kinetic1d::experiments::run_experiment;

/// Monte Carlo experiments for a force-driven tracer in a 1D random medium.
#[derive(Debug, Parser)]
#[command(name = "kinetic1d", version)]
struct Cli {
    /// Experiment to run; must match the `experiment` field of the config.
    experiment: ExperimentKind,
    /// Path to the JSON configuration.
    #[arg(long)]
    config: PathBuf,
    /// Master seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads, overriding the config and KINETIC1D_WORKERS.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(cli: Cli) -> kinetic1d::Result<bool> {
    let text = std::fs::read_to_string(&cli.config)?;
    let mut config = parse_config(&text)?;
    if config.experiment != cli.experiment {
        return Err(kinetic1d::Error::Config {
            path: "experiment".into(),
            message: format!(
                "config is for `{}` but `{}` was requested",
                config.experiment, cli.experiment
            ),
        });
    }
    if let Some(seed) = cli.seed {
        config.master_seed = seed;
    }
    if let Some(w) = cli.workers {
        config.workers = Some(w);
    }
    if let Some(out) = cli.out {
        config.output_dir = out;
    }
    config.validate()?;
    let outcome = run_experiment(&config)?;

    println!("{}", config.experiment);
    for (key, value) in &outcome.metrics {
        println!("  {key:<32} {value}");
    }
    for a in &outcome.assertions {
        println!(
            "  [{}] {}: {}",
            if a.passed { "PASS" } else { "FAIL" },
            a.name,
            a.detail
        );
    }
    println!(
        "outputs in {}",
        kinetic1d::experiments::experiment_dir(&config).display()
    );
    Ok(outcome.passed())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
