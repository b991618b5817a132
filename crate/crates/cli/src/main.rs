use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use implicit_cli::config::{ExperimentConfig, ExperimentId};
use implicit_cli::experiments::{self, Outcome, Table};

/// Runs one implicit-layer experiment and writes its CSV artifacts.
#[derive(Debug, Parser)]
#[command(name = "implayer", version)]
struct Args {
    /// Which experiment to run.
    #[arg(value_enum)]
    experiment: ExperimentId,
    /// Flat `key = value` config file.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Output directory (overrides `out` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn resolve(args: &Args) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(args.experiment, &args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(epochs) = args.epochs {
        cfg.epochs = epochs;
    }
    if let Some(out) = &args.out {
        cfg.out = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_table(t: &Table) {
    let widths: Vec<usize> = (0..t.header.len())
        .map(|c| {
            t.rows
                .iter()
                .map(|r| r[c].len())
                .chain([t.header[c].len()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let line = |cells: &[String]| {
        let padded: Vec<String> = cells.iter().zip(&widths).map(|(s, w)| format!("{s:<w$}")).collect();
        println!("{}", padded.join("  ").trim_end());
    };
    line(&t.header);
    t.rows.iter().for_each(|r| line(r));
}

fn report(cfg: &ExperimentConfig, outcome: &Outcome) {
    if let Some(t) = outcome.table("gradcheck.csv") {
        print_table(t);
        println!();
    }
    for (k, v) in &outcome.metrics {
        println!("{k} = {v}");
    }
    println!("results written to {}", cfg.out.display());
}

fn main() -> ExitCode {
    let args = Args::parse();
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("IMPLAYER_LOG", "warn")).init();

    let result = resolve(&args).and_then(|cfg| {
        let outcome = experiments::run(&cfg)?;
        experiments::write_outputs(&cfg, &outcome, &cfg.out)?;
        Ok((cfg, outcome))
    });
    match result {
        Ok((cfg, outcome)) => {
            report(&cfg, &outcome);
            match outcome.failure {
                Some(why) => {
                    eprintln!("error: {why}");
                    ExitCode::FAILURE
                }
                None => ExitCode::SUCCESS,
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
