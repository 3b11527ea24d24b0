use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fran_ee::harness::{report, run_campaign, Algorithm, ExperimentConfig, Metric};

#[derive(Parser)]
#[command(version, about = "Energy-efficiency simulator for fog radio access networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte-Carlo campaign and write its tables.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        drops: Option<usize>,
        /// Comma-separated subset of al, heuristic, ref_ee, ref_sr.
        #[arg(long, value_delimiter = ',')]
        algos: Option<Vec<Algorithm>>,
        #[arg(long = "sigma-e2", value_delimiter = ',')]
        sigma_e2: Option<Vec<f64>>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Allow the AL solver on the large scenario.
        #[arg(long)]
        force: bool,
    },
    /// Rebuild an aggregate table from stored per-drop rows.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_parser = parse_metric)]
        metric: Metric,
    },
}

fn parse_metric(s: &str) -> Result<Metric, String> {
    s.parse().map_err(|e: fran_ee::Error| e.to_string())
}

fn simulate(cfg: ExperimentConfig) -> Result<ExitCode, fran_ee::Error> {
    cfg.validate()?;
    let campaign = run_campaign(&cfg)?;
    let written = campaign.write(&cfg.output)?;
    for p in &written {
        eprintln!("wrote {}", p.display());
    }
    for row in fran_ee::harness::Tables::build(&cfg, &campaign.drop_rows(), &[]).ee {
        eprintln!(
            "K={:<3} sigma_e2={:<5} {:<9} EE {:>8.4} Mbit/J over {} drops{}",
            row.users,
            row.sigma_e2,
            row.algorithm,
            row.mean,
            row.drops,
            if row.complete { "" } else { " (partial)" }
        );
    }
    let violations = campaign.violations();
    if violations.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        for v in &violations {
            eprintln!("invariant violation: {v}");
        }
        Ok(ExitCode::from(2))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate {
            config,
            seed,
            drops,
            algos,
            sigma_e2,
            out,
            force,
        } => ExperimentConfig::load(&config).and_then(|mut cfg| {
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(d) = drops {
                cfg.drops = d;
            }
            if let Some(a) = algos {
                cfg.algorithms = a;
            }
            if let Some(s) = sigma_e2 {
                cfg.sigma_e2 = s;
            }
            if let Some(o) = out {
                cfg.output = o;
            }
            cfg.force |= force;
            simulate(cfg)
        }),
        Command::Report { input, metric } => report(&input, metric).map(|text| {
            print!("{text}");
            ExitCode::SUCCESS
        }),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        ExitCode::FAILURE
    })
}
