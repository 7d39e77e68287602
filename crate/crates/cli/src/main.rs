//! `rfiqkd`: simulate, analyze and sweep free-running RFI QKD scenarios.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rfiqkd::config::{RunMode, ScenarioConfig};
use rfiqkd::exec::Execution;
use rfiqkd::scenario::{self, Artifacts};
use rfiqkd::Error;

#[derive(Parser)]
#[command(
    name = "rfiqkd",
    version,
    about = "Free-running reference-frame-independent QKD simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate interval tallies and run the sliced post-processing.
    Simulate(Common),
    /// Post-process an existing interval log.
    Analyze {
        /// Interval log to analyze.
        log: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Key rate against total loss, with cutoff losses.
    SweepLoss(Common),
    /// Per-slice C value and key rate.
    SweepTheta(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML); missing fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = ["analytic", "montecarlo"])]
    mode: Option<String>,
    /// Override a config leaf, e.g. `--set system.dark_rate=150`.
    #[arg(long = "set", value_name = "PATH=VALUE")]
    overrides: Vec<String>,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    print_config: bool,
    /// Run single-threaded.
    #[arg(long)]
    sequential: bool,
}

impl Common {
    fn resolve(&self) -> Result<ScenarioConfig, Error> {
        let mut cfg = ScenarioConfig::load(self.config.as_deref(), &self.overrides)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        if let Some(mode) = &self.mode {
            cfg.mode = mode.parse::<RunMode>()?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn exec(&self) -> Execution {
        if self.sequential {
            Execution::Sequential
        } else {
            Execution::default()
        }
    }
}

fn finish(cfg: &ScenarioConfig, artifacts: &Artifacts) -> Result<(), Error> {
    for path in artifacts.commit(&cfg.out_dir)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    let common = match &cli.command {
        Command::Simulate(c) | Command::SweepLoss(c) | Command::SweepTheta(c) => c,
        Command::Analyze { common, .. } => common,
    };
    let cfg = common.resolve()?;
    if common.print_config {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    let exec = common.exec();
    match &cli.command {
        Command::Simulate(_) => {
            let (_, analysis, artifacts) = scenario::simulate(&cfg, exec)?;
            print!("{}", analysis.report.summary());
            finish(&cfg, &artifacts)
        }
        Command::Analyze { log, .. } => {
            let (analysis, artifacts) = scenario::analyze_log(log, &cfg, exec)?;
            print!("{}", analysis.report.summary());
            finish(&cfg, &artifacts)
        }
        Command::SweepLoss(_) => {
            let (_, cutoffs, artifacts) = scenario::sweep_loss(&cfg, exec)?;
            for c in &cutoffs {
                let loss = c
                    .loss_db
                    .map(|l| format!("{l} dB"))
                    .unwrap_or_else(|| "none".to_owned());
                println!(
                    "cutoff {} n_total={:e} m={}: {loss}",
                    c.scheme, c.n_total, c.m
                );
            }
            finish(&cfg, &artifacts)
        }
        Command::SweepTheta(_) => {
            let (rows, artifacts) = scenario::sweep_theta(&cfg, exec)?;
            for r in &rows {
                println!(
                    "slice {:>2} theta {:.4} C {} rate {:.2} bps",
                    r.index,
                    r.angle,
                    r.c_analytic
                        .map(|c| format!("{c:.4}"))
                        .unwrap_or_else(|| "-".into()),
                    r.rate_analytic_bps
                );
            }
            finish(&cfg, &artifacts)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_data_format() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
