use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use vic_core::Mode;

mod commands;
mod config;
mod manifest;
mod plots;

use config::{DisturbKind, RunConfig};

/// Bad flags, config or missing stage inputs. Exit code 2.
#[derive(Debug)]
pub struct InputError(pub String);

impl std::fmt::Display for InputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

#[derive(Parser)]
#[command(name = "vic", version, about = "Tissue mapping and variable impedance scans on a simulated phantom")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Write the default phantom description.
    Phantom {
        #[command(flatten)]
        common: Common,
        /// Contact exponent of the phantom.
        #[arg(long)]
        beta: Option<f64>,
    },
    /// Palpate a grid of nodes and fit each one.
    Palpate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        phantom: PathBuf,
        /// Node spacing, m.
        #[arg(long)]
        spacing: Option<f64>,
        /// Force noise standard deviation, N.
        #[arg(long)]
        noise: Option<f64>,
        /// Skip the per-node palpation records.
        #[arg(long)]
        no_raw: bool,
    },
    /// Compare contact models on a load/unload test and sweep the exponent.
    Estimate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        phantom: PathBuf,
        /// Output directory of `palpate`, for the sweep over surveyed nodes.
        #[arg(long)]
        survey: Option<PathBuf>,
        /// Exponents to sweep, comma separated.
        #[arg(long, value_delimiter = ',')]
        beta: Option<Vec<f64>>,
        #[arg(long, default_value_t = 0.04)]
        x: f64,
        #[arg(long, default_value_t = 0.04)]
        y: f64,
    },
    /// Build the surface, elasticity and viscosity maps from a survey.
    Map {
        #[command(flatten)]
        common: Common,
        /// Output directory of `palpate` or its survey CSV.
        #[arg(long)]
        survey: PathBuf,
        #[arg(long)]
        beta: Option<f64>,
    },
    /// Run one scan.
    Scan {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        phantom: PathBuf,
        /// Output directory of `map` or its map JSON.
        #[arg(long)]
        map: PathBuf,
        #[arg(long, value_parser = parse_mode)]
        mode: Option<Mode>,
        #[arg(long, value_enum)]
        disturb: Option<DisturbKind>,
    },
    /// Run every mode with and without the lift and summarise safety.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        phantom: PathBuf,
        #[arg(long)]
        map: PathBuf,
        /// Disturbance settings to run; both when omitted.
        #[arg(long, value_enum, value_delimiter = ',')]
        disturb: Option<Vec<DisturbKind>>,
    },
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    Mode::parse(s).map_err(|e| e.to_string())
}

fn effective(common: &Common, edit: impl FnOnce(&mut RunConfig)) -> anyhow::Result<RunConfig> {
    let mut cfg = RunConfig::load(common.config.as_deref())?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    edit(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Phantom { common, beta } => {
            let cfg = effective(&common, |c| c.beta = beta.or(c.beta))?;
            commands::phantom(&cfg, &common.out)
        }
        Command::Palpate {
            common,
            phantom,
            spacing,
            noise,
            no_raw,
        } => {
            let cfg = effective(&common, |c| {
                c.spacing = spacing.unwrap_or(c.spacing);
                c.protocol.noise_sigma = noise.unwrap_or(c.protocol.noise_sigma);
            })?;
            commands::palpate(&cfg, &phantom, &common.out, !no_raw)
        }
        Command::Estimate {
            common,
            phantom,
            survey,
            beta,
            x,
            y,
        } => {
            let cfg = effective(&common, |c| {
                if let Some(b) = beta {
                    c.betas = b;
                }
            })?;
            commands::estimate(&cfg, &phantom, survey.as_deref(), [x, y], &common.out)
        }
        Command::Map { common, survey, beta } => {
            let cfg = effective(&common, |c| c.beta = beta.or(c.beta))?;
            commands::map(&cfg, &survey, &common.out)
        }
        Command::Scan {
            common,
            phantom,
            map,
            mode,
            disturb,
        } => {
            let cfg = effective(&common, |c| {
                c.strategy.mode = mode.unwrap_or(c.strategy.mode);
                c.disturb = disturb.unwrap_or(c.disturb);
            })?;
            commands::scan(&cfg, &phantom, &map, &common.out)
        }
        Command::Compare {
            common,
            phantom,
            map,
            disturb,
        } => {
            let cfg = effective(&common, |_| {})?;
            let disturb = disturb.unwrap_or_else(|| vec![DisturbKind::None, DisturbKind::Lift]);
            commands::compare(&cfg, &phantom, &map, &disturb, &common.out)
        }
    }
}

/// 3 for failures of the simulation itself, 2 for everything the user can fix.
fn exit_code(err: &anyhow::Error) -> u8 {
    let runtime = err.chain().any(|e| {
        matches!(
            e.downcast_ref::<vic_core::Error>(),
            Some(vic_core::Error::Blowup { .. } | vic_core::Error::TankDepleted(_))
        )
    });
    if runtime {
        3
    } else {
        2
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
