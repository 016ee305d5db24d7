use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use flipflop_cli::commands::{self, Context, FitInputs, SpectrumMode};
use flipflop_cli::config::RunConfig;
use flipflop_cli::io::IngestOptions;
use flipflop_cli::CliError;
use flipflop_core::rates::{with_workers, FieldRegime};
use flipflop_core::spinham::Manifold;

#[derive(Parser)]
#[command(
    name = "flipflop",
    version,
    about = "Flip-flop rates, class decay, fits and hole-burning spectra"
)]
struct Cli {
    /// Run configuration (TOML); the bundled Pr:YSO configuration when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the ensemble seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for the parallel stages.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Also write SVG plots.
    #[arg(long, global = true)]
    svg: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum RegimeArg {
    ZeroField,
    AppliedField,
}

impl From<RegimeArg> for FieldRegime {
    fn from(r: RegimeArg) -> Self {
        match r {
            RegimeArg::ZeroField => FieldRegime::ZeroField,
            RegimeArg::AppliedField => FieldRegime::AppliedField,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum LevelArg {
    A,
    B,
    C,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Full,
    ClassOnly,
    NoBurn,
}

#[derive(Subcommand)]
enum Command {
    /// Per-ion rates and their log histograms.
    Rates {
        /// Only this regime; both when omitted.
        #[arg(long, value_enum)]
        regime: Option<RegimeArg>,
    },
    /// Ensemble class decay curves.
    Decay {
        #[arg(long, value_enum, default_value = "zero-field")]
        regime: RegimeArg,
        /// Write the class curves of this center ion instead of the ensemble average.
        #[arg(long)]
        single_ion: Option<usize>,
    },
    /// Fit linewidths and inhomogeneity factors to measured decay curves.
    Fit {
        #[arg(long)]
        zero_field: Option<PathBuf>,
        #[arg(long)]
        applied_field: Option<PathBuf>,
        /// Average all points up to this time, ms.
        #[arg(long)]
        moving_average_ms: Option<f64>,
        /// Normalize the data at this time, s.
        #[arg(long)]
        normalize_at: Option<f64>,
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long)]
        restarts: Option<usize>,
        /// Validate the configuration and data, then stop.
        #[arg(long)]
        dry_run: bool,
    },
    /// Absorption spectrum after burning at a frequency.
    Spectrum {
        /// Burn frequency, MHz.
        #[arg(long, allow_hyphen_values = true)]
        burn: Option<f64>,
        /// Burn at the peak frequency prepared for this level (default a).
        #[arg(long, value_enum, conflicts_with = "burn")]
        level: Option<LevelArg>,
        #[arg(long, value_enum, default_value = "full")]
        mode: ModeArg,
    },
    /// Write the lattice definition and a small doped ensemble.
    GenLatticeDemo {
        #[arg(long, default_value_t = 30.0)]
        radius_nm: f64,
    },
}

fn run(cli: Cli) -> Result<Vec<String>, CliError> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::builtin(),
    };
    if let Some(seed) = cli.seed {
        config.ensemble.seed = seed;
    }
    std::fs::create_dir_all(&cli.out_dir)
        .map_err(|e| CliError::Input(format!("cannot create {}: {e}", cli.out_dir.display())))?;
    let ctx = Context {
        config,
        workers: cli.workers,
        out_dir: cli.out_dir,
        svg: cli.svg,
    };
    let command = cli.command;
    with_workers(ctx.workers, || match command {
        Command::Rates { regime } => commands::rates(&ctx, regime.map(Into::into)),
        Command::Decay { regime, single_ion } => commands::decay(&ctx, regime.into(), single_ion),
        Command::Fit {
            zero_field,
            applied_field,
            moving_average_ms,
            normalize_at,
            budget,
            restarts,
            dry_run,
        } => commands::fit(
            &ctx,
            &FitInputs {
                zero_field,
                applied_field,
                ingest: IngestOptions {
                    moving_average_ms,
                    normalize_at,
                },
                dry_run,
                budget,
                restarts,
            },
        ),
        Command::Spectrum { burn, level, mode } => {
            let level = level.map(|l| match l {
                LevelArg::A => Manifold::A,
                LevelArg::B => Manifold::B,
                LevelArg::C => Manifold::C,
            });
            let mode = match mode {
                ModeArg::Full => SpectrumMode::Full,
                ModeArg::ClassOnly => SpectrumMode::ClassOnly,
                ModeArg::NoBurn => SpectrumMode::NoBurn,
            };
            commands::spectrum(&ctx, burn, level, mode)
        }
        Command::GenLatticeDemo { radius_nm } => commands::gen_lattice_demo(&ctx, radius_nm),
    })?
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(lines) => {
            for l in lines {
                println!("{l}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
