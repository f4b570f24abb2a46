//! `ranndy`: generate data, tune the feature map, decompose, and post-process.
//!
//! Exit codes: 0 success, 2 usage error, 3 invalid config, 4 file I/O or
//! format error, 5 bad input data or contract violation, 6 numerical failure.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ranndy::Error;

#[derive(Parser)]
#[command(name = "ranndy", version, about = "Transfer operator spectra from randomized feature maps")]
#[command(after_help = "Exit codes: 0 ok, 2 usage, 3 config, 4 i/o or format, 5 data or contract, 6 numerical.\n\
                        RANNDY_THREADS caps the number of worker threads.")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum System {
    Graphon,
    Bickley,
    Ou,
    DoubleWell,
}

impl System {
    pub fn name(self) -> &'static str {
        match self {
            System::Graphon => "graphon",
            System::Bickley => "bickley",
            System::Ou => "ou",
            System::DoubleWell => "double_well",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        [System::Graphon, System::Bickley, System::Ou, System::DoubleWell]
            .into_iter()
            .find(|s| s.name() == name)
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum ModeArg {
    SelfAdjoint,
    NonSelfAdjoint,
}

impl From<ModeArg> for ranndy::Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::SelfAdjoint => ranndy::Mode::SelfAdjoint,
            ModeArg::NonSelfAdjoint => ranndy::Mode::NonSelfAdjoint,
        }
    }
}

#[derive(Args, Clone, Debug)]
pub struct Common {
    /// Run configuration (JSON). Defaults to the preset of the data's system.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Subcommand)]
pub enum Command {
    /// Simulate snapshot pairs for a benchmark system.
    Generate {
        system: System,
        #[command(flatten)]
        common: Common,
        /// Number of snapshot pairs (walk steps for the graphon).
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Tune the feature-map scales by trace-loss ascent.
    Train {
        /// Directory written by `generate`.
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        mode: Option<ModeArg>,
    },
    /// Solve for the output layer at fixed scales.
    Decompose {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        mode: Option<ModeArg>,
        /// omega_final.json from `train`; the configured initial scales otherwise.
        #[arg(long)]
        omega: Option<PathBuf>,
        /// Number of eigenfunctions to keep (overrides n_outputs).
        #[arg(long)]
        n: Option<usize>,
    },
    /// Rebuild the graphon from a self-adjoint decomposition.
    Reconstruct {
        #[arg(long)]
        data: PathBuf,
        /// Directory written by `decompose`.
        #[arg(long)]
        run: PathBuf,
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 3)]
        rank: usize,
    },
    /// Coherent sets from a non-self-adjoint decomposition.
    Cluster {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        run: PathBuf,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        k: usize,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 3,
        Error::Io { .. } | Error::Format { .. } | Error::Length { .. } => 4,
        Error::Dimension(_) | Error::Contract(_) => 5,
        Error::Rank { .. }
        | Error::Loss { .. }
        | Error::Initialization { .. }
        | Error::AbsorbingState { .. }
        | Error::Integration { .. }
        | Error::BlowUp { .. }
        | Error::NotADensity { .. }
        | Error::Degenerate(_) => 6,
    }
}

fn configure_threads() -> Result<(), Error> {
    let Ok(value) = std::env::var("RANNDY_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Error::Config(format!("RANNDY_THREADS must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match configure_threads().and_then(|_| commands::run(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
