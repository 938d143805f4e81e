//! Command-line front end for `randproj`.
//!
//! Every subcommand is a plain function in [`commands`] so it can be driven
//! from tests; [`run`] maps parsed arguments onto them.

use std::io::{self, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use randproj::{Method, SweepMode};

pub mod commands;
pub mod output;
pub mod spec;

use commands::Figure;
use spec::{ExperimentSpec, Generator, GridSpec, OmegaChoice, SystemSource};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error(transparent)]
    Core(#[from] randproj::Error),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    /// 1 for a failed verification, 2 for anything wrong with the input.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Verification(_) => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "randproj", version, about = "Over-relaxed randomized Kaczmarz / Gauss-Seidel: bounds, spectra and experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Worker threads for trial and grid fan-out (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct SourceArgs {
    /// Built-in matrix family.
    #[arg(long = "gen", value_enum)]
    pub generator: Option<Generator>,
    /// Matrix file: MatrixMarket (.mtx, .mm) or dense CSV.
    #[arg(long)]
    pub matrix: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SystemArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// Right-hand side file (one column); without it a seeded solution is used.
    #[arg(long, requires = "matrix")]
    pub rhs: Option<PathBuf>,
    /// Columns (and rows, unless --m is given) of a generated matrix.
    #[arg(long)]
    pub n: Option<usize>,
    /// Rows of a generated random matrix.
    #[arg(long)]
    pub m: Option<usize>,
    /// Condition number of a generated random matrix.
    #[arg(long, default_value_t = 100.0)]
    pub kappa: f64,
    /// gauss-seidel or kaczmarz (default: the generator's own, kaczmarz for files).
    #[arg(long)]
    pub method: Option<Method>,
    /// Group contiguous rows into blocks of this size.
    #[arg(long)]
    pub blocks: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl SystemArgs {
    fn spec(&self, name: &str) -> Result<ExperimentSpec, CliError> {
        let source = match (&self.source.generator, &self.source.matrix) {
            (Some(g), _) => {
                let n = self.n.ok_or_else(|| CliError::Input("--gen needs --n".into()))?;
                if self.m.is_some() && *g != Generator::Random {
                    return Err(CliError::Input("--m only applies to --gen random".into()));
                }
                SystemSource::Generated { generator: *g, m: self.m, n, kappa: self.kappa }
            }
            (None, Some(path)) => SystemSource::File { matrix: path.clone(), rhs: self.rhs.clone() },
            (None, None) => return Err(CliError::Input("one of --gen or --matrix is required".into())),
        };
        let mut spec = ExperimentSpec::new(name, source);
        spec.method = self.method;
        spec.blocks = self.blocks;
        spec.seed = self.seed;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Randomized,
    Cyclic,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// B-bound, C-bound and (for n <= 64) the exact rate over an omega grid.
    Bounds {
        #[command(flatten)]
        system: SystemArgs,
        #[arg(long, default_value = "0:2:81")]
        grid: GridSpec,
        /// Output directory (default: CSV on standard output).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte-Carlo trial campaigns with mean trajectories and bound overlays.
    Trials {
        #[command(flatten)]
        system: SystemArgs,
        /// Relaxation values; `opt` selects the C-bound optimum.
        #[arg(long, value_delimiter = ',', default_value = "1")]
        omega: Vec<OmegaChoice>,
        #[arg(long, default_value_t = 150)]
        trials: usize,
        #[arg(long, default_value_t = 1000)]
        iters: usize,
        #[arg(long, default_value_t = 1)]
        record_every: usize,
        /// Output directory (default: summary CSV on standard output).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Numerical checks of the spectral identities and bound orderings.
    Verify {
        #[command(flatten)]
        system: SystemArgs,
        #[arg(long, default_value = "0:2:81")]
        grid: GridSpec,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Curve and trial data for a named figure, with pinned seeds.
    Reproduce {
        #[arg(value_enum)]
        figure: Figure,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Runs one iteration and reports the final iterate.
    Solve {
        #[command(flatten)]
        system: SystemArgs,
        #[arg(long, default_value = "1")]
        omega: OmegaChoice,
        #[arg(long, default_value_t = 1000)]
        iters: usize,
        #[arg(long, value_enum, default_value = "randomized")]
        mode: ModeArg,
        #[arg(long, default_value_t = 1)]
        record_every: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Executes a parsed command, writing human-facing output to `stdout`.
pub fn run(cli: &Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    match &cli.command {
        Command::Bounds { system, grid, out } => {
            let mut spec = system.spec("bounds")?;
            spec.grid = *grid;
            spec.out = out.clone();
            commands::cmd_bounds(&spec, stdout)?;
        }
        Command::Trials { system, omega, trials, iters, record_every, out } => {
            let mut spec = system.spec("trials")?;
            spec.trials = *trials;
            spec.iters = *iters;
            spec.out = out.clone();
            commands::cmd_trials(&spec, omega, *record_every, stdout)?;
        }
        Command::Verify { system, grid, out } => {
            let mut spec = system.spec("verify")?;
            spec.grid = *grid;
            spec.out = out.clone();
            let report = commands::cmd_verify(&spec, stdout)?;
            let failed = report.failed();
            if !failed.is_empty() {
                let names: Vec<&str> = failed.iter().map(|c| c.name).collect();
                return Err(CliError::Verification(names.join(", ")));
            }
        }
        Command::Reproduce { figure, out } => {
            commands::cmd_reproduce(*figure, out, stdout)?;
        }
        Command::Solve { system, omega, iters, mode, record_every, out } => {
            let mut spec = system.spec("solve")?;
            spec.iters = *iters;
            spec.out = out.clone();
            let mode = match mode {
                ModeArg::Randomized => SweepMode::Randomized,
                ModeArg::Cyclic => SweepMode::CyclicForward,
            };
            commands::cmd_solve(&spec, *omega, mode, *record_every, stdout)?;
        }
    }
    stdout.flush()?;
    Ok(())
}
