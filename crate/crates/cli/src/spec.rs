//! Experiment descriptions shared by the subcommands.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use nalgebra::DVector;
use randproj::io::read_matrix;
use randproj::matrices::make_random_spd;
use randproj::projections::{contiguous_blocks, ensemble_blocks};
use randproj::{
    ensemble_from_system, make_hilbert, make_parter, make_random, normalize, LinearSystem, Method, NormalizedSystem,
    ProjectorEnsemble,
};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Generator {
    Hilbert,
    Parter,
    Random,
}

/// Where the matrix comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum SystemSource {
    Generated { generator: Generator, m: Option<usize>, n: usize, kappa: f64 },
    File { matrix: PathBuf, rhs: Option<PathBuf> },
}

/// `start:stop:count` with `0 <= start <= stop <= 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

impl GridSpec {
    pub fn points(&self) -> Vec<f64> {
        randproj::bounds::omega_grid(self.start, self.stop, self.count)
    }
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { start: 0.0, stop: 2.0, count: 81 }
    }
}

impl FromStr for GridSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let [a, b, c] = parts[..] else {
            return Err(format!("grid must look like start:stop:count, got {s:?}"));
        };
        let start: f64 = a.trim().parse().map_err(|_| format!("bad grid start {a:?}"))?;
        let stop: f64 = b.trim().parse().map_err(|_| format!("bad grid stop {b:?}"))?;
        let count: usize = c.trim().parse().map_err(|_| format!("bad grid count {c:?}"))?;
        if !(0.0..=2.0).contains(&start) || !(0.0..=2.0).contains(&stop) || start > stop {
            return Err(format!("grid must satisfy 0 <= start <= stop <= 2, got {start}:{stop}"));
        }
        if count == 0 {
            return Err("grid count must be positive".into());
        }
        Ok(Self { start, stop, count })
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.start, self.stop, self.count)
    }
}

/// A relaxation value, or `opt` for the C-bound optimum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OmegaChoice {
    Value(f64),
    Optimal,
}

impl OmegaChoice {
    pub fn tag(&self) -> String {
        match self {
            OmegaChoice::Value(w) => format!("{w}"),
            OmegaChoice::Optimal => "opt".into(),
        }
    }
}

impl FromStr for OmegaChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("opt") || s.eq_ignore_ascii_case("optimal") {
            return Ok(OmegaChoice::Optimal);
        }
        let w: f64 = s.parse().map_err(|_| format!("omega must be a number or `opt`, got {s:?}"))?;
        if !(w > 0.0 && w < 2.0) {
            return Err(format!("omega must lie in (0, 2), got {w}"));
        }
        Ok(OmegaChoice::Value(w))
    }
}

/// Everything a subcommand needs to set up its problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub name: String,
    pub source: SystemSource,
    pub method: Option<Method>,
    pub blocks: Option<usize>,
    pub grid: GridSpec,
    pub trials: usize,
    pub iters: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn new(name: &str, source: SystemSource) -> Self {
        Self {
            name: name.into(),
            source,
            method: None,
            blocks: None,
            grid: GridSpec::default(),
            trials: 1,
            iters: 1000,
            seed: 0,
            out: None,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.trials == 0 {
            return Err(CliError::Input("--trials must be at least 1".into()));
        }
        if self.blocks == Some(0) {
            return Err(CliError::Input("--blocks must be at least 1".into()));
        }
        Ok(())
    }

    /// One-line description for metadata headers.
    pub fn describe_source(&self) -> String {
        match &self.source {
            SystemSource::Generated { generator, m, n, kappa } => match generator {
                Generator::Hilbert => format!("hilbert n={n}"),
                Generator::Parter => format!("parter n={n}"),
                Generator::Random => format!("random m={} n={n} kappa={kappa}", m.unwrap_or(*n)),
            },
            SystemSource::File { matrix, rhs } => match rhs {
                Some(r) => format!("file {} rhs {}", matrix.display(), r.display()),
                None => format!("file {}", matrix.display()),
            },
        }
    }

    /// Builds the system; the solution is seeded unless a right-hand side
    /// file is given, in which case it is solved for directly.
    pub fn build_system(&self) -> Result<LinearSystem, CliError> {
        let sys = match &self.source {
            SystemSource::Generated { generator, m, n, kappa } => {
                let (n, m) = (*n, m.unwrap_or(*n));
                let natural = match generator {
                    Generator::Hilbert => make_hilbert(n, self.seed)?,
                    Generator::Parter => make_parter(n, self.seed)?,
                    Generator::Random => match self.method {
                        Some(Method::GaussSeidel) => {
                            if m != n {
                                return Err(CliError::Input("gauss-seidel needs a square matrix (m = n)".into()));
                            }
                            make_random_spd(n, *kappa, self.seed)?
                        }
                        _ => make_random(m, n, *kappa, self.seed)?,
                    },
                };
                match self.method {
                    Some(method) if method != natural.method() => {
                        LinearSystem::with_random_solution(natural.a().clone(), method, self.seed)?
                    }
                    _ => natural,
                }
            }
            SystemSource::File { matrix, rhs } => {
                let a = read_matrix(matrix)?;
                let method = self.method.unwrap_or(Method::Kaczmarz);
                match rhs {
                    None => LinearSystem::with_random_solution(a, method, self.seed)?,
                    Some(path) => {
                        let b = read_matrix(path)?;
                        if b.ncols() != 1 {
                            return Err(CliError::Input(format!("{} must hold a single column", path.display())));
                        }
                        let b = DVector::from_column_slice(b.as_slice());
                        LinearSystem::new(a, b, method)?.solved()?
                    }
                }
            }
        };
        Ok(sys)
    }

    /// System, its normalization and the projector ensemble (rank one per
    /// row, or contiguous blocks of `--blocks` rows).
    pub fn prepare(&self) -> Result<Prepared, CliError> {
        self.validate()?;
        let sys = self.build_system()?;
        let ns = normalize(&sys)?;
        let ens = match self.blocks {
            None | Some(1) => ensemble_from_system(&ns)?,
            Some(size) => ensemble_blocks(&ns, &contiguous_blocks(ns.nrows(), size))?,
        };
        Ok(Prepared { sys, ns, ens })
    }
}

pub struct Prepared {
    pub sys: LinearSystem,
    pub ns: NormalizedSystem,
    pub ens: ProjectorEnsemble,
}
