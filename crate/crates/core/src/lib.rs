//! Randomized projection methods (Kaczmarz and Gauss-Seidel) with over-relaxation.
//!
//! The crate covers four layers:
//!
//! * [`matrices`]: problem containers, normalization and named test problems.
//! * [`projections`]: projector ensembles and the expected projector.
//! * [`bounds`]: the B-bound and C-bound on the convergence rate and the
//!   over-relaxation parameter that minimizes the C-bound.
//! * [`superop`]: dense covariance superoperators whose top eigenvalue is the
//!   exact asymptotic rate, plus numerical checks of their spectral structure.
//! * [`solver`]: randomized and cyclic iterations, Monte-Carlo trials and
//!   empirical rate estimation.

pub mod bounds;
pub mod error;
pub mod io;
pub mod linalg;
pub mod matrices;
pub mod projections;
pub mod solver;
pub mod superop;

pub use bounds::{b_bound, bound_pair, c_bound, ingredients, optimal_omega, BoundCurve, BoundPair, Ingredients};
pub use error::{Error, Result};
pub use matrices::{
    irreducible, make_hilbert, make_parter, make_random, make_random_spd, make_toy, normalize, LinearSystem, Method,
    NormalizedSystem,
};
pub use projections::{ensemble_blocks, ensemble_from_system, expected_projector, ExpectedProjector, ProjectorEnsemble};
pub use solver::{
    estimate_rate, iteration_matrix_g, run_cyclic, run_randomized, RateEstimate, SolveConfig, SweepMode, TrialRecord,
    TrialRunner,
};
pub use superop::{SpectralReport, SuperOp, SuperOperators};
