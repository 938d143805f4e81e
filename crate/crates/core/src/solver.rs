//! Iteration engines.
//!
//! A step visits one equation (or block of equations) and moves the iterate
//! by `w` times the correction that would satisfy it exactly. In error
//! coordinates this is `e <- (I - w P_i) e`, with `e = x - x*` for Kaczmarz
//! and `e = A^{1/2}(x - x*)` for Gauss-Seidel.
//!
//! All randomness comes from ChaCha8 streams seeded per trial
//! (`seed + trial index`), so trajectories are reproducible regardless of
//! how trials are scheduled across threads.

use log::warn;
use nalgebra::{Complex, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrices::{normalize, LinearSystem, Method, NormalizedSystem};
use crate::projections::ProjectorEnsemble;

/// Largest dimension accepted by [`iteration_matrix_g`].
pub const G_DIM_CAP: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepMode {
    /// Equations drawn independently from the ensemble's law.
    Randomized,
    /// Equations visited in ascending order, repeatedly.
    CyclicForward,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveConfig {
    pub omega: f64,
    pub max_iters: usize,
    pub seed: u64,
    pub record_every: usize,
    pub mode: SweepMode,
}

impl SolveConfig {
    pub fn new(omega: f64, max_iters: usize, seed: u64) -> Result<Self> {
        let cfg = Self { omega, max_iters, seed, record_every: 1, mode: SweepMode::Randomized };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn record_every(mut self, every: usize) -> Self {
        self.record_every = every;
        self
    }

    pub fn mode(mut self, mode: SweepMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0 && self.omega < 2.0) {
            return Err(Error::OmegaOutOfRange(self.omega, "(0, 2)"));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidParameter("record_every must be positive".into()));
        }
        Ok(())
    }
}

/// Squared error norms at iterations `0, r, 2r, ...` (`r = record_every`).
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub sq_errors: Vec<f64>,
    pub record_every: usize,
    pub seed: u64,
    pub omega: f64,
}

impl TrialRecord {
    pub fn iterations(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.sq_errors.len()).map(move |k| k * self.record_every)
    }
}

/// `x <- x + w (b_i - a_i^T x) / a_ii e_i` (Gauss-Seidel) or
/// `x <- x + w (b_i - a_i^T x) a_i` (Kaczmarz, unit rows), in the
/// normalized system's coordinates.
pub fn step(ns: &NormalizedSystem, x: &DVector<f64>, i: usize, omega: f64) -> DVector<f64> {
    let mut out = x.clone();
    step_in_place(ns, &mut out, i, omega);
    out
}

fn step_in_place(ns: &NormalizedSystem, x: &mut DVector<f64>, i: usize, omega: f64) {
    let row = ns.a_norm.row(i);
    let residual = ns.b_norm[i] - row.dot(&x.transpose());
    match ns.method {
        Method::GaussSeidel => x[i] += omega * residual / ns.a_norm[(i, i)],
        Method::Kaczmarz => x.axpy(omega * residual, &row.transpose(), 1.0),
    }
}

/// Pseudo-inverse with the same relative cutoff used for block bases.
fn pinv(m: DMatrix<f64>) -> DMatrix<f64> {
    let svd = m.svd(true, true);
    let eps = 1e-10 * svd.singular_values.max();
    svd.pseudo_inverse(eps).expect("non-negative cutoff")
}

#[derive(Debug, Clone)]
enum Update {
    Row(usize),
    /// Rows of the block and the matrix mapping the block residual to the
    /// correction: `A_J^+` (Kaczmarz, n x r) or `(A_JJ)^+` (Gauss-Seidel, r x r).
    Block(Vec<usize>, DMatrix<f64>),
}

/// A system, its ensemble and the precomputed per-item updates.
#[derive(Debug, Clone)]
pub struct TrialRunner {
    sys: LinearSystem,
    ns: NormalizedSystem,
    ens: ProjectorEnsemble,
    updates: Vec<Update>,
    x_star: DVector<f64>,
}

impl TrialRunner {
    pub fn new(sys: &LinearSystem, ens: &ProjectorEnsemble) -> Result<Self> {
        let ns = normalize(sys)?;
        let x_star = sys.x_star().cloned().ok_or(Error::MissingSolution)?;
        if ens.n() != ns.ncols() {
            return Err(Error::Dimension(format!("ensemble in R^{}, system has {} unknowns", ens.n(), ns.ncols())));
        }
        let mut updates = Vec::with_capacity(ens.len());
        for (k, item) in ens.items().iter().enumerate() {
            let rows = item.rows().ok_or_else(|| Error::InvalidEnsemble(format!("projector {k} is not tied to system rows")))?;
            if let Some(&bad) = rows.iter().find(|&&r| r >= ns.nrows()) {
                return Err(Error::InvalidEnsemble(format!("projector {k} references row {bad}")));
            }
            updates.push(match rows {
                [i] => Update::Row(*i),
                _ => {
                    let sub = DMatrix::from_fn(rows.len(), ns.ncols(), |r, c| ns.a_norm[(rows[r], c)]);
                    let solve = match ns.method {
                        Method::Kaczmarz => pinv(sub),
                        Method::GaussSeidel => pinv(DMatrix::from_fn(rows.len(), rows.len(), |r, c| sub[(r, rows[c])])),
                    };
                    Update::Block(rows.to_vec(), solve)
                }
            });
        }
        Ok(Self { sys: sys.clone(), ns, ens: ens.clone(), updates, x_star })
    }

    pub fn normalized(&self) -> &NormalizedSystem {
        &self.ns
    }

    pub fn ensemble(&self) -> &ProjectorEnsemble {
        &self.ens
    }

    /// Applies the update of ensemble item `k` to a normalized iterate.
    pub fn apply(&self, y: &mut DVector<f64>, k: usize, omega: f64) {
        match &self.updates[k] {
            Update::Row(i) => step_in_place(&self.ns, y, *i, omega),
            Update::Block(rows, solve) => {
                let residual = DVector::from_iterator(
                    rows.len(),
                    rows.iter().map(|&i| self.ns.b_norm[i] - self.ns.a_norm.row(i).dot(&y.transpose())),
                );
                let correction = solve * residual;
                match self.ns.method {
                    Method::Kaczmarz => y.axpy(omega, &correction, 1.0),
                    Method::GaussSeidel => {
                        for (r, &i) in rows.iter().enumerate() {
                            y[i] += omega * correction[r];
                        }
                    }
                }
            }
        }
    }

    /// Squared error of a normalized iterate: Euclidean for Kaczmarz,
    /// `(x - x*)^T A (x - x*)` on the original `A` for Gauss-Seidel.
    pub fn sq_error(&self, y: &DVector<f64>) -> f64 {
        let e = self.ns.to_original(y) - &self.x_star;
        match self.ns.method {
            Method::Kaczmarz => e.norm_squared(),
            Method::GaussSeidel => e.dot(&(self.sys.a() * &e)),
        }
    }

    /// One trajectory from `x0 = 0`.
    pub fn run(&self, cfg: &SolveConfig) -> Result<TrialRecord> {
        Ok(self.run_with_iterate(cfg)?.0)
    }

    /// One trajectory from `x0 = 0`, also returning the final iterate in
    /// original coordinates.
    pub fn run_with_iterate(&self, cfg: &SolveConfig) -> Result<(TrialRecord, DVector<f64>)> {
        cfg.validate()?;
        let mut y = DVector::zeros(self.ns.ncols());
        let mut sq_errors = Vec::with_capacity(cfg.max_iters / cfg.record_every + 1);
        sq_errors.push(self.sq_error(&y));
        let sampler = self.ens.sampler();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let m = self.updates.len();
        for k in 1..=cfg.max_iters {
            let item = match cfg.mode {
                SweepMode::Randomized => sampler.sample(&mut rng),
                SweepMode::CyclicForward => (k - 1) % m,
            };
            self.apply(&mut y, item, cfg.omega);
            if k % cfg.record_every == 0 {
                sq_errors.push(self.sq_error(&y));
            }
        }
        let record = TrialRecord { sq_errors, record_every: cfg.record_every, seed: cfg.seed, omega: cfg.omega };
        Ok((record, self.ns.to_original(&y)))
    }

    /// `trials` independent runs with seeds `cfg.seed + t`.
    pub fn run_trials(&self, cfg: &SolveConfig, trials: usize) -> Result<Vec<TrialRecord>> {
        let one = |t: usize| {
            let cfg = SolveConfig { seed: cfg.seed.wrapping_add(t as u64), ..*cfg };
            self.run(&cfg)
        };
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            (0..trials).into_par_iter().map(one).collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            (0..trials).map(one).collect()
        }
    }
}

/// Randomized run of `sys` drawing from `ens` (mode forced to randomized).
pub fn run_randomized(sys: &LinearSystem, ens: &ProjectorEnsemble, cfg: &SolveConfig) -> Result<TrialRecord> {
    TrialRunner::new(sys, ens)?.run(&cfg.mode(SweepMode::Randomized))
}

/// Forward cyclic sweeps of `sys` through the ensemble's items in order.
pub fn run_cyclic(sys: &LinearSystem, ens: &ProjectorEnsemble, cfg: &SolveConfig) -> Result<TrialRecord> {
    TrialRunner::new(sys, ens)?.run(&cfg.mode(SweepMode::CyclicForward))
}

/// Iteration matrix of one forward sweep and its spectrum.
#[derive(Debug, Clone)]
pub struct IterationMatrix {
    /// `G = (I - w P_m) ... (I - w P_1)` acting on the error.
    pub g: DMatrix<f64>,
    pub eigenvalues: Vec<Complex<f64>>,
    pub spectral_radius: f64,
    /// Gauss-Seidel only: largest distance between matched eigenvalues of `G`
    /// and of `I - w (D - w E)^{-1} A`.
    pub similarity_deviation: Option<f64>,
}

/// Greedy nearest-neighbour matching of two eigenvalue multisets; returns the
/// largest matched distance.
pub fn multiset_distance(a: &[Complex<f64>], b: &[Complex<f64>]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let mut used = vec![false; b.len()];
    let mut worst = 0.0f64;
    for x in a {
        let (k, d) = b
            .iter()
            .enumerate()
            .filter(|(k, _)| !used[*k])
            .map(|(k, y)| (k, (x - y).norm()))
            .min_by(|p, q| p.1.total_cmp(&q.1))
            .expect("equal lengths");
        used[k] = true;
        worst = worst.max(d);
    }
    worst
}

/// The SOR matrix `I - w (D - w E)^{-1} A` with `D = diag(A)` and `E` the
/// strictly lower part of `-A`.
pub fn sor_matrix(a: &DMatrix<f64>, omega: f64) -> DMatrix<f64> {
    let n = a.nrows();
    let mut lower = DMatrix::from_diagonal(&a.diagonal());
    for i in 0..n {
        for j in 0..i {
            // D - w E with E = -strict_lower(A)
            lower[(i, j)] = omega * a[(i, j)];
        }
    }
    let inv_a = lower.solve_lower_triangular(a).expect("positive diagonal");
    DMatrix::identity(n, n) - inv_a * omega
}

/// Eigenvalues of a general real matrix. Triangular input is read off the
/// diagonal, since the unbounded Schur iteration can stall on it.
pub fn complex_spectrum(m: &DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    let n = m.nrows();
    let triangular = (0..n).all(|i| (0..i).all(|j| m[(i, j)] == 0.0));
    if triangular {
        return Ok(m.diagonal().iter().map(|&d| Complex::new(d, 0.0)).collect());
    }
    let schur = nalgebra::linalg::Schur::try_new(m.clone(), f64::EPSILON, 100 * n.max(10))
        .ok_or_else(|| Error::InvalidParameter("Schur iteration did not converge".into()))?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

pub fn iteration_matrix_g(ns: &NormalizedSystem, ens: &ProjectorEnsemble, omega: f64) -> Result<IterationMatrix> {
    let n = ens.n();
    if n > G_DIM_CAP {
        return Err(Error::DimensionCap { dim: n, cap: G_DIM_CAP });
    }
    let eye = DMatrix::<f64>::identity(n, n);
    let mut g = eye.clone();
    for item in ens.items() {
        g = (&eye - item.projector() * omega) * g;
    }
    let eigenvalues = complex_spectrum(&g)?;
    let spectral_radius = eigenvalues.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let natural_rows = ens.items().iter().enumerate().all(|(k, it)| it.rows() == Some(&[k][..]));
    let similarity_deviation = (ns.method == Method::GaussSeidel && natural_rows && ens.len() == n).then(|| {
        complex_spectrum(&sor_matrix(&ns.a_norm, omega)).map(|sor| multiset_distance(&eigenvalues, &sor))
    });
    let similarity_deviation = similarity_deviation.transpose()?;
    Ok(IterationMatrix { g, eigenvalues, spectral_radius, similarity_deviation })
}

/// Least-squares fit of `log(mean sq error)` against iteration count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateEstimate {
    pub log_rate: f64,
    pub r_squared: f64,
    /// Iterations actually used (inclusive).
    pub window: (usize, usize),
    /// The window was cut short at an exact zero.
    pub truncated: bool,
}

impl RateEstimate {
    /// Per-iteration contraction factor of the mean squared error.
    pub fn rate(&self) -> f64 {
        self.log_rate.exp()
    }
}

/// Mean over trials of the recorded squared errors (shortest record wins).
pub fn mean_trajectory(records: &[TrialRecord]) -> Vec<f64> {
    let len = records.iter().map(|r| r.sq_errors.len()).min().unwrap_or(0);
    (0..len).map(|k| records.iter().map(|r| r.sq_errors[k]).sum::<f64>() / records.len() as f64).collect()
}

/// Fits the slope of `log(mean_t sq_errors)` over iterations in
/// `[window.0, window.1]`. A zero mean (exact convergence) truncates the
/// window there with a warning.
pub fn estimate_rate(records: &[TrialRecord], window: (usize, usize)) -> Result<RateEstimate> {
    let first = records.first().ok_or_else(|| Error::InvalidParameter("no trial records".into()))?;
    let every = first.record_every;
    if records.iter().any(|r| r.record_every != every) {
        return Err(Error::InvalidParameter("records use different thinning".into()));
    }
    let mean = mean_trajectory(records);
    let mut points = Vec::new();
    let mut truncated = false;
    for (k, &m) in mean.iter().enumerate() {
        let it = k * every;
        if it < window.0 || it > window.1 {
            continue;
        }
        if !(m > 0.0) {
            warn!("mean squared error reached zero at iteration {it}; truncating the fit window");
            truncated = true;
            break;
        }
        points.push((it as f64, m.ln()));
    }
    if points.len() < 2 {
        return Err(Error::InvalidParameter(format!("need at least two positive recorded points in window {window:?}")));
    }
    let count = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / count;
    let my = points.iter().map(|p| p.1).sum::<f64>() / count;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let ss_tot: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    let ss_res: f64 = points.iter().map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 { (1.0 - ss_res / ss_tot).clamp(0.0, 1.0) } else { 1.0 };
    let used = (points[0].0 as usize, points[points.len() - 1].0 as usize);
    Ok(RateEstimate { log_rate: slope, r_squared, window: used, truncated })
}
