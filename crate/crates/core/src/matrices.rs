//! Linear systems, normalization, named test problems and the geometric
//! irreducibility test for projector ensembles.
//!
//! Matrix formulas in the docs use 1-based indices; storage is 0-based.

use nalgebra::{DMatrix, DVector};
use petgraph::unionfind::UnionFind;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg;
use crate::projections::ProjectorEnsemble;

const SYMMETRY_TOL: f64 = 1e-12;
const CONSISTENCY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    GaussSeidel,
    Kaczmarz,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::GaussSeidel => "gauss-seidel",
            Method::Kaczmarz => "kaczmarz",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "gauss-seidel" | "gs" => Ok(Method::GaussSeidel),
            "kaczmarz" | "kz" => Ok(Method::Kaczmarz),
            other => Err(Error::InvalidParameter(format!("unknown method `{other}`"))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// The problem `A x = b` together with the iteration it is meant for.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    a: DMatrix<f64>,
    b: DVector<f64>,
    method: Method,
    x_star: Option<DVector<f64>>,
}

impl LinearSystem {
    /// Wraps `A x = b`, checking the method's requirements on `A` and, for
    /// Kaczmarz, that the system is consistent.
    pub fn new(a: DMatrix<f64>, b: DVector<f64>, method: Method) -> Result<Self> {
        if b.len() != a.nrows() {
            return Err(Error::Dimension(format!("b has {} entries, A has {} rows", b.len(), a.nrows())));
        }
        validate_matrix(&a, method)?;
        if method == Method::Kaczmarz {
            let svd = a.clone().svd(true, true);
            let x = svd
                .solve(&b, 1e-14 * svd.singular_values.max())
                .map_err(|e| Error::InvalidParameter(e.to_string()))?;
            let residual = (&a * x - &b).norm();
            let allowed = CONSISTENCY_TOL * b.norm();
            if residual > allowed {
                return Err(Error::Inconsistent { residual, allowed });
            }
        }
        Ok(Self { a, b, method, x_star: None })
    }

    /// Builds a consistent system with known solution: `b = A x_star`.
    pub fn from_solution(a: DMatrix<f64>, x_star: DVector<f64>, method: Method) -> Result<Self> {
        if x_star.len() != a.ncols() {
            return Err(Error::Dimension(format!("x_star has {} entries, A has {} columns", x_star.len(), a.ncols())));
        }
        validate_matrix(&a, method)?;
        let b = &a * &x_star;
        Ok(Self { a, b, method, x_star: Some(x_star) })
    }

    /// Same as [`LinearSystem::from_solution`] with `x_star` drawn from a
    /// seeded standard normal.
    pub fn with_random_solution(a: DMatrix<f64>, method: Method, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x_star = gaussian_vector(a.ncols(), &mut rng);
        Self::from_solution(a, x_star, method)
    }

    /// Fills in `x_star` with a dense direct solve (least squares for
    /// Kaczmarz, Cholesky for Gauss-Seidel) when it is not already known.
    pub fn solved(mut self) -> Result<Self> {
        if self.x_star.is_none() {
            let x = match self.method {
                Method::Kaczmarz => {
                    let svd = self.a.clone().svd(true, true);
                    let cutoff = 1e-14 * svd.singular_values.max();
                    if svd.rank(cutoff) < self.a.ncols() {
                        return Err(Error::RankDeficient(svd.singular_values.min()));
                    }
                    svd.solve(&self.b, cutoff).map_err(|e| Error::InvalidParameter(e.to_string()))?
                }
                Method::GaussSeidel => self
                    .a
                    .clone()
                    .cholesky()
                    .ok_or(Error::NotPositiveDefinite(f64::NAN))?
                    .solve(&self.b),
            };
            self.x_star = Some(x);
        }
        Ok(self)
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn x_star(&self) -> Option<&DVector<f64>> {
        self.x_star.as_ref()
    }

    pub fn nrows(&self) -> usize {
        self.a.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.a.ncols()
    }
}

fn validate_matrix(a: &DMatrix<f64>, method: Method) -> Result<()> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Err(Error::Dimension("empty matrix".into()));
    }
    match method {
        Method::Kaczmarz => {
            if a.nrows() < a.ncols() {
                return Err(Error::Dimension(format!("Kaczmarz needs m >= n, got {}x{}", a.nrows(), a.ncols())));
            }
            for (row, r) in a.row_iter().enumerate() {
                if r.norm() == 0.0 {
                    return Err(Error::ZeroRow { row });
                }
            }
        }
        Method::GaussSeidel => {
            if !a.is_square() {
                return Err(Error::Dimension(format!("Gauss-Seidel needs a square matrix, got {}x{}", a.nrows(), a.ncols())));
            }
            for (row, &value) in a.diagonal().iter().enumerate() {
                if value <= 0.0 {
                    return Err(Error::NonPositiveDiagonal { row, value });
                }
            }
            let asym = linalg::max_asymmetry(a);
            if asym > SYMMETRY_TOL * a.amax().max(1.0) {
                return Err(Error::NotSymmetric(asym));
            }
            if a.clone().cholesky().is_none() {
                let smallest = linalg::sorted_eigenvalues(a)[0];
                return Err(Error::NotPositiveDefinite(smallest));
            }
        }
    }
    Ok(())
}

/// Scalings applied by [`normalize`].
#[derive(Debug, Clone, PartialEq)]
pub enum Scaling {
    /// Kaczmarz: Euclidean norm of each original row.
    RowNorms(DVector<f64>),
    /// Gauss-Seidel: `sqrt(A_ii)`; the normalized matrix is `D^{-1/2} A D^{-1/2}`
    /// acting on `y = D^{1/2} x`.
    DiagonalSqrt(DVector<f64>),
}

/// A system rescaled to unit rows (Kaczmarz) or unit diagonal (Gauss-Seidel).
#[derive(Debug, Clone)]
pub struct NormalizedSystem {
    pub a_norm: DMatrix<f64>,
    pub b_norm: DVector<f64>,
    /// Exact solution in normalized coordinates.
    pub x_star_norm: Option<DVector<f64>>,
    pub scaling: Scaling,
    pub method: Method,
}

impl NormalizedSystem {
    pub fn nrows(&self) -> usize {
        self.a_norm.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.a_norm.ncols()
    }

    /// Maps a normalized-coordinate iterate back to the original unknowns.
    pub fn to_original(&self, y: &DVector<f64>) -> DVector<f64> {
        match &self.scaling {
            Scaling::RowNorms(_) => y.clone(),
            Scaling::DiagonalSqrt(d) => y.component_div(d),
        }
    }

    /// Maps original unknowns into normalized coordinates.
    pub fn from_original(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.scaling {
            Scaling::RowNorms(_) => x.clone(),
            Scaling::DiagonalSqrt(d) => x.component_mul(d),
        }
    }

    /// The normalized problem viewed as a plain system.
    pub fn to_system(&self) -> LinearSystem {
        LinearSystem {
            a: self.a_norm.clone(),
            b: self.b_norm.clone(),
            method: self.method,
            x_star: self.x_star_norm.clone(),
        }
    }
}

/// Rescales rows to unit norm (Kaczmarz) or applies `D^{-1/2} A D^{-1/2}`
/// (Gauss-Seidel).
pub fn normalize(sys: &LinearSystem) -> Result<NormalizedSystem> {
    match sys.method {
        Method::Kaczmarz => {
            let norms = DVector::from_iterator(sys.nrows(), sys.a.row_iter().map(|r| r.norm()));
            if let Some(row) = norms.iter().position(|&v| v == 0.0) {
                return Err(Error::ZeroRow { row });
            }
            let mut a_norm = sys.a.clone();
            for (i, mut row) in a_norm.row_iter_mut().enumerate() {
                row /= norms[i];
            }
            let b_norm = sys.b.component_div(&norms);
            Ok(NormalizedSystem {
                a_norm,
                b_norm,
                x_star_norm: sys.x_star.clone(),
                scaling: Scaling::RowNorms(norms),
                method: Method::Kaczmarz,
            })
        }
        Method::GaussSeidel => {
            let diag = sys.a.diagonal();
            if let Some(row) = diag.iter().position(|&v| v <= 0.0) {
                return Err(Error::NonPositiveDiagonal { row, value: diag[row] });
            }
            let d = diag.map(f64::sqrt);
            let n = d.len();
            let a_norm = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { sys.a[(i, j)] / (d[i] * d[j]) });
            let a_norm = linalg::symmetrize(&a_norm);
            let b_norm = sys.b.component_div(&d);
            let x_star_norm = sys.x_star.as_ref().map(|x| x.component_mul(&d));
            Ok(NormalizedSystem { a_norm, b_norm, x_star_norm, scaling: Scaling::DiagonalSqrt(d), method: Method::GaussSeidel })
        }
    }
}

pub(crate) fn gaussian_vector(n: usize, rng: &mut impl Rng) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// Hilbert matrix `A_ij = 1/(i + j - 1)` as a Gauss-Seidel problem.
pub fn make_hilbert(n: usize, seed: u64) -> Result<LinearSystem> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("Hilbert size must be >= 2, got {n}")));
    }
    let a = DMatrix::from_fn(n, n, |i, j| 1.0 / (i + j + 1) as f64);
    LinearSystem::with_random_solution(a, Method::GaussSeidel, seed)
}

/// Parter matrix `A_ij = 1/(i - j + 1/2)` as a Kaczmarz problem.
pub fn make_parter(n: usize, seed: u64) -> Result<LinearSystem> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("Parter size must be >= 2, got {n}")));
    }
    let a = DMatrix::from_fn(n, n, |i, j| 1.0 / (i as f64 - j as f64 + 0.5));
    LinearSystem::with_random_solution(a, Method::Kaczmarz, seed)
}

/// Haar-distributed `m x n` matrix with orthonormal columns (QR of a
/// Gaussian matrix with the sign of `R`'s diagonal folded into `Q`).
pub(crate) fn random_orthonormal(m: usize, n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(m, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Singular values spanning exactly `[1/kappa, 1]`: both endpoints pinned,
/// interior values log-uniform, sorted descending.
pub(crate) fn log_uniform_spectrum(n: usize, kappa: f64, rng: &mut impl Rng) -> Vec<f64> {
    let span = kappa.ln();
    let mut logs: Vec<f64> = (0..n)
        .map(|k| match k {
            0 => 0.0,
            k if k == n - 1 => -span,
            _ => -span * rng.random::<f64>(),
        })
        .collect();
    logs.sort_by(|a, b| b.total_cmp(a));
    logs.into_iter().map(f64::exp).collect()
}

/// `A = U diag(s) V^T` with seeded orthogonal factors and prescribed
/// condition number `kappa`, as a Kaczmarz problem.
pub fn make_random(m: usize, n: usize, kappa: f64, seed: u64) -> Result<LinearSystem> {
    if kappa.is_nan() || kappa < 1.0 {
        return Err(Error::InvalidParameter(format!("kappa must be >= 1, got {kappa}")));
    }
    if n == 0 || m < n {
        return Err(Error::InvalidParameter(format!("need m >= n >= 1, got m={m}, n={n}")));
    }
    if n == 1 && kappa > 1.0 {
        return Err(Error::InvalidParameter("a single column has condition number 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = random_orthonormal(m, n, &mut rng);
    let v = random_orthonormal(n, n, &mut rng);
    let s = DVector::from_vec(log_uniform_spectrum(n, kappa, &mut rng));
    let a = u * DMatrix::from_diagonal(&s) * v.transpose();
    let x_star = gaussian_vector(n, &mut rng);
    LinearSystem::from_solution(a, x_star, Method::Kaczmarz)
}

/// Seeded symmetric positive definite `n x n` matrix with eigenvalues
/// log-uniform in `[1/kappa, 1]`, as a Gauss-Seidel problem.
pub fn make_random_spd(n: usize, kappa: f64, seed: u64) -> Result<LinearSystem> {
    if kappa.is_nan() || kappa < 1.0 {
        return Err(Error::InvalidParameter(format!("kappa must be >= 1, got {kappa}")));
    }
    if n < 2 {
        return Err(Error::InvalidParameter(format!("size must be >= 2, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = random_orthonormal(n, n, &mut rng);
    let s = DVector::from_vec(log_uniform_spectrum(n, kappa, &mut rng));
    let a = linalg::symmetrize(&(&q * DMatrix::from_diagonal(&s) * q.transpose()));
    let x_star = gaussian_vector(n, &mut rng);
    LinearSystem::from_solution(a, x_star, Method::GaussSeidel)
}

/// Condition number of the pinned toy problem.
pub const TOY_KAPPA: f64 = 100.0;
/// Seed of the pinned toy problem.
pub const TOY_SEED: u64 = 1;

/// The pinned 5 x 5 SPD toy problem used by the Monte-Carlo experiments.
pub fn make_toy() -> Result<LinearSystem> {
    make_random_spd(5, TOY_KAPPA, TOY_SEED)
}

/// Default orthogonality threshold for [`irreducible`]: `1e-12 * n`.
pub fn default_irreducibility_tol(n: usize) -> f64 {
    1e-12 * n as f64
}

/// Whether the ensemble admits no partition into two mutually orthogonal
/// groups. Projectors `P_i`, `P_j` are joined when `tr(P_i P_j) > tol`; the
/// ensemble is irreducible iff the resulting graph is connected.
pub fn irreducible(ens: &ProjectorEnsemble, tol: f64) -> bool {
    let items = ens.items();
    let k = items.len();
    let mut components = UnionFind::<usize>::new(k);
    for i in 0..k {
        for j in (i + 1)..k {
            // tr(P_i P_j) = ||U_i^T U_j||_F^2
            let overlap = (items[i].basis().transpose() * items[j].basis()).norm_squared();
            if overlap > tol {
                components.union(i, j);
            }
        }
    }
    (1..k).all(|i| components.equiv(0, i))
}
