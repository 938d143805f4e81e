//! Dense covariance superoperators on the space of `n x n` matrices.
//!
//! A matrix `X` is identified with its column-major vectorization, so a
//! superoperator is an `n^2 x n^2` matrix and `P X Q` corresponds to
//! `(Q^T kron P) vec(X)`. With `E[P]` the expected projector:
//!
//! * `B = I kron E[P] + E[P] kron I`
//! * `C = E[P kron P]`
//! * `A(w) = I - w B + w^2 C = E[(I - w P) kron (I - w P)]`
//!
//! The covariance of the error evolves by `A(w)`, so its largest eigenvalue
//! is the exact asymptotic rate `rho(w)`, and
//! `lambda_max(A(w)) = 1 - w lambda_min(B - w C)`.

use nalgebra::{DMatrix, DVector};

use crate::bounds::{bound_pair, Ingredients};
use crate::error::{Error, Result};
use crate::linalg;
use crate::projections::{expected_projector, ProjectorEnsemble};

/// Largest `n^2` assembled densely by default (n <= 64).
pub const DEFAULT_DIM_CAP: usize = 4096;
/// Relative spectral gap above which the top eigenvalue counts as simple.
pub const SIMPLE_GAP_TOL: f64 = 1e-10;
/// Step of the one-sided finite-difference stencils at `w = 0` and `w = 2`.
pub const FD_STEP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SuperOpLabel {
    AOfOmega(f64),
    B,
    C,
    Custom,
}

/// A symmetric superoperator stored as a dense `n^2 x n^2` matrix.
#[derive(Debug, Clone)]
pub struct SuperOp {
    pub mat: DMatrix<f64>,
    pub n: usize,
    pub label: SuperOpLabel,
}

impl SuperOp {
    /// Applies the operator to an `n x n` matrix.
    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let v = DVector::from_column_slice(x.as_slice());
        let out = &self.mat * v;
        DMatrix::from_column_slice(self.n, self.n, out.as_slice())
    }

    /// Eigenvalues, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        linalg::sorted_eigenvalues(&self.mat)
    }
}

fn check_cap(n: usize, cap: usize) -> Result<()> {
    let dim = n * n;
    if dim > cap {
        Err(Error::DimensionCap { dim, cap })
    } else {
        Ok(())
    }
}

fn vec_of(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

fn unvec(v: &DVector<f64>, n: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(n, n, v.as_slice())
}

/// `B` and `C` for one ensemble, assembled once and reused across `w`.
#[derive(Debug, Clone)]
pub struct SuperOperators {
    n: usize,
    ep: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
}

impl SuperOperators {
    pub fn new(ens: &ProjectorEnsemble) -> Result<Self> {
        Self::with_cap(ens, DEFAULT_DIM_CAP)
    }

    pub fn with_cap(ens: &ProjectorEnsemble, cap: usize) -> Result<Self> {
        let n = ens.n();
        check_cap(n, cap)?;
        let ep = expected_projector(ens).0;
        let eye = DMatrix::<f64>::identity(n, n);
        let b = eye.kronecker(&ep) + ep.kronecker(&eye);

        // C = sum_i p_i (U_i kron U_i)(U_i kron U_i)^T = W W^T, one column of W
        // per pair of basis vectors of each projector.
        let width: usize = ens.items().iter().map(|it| it.rank() * it.rank()).sum();
        let mut w = DMatrix::<f64>::zeros(n * n, width);
        let mut col = 0;
        for item in ens.items() {
            let scale = item.probability().sqrt();
            let u = item.basis();
            for a in 0..u.ncols() {
                for bb in 0..u.ncols() {
                    let kron = u.column(a).kronecker(&u.column(bb)) * scale;
                    w.set_column(col, &kron);
                    col += 1;
                }
            }
        }
        let c = linalg::symmetrize(&(&w * w.transpose()));
        Ok(Self { n, ep, b, c })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn expected_projector(&self) -> &DMatrix<f64> {
        &self.ep
    }

    pub fn b(&self) -> SuperOp {
        SuperOp { mat: self.b.clone(), n: self.n, label: SuperOpLabel::B }
    }

    pub fn c(&self) -> SuperOp {
        SuperOp { mat: self.c.clone(), n: self.n, label: SuperOpLabel::C }
    }

    /// `B - w C`.
    pub fn gap_operator(&self, omega: f64) -> DMatrix<f64> {
        &self.b - &self.c * omega
    }

    /// `A(w) = I - w B + w^2 C`.
    pub fn a(&self, omega: f64) -> SuperOp {
        let dim = self.n * self.n;
        let mat = DMatrix::identity(dim, dim) - self.gap_operator(omega) * omega;
        SuperOp { mat, n: self.n, label: SuperOpLabel::AOfOmega(omega) }
    }

    /// `lambda_min(B - w C)`.
    pub fn lambda1_gap(&self, omega: f64) -> f64 {
        linalg::sorted_eigenvalues(&self.gap_operator(omega))[0]
    }

    /// `lambda_max(A(w))` over the full matrix space (eigenvalues only).
    pub fn lam_max(&self, omega: f64) -> f64 {
        *linalg::sorted_eigenvalues(&self.a(omega).mat).last().expect("nonempty")
    }

    /// `lambda_max(A(w))` computed on the invariant subspace of symmetric
    /// matrices (dimension `n(n+1)/2`).
    ///
    /// `A(w)` maps symmetric matrices to symmetric matrices, and as a positive
    /// map its spectral radius is attained at a positive semidefinite
    /// eigenvector, so this equals [`SuperOperators::lam_max`] at a fraction
    /// of the cost.
    pub fn lam_max_symmetric(&self, omega: f64) -> f64 {
        let restricted = restrict_to_symmetric(&self.a(omega).mat, self.n);
        *linalg::sorted_eigenvalues(&restricted).last().expect("nonempty")
    }

    /// Largest eigenvalue of `A(w)` with its eigenvector as a matrix.
    pub fn rho(&self, omega: f64) -> SpectralReport {
        let (values, vectors) = linalg::sorted_eigen(&self.a(omega).mat);
        let dim = values.len();
        let lam_max = values[dim - 1];
        let second = if dim > 1 { values[dim - 2] } else { f64::NEG_INFINITY };
        let simple = lam_max - second > SIMPLE_GAP_TOL * lam_max.abs().max(f64::MIN_POSITIVE);

        let v = unvec(&vectors.column(dim - 1).into_owned(), self.n);
        let mut top = linalg::symmetrize(&v);
        let norm = top.norm();
        if norm > 0.0 {
            top /= norm;
        }
        let trace = top.trace();
        let flip = if trace.abs() > 1e-8 {
            trace < 0.0
        } else {
            top[top.iamax_full()] < 0.0
        };
        if flip {
            top.neg_mut();
        }
        let psd_defect = linalg::sorted_eigenvalues(&top)[0];
        SpectralReport { lam_max, second, top_eigvec_matrix: top, psd_defect, simple }
    }

    /// `lambda_min(B - 2C)` and the overlap of its eigenvector with `I/sqrt(n)`.
    pub fn check_loewner(&self) -> LoewnerReport {
        let (values, vectors) = linalg::sorted_eigen(&self.gap_operator(2.0));
        let scaled_identity = vec_of(&DMatrix::identity(self.n, self.n)) / (self.n as f64).sqrt();
        let alignment = vectors.column(0).dot(&scaled_identity).abs();
        LoewnerReport { lambda_min: values[0], alignment }
    }

    /// Second-order one-sided finite differences of `lambda_min(B - w C)` at both ends
    /// against `-xi` and `-(1/n) tr E[P]`.
    pub fn derivative_checks(&self, xi: f64) -> DerivativeReport {
        let h = FD_STEP;
        let f = |w: f64| self.lambda1_gap(w);
        let slope_at_0 = (-3.0 * f(0.0) + 4.0 * f(h) - f(2.0 * h)) / (2.0 * h);
        let slope_at_2 = (3.0 * f(2.0) - 4.0 * f(2.0 - h) + f(2.0 - 2.0 * h)) / (2.0 * h);
        let expected_at_2 = -self.ep.trace() / self.n as f64;
        DerivativeReport { slope_at_0, expected_at_0: -xi, slope_at_2, expected_at_2 }
    }

    /// `<V, C(V)>` for `V = u u^T`; equals `xi` when `u = u1`.
    pub fn c_quadratic_form(&self, u: &DVector<f64>) -> f64 {
        let v = vec_of(&(u * u.transpose()));
        v.dot(&(&self.c * &v))
    }

    /// Verifies that the 2x2 surrogate's gap stays below the exact gap,
    /// i.e. `C(w) >= rho(w)`, on every grid point.
    pub fn check_eclipse(&self, ing: &Ingredients, omegas: &[f64]) -> EclipseReport {
        let pair = bound_pair(ing);
        let points = omegas
            .iter()
            .map(|&omega| EclipsePoint { omega, surrogate_gap: pair.surrogate_gap(omega), exact_gap: self.lambda1_gap(omega) })
            .collect();
        EclipseReport { points }
    }

    /// `lambda_max(A(1 - t))` against `lambda_max(A(1 + t))` on a grid of `t`.
    pub fn check_overrelax_dominance(&self, ts: &[f64]) -> DominanceReport {
        let points = ts.iter().map(|&t| (t, self.lam_max(1.0 - t), self.lam_max(1.0 + t))).collect();
        DominanceReport { points }
    }

    /// `|lambda_max(A(w)) - (1 - w lambda_min(B - w C))|`.
    pub fn identity_deviation(&self, omega: f64) -> f64 {
        (self.lam_max(omega) - (1.0 - omega * self.lambda1_gap(omega))).abs()
    }
}

/// Compresses an operator that preserves symmetric matrices onto the
/// orthonormal basis `{E_ii} U {(E_ij + E_ji)/sqrt 2 : i < j}`.
pub fn restrict_to_symmetric(mat: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut basis: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n * (n + 1) / 2);
    for j in 0..n {
        for i in 0..=j {
            if i == j {
                basis.push(vec![(i + n * i, 1.0)]);
            } else {
                basis.push(vec![(i + n * j, h), (j + n * i, h)]);
            }
        }
    }
    let dim = basis.len();
    DMatrix::from_fn(dim, dim, |p, q| {
        let mut s = 0.0;
        for &(a, ca) in &basis[p] {
            for &(b, cb) in &basis[q] {
                s += ca * cb * mat[(a, b)];
            }
        }
        s
    })
}

/// Top of the spectrum of `A(w)`.
#[derive(Debug, Clone)]
pub struct SpectralReport {
    pub lam_max: f64,
    /// Second-largest eigenvalue of `A(w)`.
    pub second: f64,
    /// Symmetrized, unit Frobenius norm, sign fixed to nonnegative trace.
    pub top_eigvec_matrix: DMatrix<f64>,
    /// Smallest eigenvalue of `top_eigvec_matrix`.
    pub psd_defect: f64,
    pub simple: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct LoewnerReport {
    pub lambda_min: f64,
    pub alignment: f64,
}

impl LoewnerReport {
    pub fn psd(&self, tol: f64) -> bool {
        self.lambda_min >= -tol
    }

    pub fn aligned(&self, tol: f64) -> bool {
        self.alignment >= 1.0 - tol
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DerivativeReport {
    pub slope_at_0: f64,
    pub expected_at_0: f64,
    pub slope_at_2: f64,
    pub expected_at_2: f64,
}

impl DerivativeReport {
    pub fn deviation_at_0(&self) -> f64 {
        (self.slope_at_0 - self.expected_at_0).abs()
    }

    pub fn deviation_at_2(&self) -> f64 {
        (self.slope_at_2 - self.expected_at_2).abs()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EclipsePoint {
    pub omega: f64,
    /// `lambda_min(B* - w C*)`.
    pub surrogate_gap: f64,
    /// `lambda_min(B - w C)`.
    pub exact_gap: f64,
}

#[derive(Debug, Clone)]
pub struct EclipseReport {
    pub points: Vec<EclipsePoint>,
}

impl EclipseReport {
    pub fn all_pass(&self, tol: f64) -> bool {
        self.points.iter().all(|p| p.surrogate_gap <= p.exact_gap + tol)
    }

    /// Some interior grid point where the surrogate is strictly below.
    pub fn strict_somewhere(&self, margin: f64) -> bool {
        self.points.iter().any(|p| p.omega > 0.0 && p.omega < 2.0 && p.exact_gap - p.surrogate_gap > margin)
    }

    pub fn max_abs_difference(&self) -> f64 {
        self.points.iter().map(|p| (p.exact_gap - p.surrogate_gap).abs()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct DominanceReport {
    /// `(t, lambda_max(A(1 - t)), lambda_max(A(1 + t)))`.
    pub points: Vec<(f64, f64, f64)>,
}

impl DominanceReport {
    pub fn all_pass(&self, tol: f64) -> bool {
        self.points.iter().all(|&(_, under, over)| under >= over - tol)
    }
}

pub fn build_b(ens: &ProjectorEnsemble) -> Result<SuperOp> {
    Ok(SuperOperators::new(ens)?.b())
}

pub fn build_c(ens: &ProjectorEnsemble) -> Result<SuperOp> {
    Ok(SuperOperators::new(ens)?.c())
}

pub fn build_a(ens: &ProjectorEnsemble, omega: f64) -> Result<SuperOp> {
    Ok(SuperOperators::new(ens)?.a(omega))
}

/// `A(w)` assembled directly as `sum_i p_i (I - w P_i) kron (I - w P_i)`.
pub fn build_a_direct(ens: &ProjectorEnsemble, omega: f64) -> Result<SuperOp> {
    let n = ens.n();
    check_cap(n, DEFAULT_DIM_CAP)?;
    let eye = DMatrix::<f64>::identity(n, n);
    let mut mat = DMatrix::zeros(n * n, n * n);
    for item in ens.items() {
        let step = &eye - item.projector() * omega;
        mat += step.kronecker(&step) * item.probability();
    }
    Ok(SuperOp { mat, n, label: SuperOpLabel::AOfOmega(omega) })
}

pub fn rho(ens: &ProjectorEnsemble, omega: f64) -> Result<SpectralReport> {
    Ok(SuperOperators::new(ens)?.rho(omega))
}

pub fn lambda1_gap(ens: &ProjectorEnsemble, omega: f64) -> Result<f64> {
    Ok(SuperOperators::new(ens)?.lambda1_gap(omega))
}

pub fn check_loewner(ens: &ProjectorEnsemble) -> Result<LoewnerReport> {
    Ok(SuperOperators::new(ens)?.check_loewner())
}

pub fn derivative_checks(ens: &ProjectorEnsemble) -> Result<DerivativeReport> {
    let ing = crate::bounds::ingredients(ens)?;
    Ok(SuperOperators::new(ens)?.derivative_checks(ing.xi))
}

pub fn check_eclipse(ing: &Ingredients, ens: &ProjectorEnsemble, omegas: &[f64]) -> Result<EclipseReport> {
    Ok(SuperOperators::new(ens)?.check_eclipse(ing, omegas))
}

pub fn check_overrelax_dominance(ens: &ProjectorEnsemble, ts: &[f64]) -> Result<DominanceReport> {
    Ok(SuperOperators::new(ens)?.check_overrelax_dominance(ts))
}
