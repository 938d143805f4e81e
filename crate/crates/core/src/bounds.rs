//! Convergence-rate bounds from the spectrum of the expected projector.
//!
//! With `mu1 <= mu2` the two smallest eigenvalues of `E[P]`, `u1` the bottom
//! eigenvector and `xi = E[(u1^T P u1)^2]`:
//!
//! * B-bound: `B(w) = 1 - w (2 - w) mu1`.
//! * C-bound: `C(w) = 1 - w lambda_min(B* - w C*)` with
//!   `B* = diag(mu1 + mu2, 2 mu1)` and the rank-1
//!   `C* = [[g, sqrt(g xi)], [sqrt(g xi), xi]]`, `g = (mu1 + mu2)/2 (1 - xi/mu1)`.
//!
//! `C(w) <= B(w)` on `[0, 2]`, and `C` is convex, so its minimizer over
//! `[1, 2)` is an over-relaxation that is never worse than `w = 1`.

use log::warn;
use nalgebra::{DVector, Matrix2};

use crate::error::{Error, Result};
use crate::linalg;
use crate::matrices::{Method, NormalizedSystem};
use crate::projections::{expected_projector, ProjectorEnsemble};

/// `mu1` at or below this is treated as a singular expected projector.
pub const RANK_TOL: f64 = 1e-12;
/// Eigenvalues of `E[P]` closer than this to `mu1` are treated as repeated.
pub const DEGENERACY_TOL: f64 = 1e-10;
/// Absolute tolerance of the golden-section search for the optimal relaxation.
pub const OMEGA_SEARCH_TOL: f64 = 1e-10;

/// Spectral ingredients of the expected projector.
#[derive(Debug, Clone, PartialEq)]
pub struct Ingredients {
    pub mu1: f64,
    pub mu2: f64,
    /// Unit bottom eigenvector of `E[P]`. Empty when built from scalars.
    pub u1: DVector<f64>,
    pub xi: f64,
    /// `mu1` was repeated and `u1` was picked by the maximization heuristic.
    pub degenerate: bool,
}

impl Ingredients {
    /// Ingredients given directly as numbers, for evaluating bounds without
    /// an ensemble. Checks `0 < mu1 <= mu2 <= 1` and `mu1^2 <= xi <= mu1`.
    pub fn from_scalars(mu1: f64, mu2: f64, xi: f64) -> Result<Self> {
        const TOL: f64 = 1e-12;
        if !(mu1 > 0.0 && mu1 <= mu2 + TOL && mu2 <= 1.0 + TOL) {
            return Err(Error::InvalidParameter(format!("need 0 < mu1 <= mu2 <= 1, got mu1={mu1}, mu2={mu2}")));
        }
        if !(xi >= mu1 * mu1 - TOL && xi <= mu1 + TOL) {
            return Err(Error::InvalidParameter(format!("need mu1^2 <= xi <= mu1, got xi={xi}, mu1={mu1}")));
        }
        Ok(Self { mu1, mu2, u1: DVector::zeros(0), xi, degenerate: false })
    }

    /// `g* = (mu1 + mu2)/2 (1 - xi/mu1)`, clamped at zero against rounding.
    pub fn gamma_star(&self) -> f64 {
        (0.5 * (self.mu1 + self.mu2) * (1.0 - self.xi / self.mu1)).max(0.0)
    }

    /// True when the C-bound coincides with the B-bound (`xi = mu1` or
    /// `mu2 = mu1`).
    pub fn c_equals_b(&self) -> bool {
        self.xi >= self.mu1 || self.mu2 <= self.mu1
    }
}

/// `E[(u^T P u)^2]` evaluated projector by projector.
pub fn xi_generic(ens: &ProjectorEnsemble, u: &DVector<f64>) -> f64 {
    ens.items()
        .iter()
        .map(|it| {
            let q = it.quadratic_form(u);
            it.probability() * q * q
        })
        .sum()
}

/// Method-specific closed form of `xi` for the uniform row ensemble:
/// `n mu1^2 ||u1||_4^4` (Gauss-Seidel) or `(1/m) ||A u1||_4^4` (Kaczmarz).
pub fn xi_closed_form(ns: &NormalizedSystem, u1: &DVector<f64>, mu1: f64) -> f64 {
    let fourth = |v: &DVector<f64>| v.iter().map(|x| x.powi(4)).sum::<f64>();
    match ns.method {
        Method::GaussSeidel => ns.ncols() as f64 * mu1 * mu1 * fourth(u1),
        Method::Kaczmarz => fourth(&(&ns.a_norm * u1)) / ns.nrows() as f64,
    }
}

fn fix_sign(mut v: DVector<f64>) -> DVector<f64> {
    let pivot = v.iamax();
    if v[pivot] < 0.0 {
        v.neg_mut();
    }
    v
}

/// Computes `mu1, mu2, u1, xi` for an ensemble.
///
/// When `mu1` is repeated, `u1` is chosen inside its eigenspace to maximize
/// `xi`, scanning the eigenbasis vectors and their pairwise 45-degree
/// rotations; the result is flagged `degenerate`.
pub fn ingredients(ens: &ProjectorEnsemble) -> Result<Ingredients> {
    let ep = expected_projector(ens);
    let (values, vectors) = linalg::sorted_eigen(ep.matrix());
    let n = values.len();
    let mu1 = values[0];
    if mu1 <= RANK_TOL {
        return Err(Error::RankDeficient(mu1));
    }
    let mu2 = if n > 1 { values[1] } else { mu1 };

    let eigenspace: Vec<DVector<f64>> =
        (0..n).take_while(|&k| values[k] - mu1 <= DEGENERACY_TOL).map(|k| vectors.column(k).into_owned()).collect();
    let degenerate = eigenspace.len() > 1;

    let u1 = if degenerate {
        warn!("smallest eigenvalue of E[P] has multiplicity {}; choosing u1 by maximizing xi", eigenspace.len());
        let mut candidates = eigenspace.clone();
        for a in 0..eigenspace.len() {
            for b in (a + 1)..eigenspace.len() {
                candidates.push((&eigenspace[a] + &eigenspace[b]) * std::f64::consts::FRAC_1_SQRT_2);
                candidates.push((&eigenspace[a] - &eigenspace[b]) * std::f64::consts::FRAC_1_SQRT_2);
            }
        }
        candidates
            .into_iter()
            .map(|c| {
                let xi = xi_generic(ens, &c);
                (c, xi)
            })
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(c, _)| c)
            .expect("nonempty eigenspace")
    } else {
        eigenspace.into_iter().next().expect("n >= 1")
    };
    let u1 = fix_sign(u1.normalize());
    let xi = xi_generic(ens, &u1);
    Ok(Ingredients { mu1, mu2, u1, xi, degenerate })
}

fn check_omega(omega: f64) -> Result<()> {
    if (0.0..=2.0).contains(&omega) {
        Ok(())
    } else {
        Err(Error::OmegaOutOfRange(omega, "[0, 2]"))
    }
}

/// `B(w) = 1 - w (2 - w) mu1`.
pub fn b_bound(ing: &Ingredients, omega: f64) -> Result<f64> {
    check_omega(omega)?;
    Ok(1.0 - omega * (2.0 - omega) * ing.mu1)
}

/// The 2x2 matrices `B*` and `C*` behind the C-bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundPair {
    pub b_star: Matrix2<f64>,
    pub c_star: Matrix2<f64>,
}

impl BoundPair {
    /// `lambda_min(B* - w C*)`.
    pub fn surrogate_gap(&self, omega: f64) -> f64 {
        let m = self.b_star - self.c_star * omega;
        linalg::smaller_eigenvalue_2x2(m[(0, 0)], m[(0, 1)], m[(1, 1)])
    }
}

pub fn bound_pair(ing: &Ingredients) -> BoundPair {
    let gamma = ing.gamma_star();
    let off = (gamma * ing.xi).sqrt();
    BoundPair {
        b_star: Matrix2::new(ing.mu1 + ing.mu2, 0.0, 0.0, 2.0 * ing.mu1),
        c_star: Matrix2::new(gamma, off, off, ing.xi),
    }
}

/// `C(w) = 1 - w lambda_min(B* - w C*)`.
pub fn c_bound(ing: &Ingredients, omega: f64) -> Result<f64> {
    check_omega(omega)?;
    Ok(1.0 - omega * bound_pair(ing).surrogate_gap(omega))
}

/// Minimizer of the C-bound over `[1, 2)` and the bound's value there.
///
/// Golden-section search to `OMEGA_SEARCH_TOL`; `C` is convex so the search
/// is exact up to that tolerance. The returned value never exceeds `C(1)`.
pub fn optimal_omega(ing: &Ingredients) -> (f64, f64) {
    let pair = bound_pair(ing);
    let c = |w: f64| 1.0 - w * pair.surrogate_gap(w);
    let c_one = c(1.0);
    if ing.c_equals_b() {
        return (1.0, c_one);
    }
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (1.0f64, 2.0f64);
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (c(x1), c(x2));
    while hi - lo > OMEGA_SEARCH_TOL {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = c(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = c(x2);
        }
    }
    let w = 0.5 * (lo + hi);
    let cw = c(w);
    if cw <= c_one && w < 2.0 {
        (w, cw)
    } else {
        (1.0, c_one)
    }
}

/// `count` evenly spaced points from `start` to `stop` inclusive.
pub fn omega_grid(start: f64, stop: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![start],
        _ => (0..count).map(|k| start + (stop - start) * k as f64 / (count - 1) as f64).collect(),
    }
}

/// B-bound, C-bound and optionally the exact rate sampled on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundCurve {
    pub omegas: Vec<f64>,
    pub b_vals: Vec<f64>,
    pub c_vals: Vec<f64>,
    pub rho_vals: Option<Vec<f64>>,
}

impl BoundCurve {
    pub fn compute(ing: &Ingredients, omegas: &[f64]) -> Result<Self> {
        let b_vals = omegas.iter().map(|&w| b_bound(ing, w)).collect::<Result<Vec<_>>>()?;
        let c_vals = omegas.iter().map(|&w| c_bound(ing, w)).collect::<Result<Vec<_>>>()?;
        Ok(Self { omegas: omegas.to_vec(), b_vals, c_vals, rho_vals: None })
    }

    pub fn with_rho(mut self, rho: Vec<f64>) -> Result<Self> {
        if rho.len() != self.omegas.len() {
            return Err(Error::Dimension(format!("{} rho values for {} grid points", rho.len(), self.omegas.len())));
        }
        self.rho_vals = Some(rho);
        Ok(self)
    }

    /// Grid indices where `rho <= C <= B` fails by more than `tol`.
    pub fn violations(&self, tol: f64) -> Vec<usize> {
        (0..self.omegas.len())
            .filter(|&k| {
                let c_ok = self.c_vals[k] <= self.b_vals[k] + tol;
                let rho_ok = self.rho_vals.as_ref().map_or(true, |r| r[k] <= self.c_vals[k] + tol);
                !(c_ok && rho_ok)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrices::{normalize, LinearSystem};
    use crate::projections::ensemble_from_system;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    const THIRD: f64 = 1.0 / 3.0;

    fn gs_pair() -> (NormalizedSystem, ProjectorEnsemble) {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, THIRD, THIRD, 1.0]);
        let ns = normalize(&LinearSystem::from_solution(a, DVector::from_element(2, 1.0), Method::GaussSeidel).unwrap()).unwrap();
        let ens = ensemble_from_system(&ns).unwrap();
        (ns, ens)
    }

    /// Smaller eigenvalue of a symmetric 2x2 by the plain quadratic formula.
    fn quadratic_lambda_min(m: Matrix2<f64>) -> f64 {
        let (a, b, c) = (m[(0, 0)], m[(0, 1)], m[(1, 1)]);
        0.5 * ((a + c) - ((a - c).powi(2) + 4.0 * b * b).sqrt())
    }

    #[test]
    fn identity_kaczmarz_ingredients() {
        let a = DMatrix::identity(2, 2);
        let ns = normalize(&LinearSystem::from_solution(a, DVector::from_element(2, 1.0), Method::Kaczmarz).unwrap()).unwrap();
        let ing = ingredients(&ensemble_from_system(&ns).unwrap()).unwrap();
        assert!((ing.mu1 - 0.5).abs() < 1e-15);
        assert!((ing.mu2 - 0.5).abs() < 1e-15);
        assert!((ing.xi - 0.5).abs() < 1e-15);
        assert!(ing.degenerate);
    }

    #[test]
    fn gauss_seidel_2x2_ingredients() {
        let (ns, ens) = gs_pair();
        let ing = ingredients(&ens).unwrap();
        assert!((ing.mu1 - THIRD).abs() < 1e-14);
        assert!((ing.mu2 - 2.0 * THIRD).abs() < 1e-14);
        let expected_u = DVector::from_vec(vec![1.0, -1.0]) / 2f64.sqrt();
        assert!((ing.u1.dot(&expected_u).abs() - 1.0).abs() < 1e-14);
        // Hand evaluation: n mu1^2 ||u1||_4^4 = 2 * (1/9) * (1/2) = 1/9.
        assert!((ing.xi - 1.0 / 9.0).abs() < 1e-14);
        assert!((xi_closed_form(&ns, &ing.u1, ing.mu1) - ing.xi).abs() < 1e-10);
        assert!(!ing.degenerate);
    }

    #[test]
    fn rank_deficient_rejected() {
        let ens = ProjectorEnsemble::from_vectors(&[DVector::from_vec(vec![1.0, 0.0]), DVector::from_vec(vec![2.0, 0.0])]).unwrap();
        assert!(matches!(ingredients(&ens), Err(Error::RankDeficient(_))));
    }

    #[test]
    fn b_bound_examples() {
        let ing = Ingredients::from_scalars(0.2, 0.5, 0.1).unwrap();
        assert!((b_bound(&ing, 1.0).unwrap() - 0.8).abs() < 1e-15);
        assert_eq!(b_bound(&ing, 0.0).unwrap(), 1.0);
        assert_eq!(b_bound(&ing, 2.0).unwrap(), 1.0);
        let ing = Ingredients::from_scalars(THIRD, 2.0 * THIRD, 1.0 / 9.0).unwrap();
        assert!((b_bound(&ing, 1.0).unwrap() - 2.0 * THIRD).abs() < 1e-15);
        assert!(matches!(b_bound(&ing, 2.5), Err(Error::OmegaOutOfRange(..))));
        assert!(matches!(c_bound(&ing, -0.1), Err(Error::OmegaOutOfRange(..))));
    }

    #[test]
    fn bound_pair_examples() {
        let ing = Ingredients::from_scalars(0.25, 0.5, 0.25).unwrap();
        let pair = bound_pair(&ing);
        assert_eq!(pair.c_star, Matrix2::new(0.0, 0.0, 0.0, 0.25));

        let ing = Ingredients::from_scalars(THIRD, 2.0 * THIRD, 1.0 / 9.0).unwrap();
        let pair = bound_pair(&ing);
        // Direct scalar evaluation of g* = ((mu1+mu2)/2)(1 - xi/mu1).
        let gamma = ((THIRD + 2.0 * THIRD) / 2.0) * (1.0 - (1.0 / 9.0) / THIRD);
        assert!((gamma - THIRD).abs() < 1e-15);
        let off = 1.0 / (3.0 * 3f64.sqrt());
        let expected = Matrix2::new(THIRD, off, off, 1.0 / 9.0);
        assert!((pair.c_star - expected).amax() < 1e-15);
        assert_eq!(pair.b_star, Matrix2::new(1.0, 0.0, 0.0, 2.0 * THIRD));
        let kiss = pair.b_star / 2.0 - pair.c_star;
        assert!(kiss.determinant().abs() < 1e-14);
    }

    #[test]
    fn c_bound_examples() {
        let ing = Ingredients::from_scalars(THIRD, 2.0 * THIRD, 1.0 / 9.0).unwrap();
        assert_eq!(c_bound(&ing, 0.0).unwrap(), 1.0);
        // Independent evaluation (explicit quadratic formula): 0.5891972930813327.
        let c1 = c_bound(&ing, 1.0).unwrap();
        assert!((c1 - 0.5891972930813327).abs() < 1e-12, "{c1}");
        assert!((c1 - 0.5892).abs() < 1e-4);

        for ing in [Ingredients::from_scalars(0.2, 0.6, 0.2).unwrap(), Ingredients::from_scalars(0.2, 0.2, 0.07).unwrap()] {
            for w in omega_grid(0.0, 2.0, 41) {
                assert!((c_bound(&ing, w).unwrap() - b_bound(&ing, w).unwrap()).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn optimal_omega_examples() {
        let ing = Ingredients::from_scalars(0.2, 0.6, 0.2).unwrap();
        assert_eq!(optimal_omega(&ing).0, 1.0);

        let ing = Ingredients::from_scalars(THIRD, 2.0 * THIRD, 1.0 / 9.0).unwrap();
        let (w, cw) = optimal_omega(&ing);
        // Grid-scan oracle with an independent 2x2 eigenvalue formula.
        let pair = bound_pair(&ing);
        let (mut best_w, mut best_c) = (1.0, f64::INFINITY);
        let steps = 100_000;
        for k in 0..steps {
            let x = 1.0 + k as f64 / steps as f64;
            let val = 1.0 - x * quadratic_lambda_min(pair.b_star - pair.c_star * x);
            if val < best_c {
                best_c = val;
                best_w = x;
            }
        }
        assert!((w - best_w).abs() < 1e-4, "{w} vs {best_w}");
        assert!((w - 1.0391).abs() < 1e-3);
        assert!(cw <= best_c + 1e-12);
        assert!(cw <= c_bound(&ing, 1.0).unwrap() + 1e-12);
    }

    #[test]
    fn bound_curve_flags_violations() {
        let ing = Ingredients::from_scalars(THIRD, 2.0 * THIRD, 1.0 / 9.0).unwrap();
        let grid = omega_grid(0.0, 2.0, 5);
        let curve = BoundCurve::compute(&ing, &grid).unwrap();
        assert!(curve.violations(1e-12).is_empty());
        let curve = curve.with_rho(vec![1.0, 0.2, 0.9, 0.3, 1.0]).unwrap();
        assert_eq!(curve.violations(1e-12), vec![2]);
        assert!(BoundCurve::compute(&ing, &grid).unwrap().with_rho(vec![0.0]).is_err());
    }

    fn valid_scalars() -> impl Strategy<Value = (f64, f64, f64)> {
        (1e-4f64..0.5, 0.0f64..1.0, 0.0f64..1.0).prop_map(|(mu1, s, t)| {
            let mu2 = mu1 + s * (1.0 - mu1);
            let xi = mu1 * mu1 + t * (mu1 - mu1 * mu1);
            (mu1, mu2, xi)
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn c_never_exceeds_b((mu1, mu2, xi) in valid_scalars(), w in 0.0f64..=2.0) {
            let ing = Ingredients::from_scalars(mu1, mu2, xi).unwrap();
            prop_assert!(c_bound(&ing, w).unwrap() <= b_bound(&ing, w).unwrap() + 1e-12);
        }

        #[test]
        fn c_is_convex((mu1, mu2, xi) in valid_scalars(), a in 0.0f64..=2.0, b in 0.0f64..=2.0) {
            let ing = Ingredients::from_scalars(mu1, mu2, xi).unwrap();
            let mid = c_bound(&ing, 0.5 * (a + b)).unwrap();
            let avg = 0.5 * (c_bound(&ing, a).unwrap() + c_bound(&ing, b).unwrap());
            prop_assert!(mid <= avg + 1e-12);
        }

        #[test]
        fn kissing_pair((mu1, mu2, xi) in valid_scalars()) {
            let pair = bound_pair(&Ingredients::from_scalars(mu1, mu2, xi).unwrap());
            let kiss = pair.b_star / 2.0 - pair.c_star;
            let lo = quadratic_lambda_min(kiss);
            prop_assert!(lo.abs() <= 1e-12, "lambda_min {}", lo);
            prop_assert!(kiss.trace() >= -1e-12);
            prop_assert!(pair.c_star.determinant() >= -1e-14);
        }

        #[test]
        fn optimum_is_overrelaxation((mu1, mu2, xi) in valid_scalars()) {
            let ing = Ingredients::from_scalars(mu1, mu2, xi).unwrap();
            let (w, cw) = optimal_omega(&ing);
            prop_assert!((1.0..2.0).contains(&w));
            prop_assert!(cw <= c_bound(&ing, 1.0).unwrap() + 1e-12);
            prop_assert!(cw <= 1.0 - mu1 + 1e-12);
        }
    }
}
