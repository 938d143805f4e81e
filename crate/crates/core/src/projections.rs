//! Projector ensembles: the set of orthogonal projectors an iteration draws
//! from, their sampling law, and the expected projector.

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg;
use crate::matrices::{Method, NormalizedSystem};

const PROBABILITY_TOL: f64 = 1e-12;
const ORTHONORMAL_TOL: f64 = 1e-12;
/// Relative singular-value cutoff when orthonormalizing a block of rows.
const BLOCK_RANK_TOL: f64 = 1e-10;

/// One orthogonal projector `P = U U^T`, stored through its range basis `U`.
#[derive(Debug, Clone)]
pub struct ProjectorItem {
    basis: DMatrix<f64>,
    probability: f64,
    rows: Option<Vec<usize>>,
}

impl ProjectorItem {
    pub fn new(basis: DMatrix<f64>, probability: f64) -> Self {
        Self { basis, probability, rows: None }
    }

    /// Attaches the system rows this projector was built from, so solvers
    /// know which equations to apply.
    pub fn with_rows(mut self, rows: Vec<usize>) -> Self {
        self.rows = Some(rows);
        self
    }

    /// Orthonormal columns spanning the range (n x rank).
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn probability(&self) -> f64 {
        self.probability
    }

    pub fn rows(&self) -> Option<&[usize]> {
        self.rows.as_deref()
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    /// Dense `P = U U^T`.
    pub fn projector(&self) -> DMatrix<f64> {
        &self.basis * self.basis.transpose()
    }

    /// `u^T P u = ||U^T u||^2`.
    pub fn quadratic_form(&self, u: &DVector<f64>) -> f64 {
        (self.basis.transpose() * u).norm_squared()
    }
}

/// A finite set of orthogonal projectors with sampling probabilities.
#[derive(Debug, Clone)]
pub struct ProjectorEnsemble {
    n: usize,
    items: Vec<ProjectorItem>,
    method: Option<Method>,
}

impl ProjectorEnsemble {
    pub fn new(n: usize, items: Vec<ProjectorItem>) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::InvalidEnsemble("no projectors".into()));
        }
        let mut total = 0.0;
        for (i, item) in items.iter().enumerate() {
            if item.basis.nrows() != n {
                return Err(Error::InvalidEnsemble(format!("projector {i} lives in R^{}, expected R^{n}", item.basis.nrows())));
            }
            if !(item.probability >= 0.0) {
                return Err(Error::InvalidEnsemble(format!("projector {i} has probability {}", item.probability)));
            }
            let r = item.rank();
            let gram = item.basis.transpose() * &item.basis;
            let defect = (gram - DMatrix::identity(r, r)).amax();
            if defect > ORTHONORMAL_TOL {
                return Err(Error::InvalidEnsemble(format!("basis {i} not orthonormal (defect {defect:e})")));
            }
            total += item.probability;
        }
        if (total - 1.0).abs() > PROBABILITY_TOL {
            return Err(Error::InvalidEnsemble(format!("probabilities sum to {total}")));
        }
        Ok(Self { n, items, method: None })
    }

    /// Rank-1 projectors onto the given (nonzero) vectors, uniform law.
    pub fn from_vectors(vectors: &[DVector<f64>]) -> Result<Self> {
        let n = vectors.first().map(|v| v.len()).unwrap_or(0);
        let p = 1.0 / vectors.len() as f64;
        let items = vectors
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let norm = v.norm();
                if norm == 0.0 {
                    return Err(Error::ZeroRow { row: i });
                }
                Ok(ProjectorItem::new(DMatrix::from_column_slice(v.len(), 1, (v / norm).as_slice()), p))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(n, items)
    }

    /// Replaces the sampling law; `probs` must match the item count.
    pub fn with_probabilities(mut self, probs: &[f64]) -> Result<Self> {
        if probs.len() != self.items.len() {
            return Err(Error::Dimension(format!("{} probabilities for {} projectors", probs.len(), self.items.len())));
        }
        for (item, &p) in self.items.iter_mut().zip(probs) {
            item.probability = p;
        }
        let method = self.method;
        let mut ens = Self::new(self.n, self.items)?;
        ens.method = method;
        Ok(ens)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[ProjectorItem] {
        &self.items
    }

    /// Method of the system the ensemble was derived from, if any.
    pub fn method(&self) -> Option<Method> {
        self.method
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.items.iter().map(|it| it.probability).collect()
    }

    /// Reorders the items; used to check permutation invariance.
    pub fn permuted(&self, order: &[usize]) -> Self {
        Self { n: self.n, items: order.iter().map(|&i| self.items[i].clone()).collect(), method: self.method }
    }

    pub fn sampler(&self) -> ProjectorSampler {
        ProjectorSampler::new(self)
    }
}

/// Draws item indices according to the ensemble's probabilities.
#[derive(Debug, Clone)]
pub enum ProjectorSampler {
    Uniform(usize),
    Weighted(WeightedIndex<f64>),
}

impl ProjectorSampler {
    pub fn new(ens: &ProjectorEnsemble) -> Self {
        let probs = ens.probabilities();
        let first = probs[0];
        if probs.iter().all(|&p| p == first) {
            ProjectorSampler::Uniform(probs.len())
        } else {
            // Validated ensembles have nonnegative weights summing to one.
            ProjectorSampler::Weighted(WeightedIndex::new(&probs).expect("validated probabilities"))
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        match self {
            ProjectorSampler::Uniform(k) => rng.random_range(0..*k),
            ProjectorSampler::Weighted(w) => w.sample(rng),
        }
    }
}

/// One draw from the ensemble's law (0-based index).
pub fn sample<R: Rng + ?Sized>(ens: &ProjectorEnsemble, rng: &mut R) -> usize {
    ens.sampler().sample(rng)
}

/// Rows whose span each projector covers: the normalized rows for Kaczmarz,
/// the rows of the symmetric square root of `a_norm` for Gauss-Seidel.
fn projector_rows(ns: &NormalizedSystem) -> Result<DMatrix<f64>> {
    match ns.method {
        Method::Kaczmarz => Ok(ns.a_norm.clone()),
        Method::GaussSeidel => linalg::symmetric_sqrt(&ns.a_norm).ok_or_else(|| {
            let smallest = linalg::sorted_eigenvalues(&ns.a_norm)[0];
            Error::NotPositiveDefinite(smallest)
        }),
    }
}

/// Rank-1 ensemble with one projector per equation, uniform law.
pub fn ensemble_from_system(ns: &NormalizedSystem) -> Result<ProjectorEnsemble> {
    let rows = projector_rows(ns)?;
    let (m, n) = rows.shape();
    let p = 1.0 / m as f64;
    let items = (0..m)
        .map(|i| {
            let r = rows.row(i).transpose();
            let norm = r.norm();
            if norm == 0.0 {
                return Err(Error::ZeroRow { row: i });
            }
            Ok(ProjectorItem::new(DMatrix::from_column_slice(n, 1, (r / norm).as_slice()), p).with_rows(vec![i]))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut ens = ProjectorEnsemble::new(n, items)?;
    ens.method = Some(ns.method);
    Ok(ens)
}

/// Orthonormal basis of the column span of `m`, dropping directions whose
/// singular value falls below `BLOCK_RANK_TOL * sigma_max`.
fn range_basis(m: DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let svd = m.svd(true, false);
    let u = svd.u.expect("requested U");
    let smax = svd.singular_values.max();
    let keep: Vec<usize> = (0..svd.singular_values.len()).filter(|&k| svd.singular_values[k] > BLOCK_RANK_TOL * smax).collect();
    let mut basis = DMatrix::zeros(n, keep.len());
    for (dst, &k) in keep.iter().enumerate() {
        basis.set_column(dst, &u.column(k));
    }
    basis
}

/// One projector per block of rows, onto the span of the block's rows,
/// uniform law.
pub fn ensemble_blocks(ns: &NormalizedSystem, blocks: &[Vec<usize>]) -> Result<ProjectorEnsemble> {
    if blocks.is_empty() {
        return Err(Error::InvalidEnsemble("no blocks".into()));
    }
    let rows = projector_rows(ns)?;
    let (m, n) = rows.shape();
    let p = 1.0 / blocks.len() as f64;
    let mut items = Vec::with_capacity(blocks.len());
    for (b, block) in blocks.iter().enumerate() {
        if block.is_empty() {
            return Err(Error::InvalidEnsemble(format!("block {b} is empty")));
        }
        if let Some(&bad) = block.iter().find(|&&i| i >= m) {
            return Err(Error::InvalidEnsemble(format!("block {b} references row {bad} of {m}")));
        }
        let cols = DMatrix::from_fn(n, block.len(), |i, k| rows[(block[k], i)]);
        let basis = if block.len() == 1 {
            let norm = cols.norm();
            if norm == 0.0 {
                return Err(Error::ZeroRow { row: block[0] });
            }
            cols / norm
        } else {
            range_basis(cols)
        };
        items.push(ProjectorItem::new(basis, p).with_rows(block.clone()));
    }
    let mut ens = ProjectorEnsemble::new(n, items)?;
    ens.method = Some(ns.method);
    Ok(ens)
}

/// Contiguous blocks of `size` rows (the last one may be shorter).
pub fn contiguous_blocks(rows: usize, size: usize) -> Vec<Vec<usize>> {
    let size = size.max(1);
    (0..rows).collect::<Vec<_>>().chunks(size).map(|c| c.to_vec()).collect()
}

/// `E[P] = sum_i p_i P_i`; symmetric with spectrum in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectedProjector(pub DMatrix<f64>);

impl ExpectedProjector {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }
}

pub fn expected_projector(ens: &ProjectorEnsemble) -> ExpectedProjector {
    let n = ens.n();
    let mut ep = DMatrix::zeros(n, n);
    for item in ens.items() {
        ep.gemm(item.probability, &item.basis, &item.basis.transpose(), 1.0);
    }
    ExpectedProjector(linalg::symmetrize(&ep))
}

/// Closed form of the expected projector under uniform row sampling:
/// `(1/n) A` for unit-diagonal Gauss-Seidel, `(1/m) A^T A` for row-normalized
/// Kaczmarz.
pub fn closed_form_expected_projector(ns: &NormalizedSystem) -> DMatrix<f64> {
    match ns.method {
        Method::GaussSeidel => &ns.a_norm / ns.ncols() as f64,
        Method::Kaczmarz => ns.a_norm.transpose() * &ns.a_norm / ns.nrows() as f64,
    }
}
