//! Small dense helpers shared by the modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Symmetric eigendecomposition with eigenvalues sorted ascending.
///
/// The input is symmetrized first so rounding asymmetry never leaks into the
/// solver.
pub fn sorted_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let sym = symmetrize(m);
    let eig = SymmetricEigen::new(sym);
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Eigenvalues only, ascending.
pub fn sorted_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut values: Vec<f64> = symmetrize(m).symmetric_eigenvalues().iter().copied().collect();
    values.sort_by(f64::total_cmp);
    values
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    (m - m.transpose()).amax()
}

/// Symmetric square root `V diag(sqrt(l)) V^T` of a positive definite matrix.
pub fn symmetric_sqrt(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let (values, vectors) = sorted_eigen(m);
    if values[0] <= 0.0 {
        return None;
    }
    let root = DMatrix::from_diagonal(&values.map(f64::sqrt));
    Some(&vectors * root * vectors.transpose())
}

/// 2-norm condition number from singular values.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.singular_values();
    let max = sv.max();
    let min = sv.min();
    max / min
}

/// Frobenius inner product.
pub fn frobenius_dot(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.dot(b)
}

/// Smallest eigenvalue of a real symmetric 2x2 matrix `[[a, b], [b, c]]`.
///
/// Evaluated as `X - sqrt(X^2 - Y)` with `X` the half trace and `Y` the
/// determinant, rewritten as `Y / (X + sqrt(X^2 - Y))` when `X > 0` so the
/// subtraction never cancels.
pub fn smaller_eigenvalue_2x2(a: f64, b: f64, c: f64) -> f64 {
    let x = 0.5 * (a + c);
    let y = a * c - b * b;
    // X^2 - Y = ((a - c)/2)^2 + b^2, which is never negative.
    let disc = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    if x > 0.0 {
        y / (x + disc)
    } else {
        x - disc
    }
}
