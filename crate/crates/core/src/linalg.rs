//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::DMatrix;

pub type Matrix = DMatrix<f64>;

/// Singular values in decreasing order.
pub fn singular_values(m: &Matrix) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Distance of a `rows × cols` operator from losing full row rank: its
/// `rows`-th singular value, or 0 when `cols < rows`.
pub fn surjectivity_margin(m: &Matrix) -> f64 {
    let rows = m.nrows();
    if rows == 0 {
        return f64::INFINITY;
    }
    if m.ncols() < rows {
        return 0.0;
    }
    singular_values(m)[rows - 1]
}

/// Smallest singular value of a square matrix (0 for a non-square one).
pub fn isomorphism_margin(m: &Matrix) -> f64 {
    if m.nrows() != m.ncols() {
        return 0.0;
    }
    singular_values(m).last().copied().unwrap_or(f64::INFINITY)
}

/// Central-difference Jacobian of `f` at `x`.
pub fn fd_jacobian(mut f: impl FnMut(&[f64]) -> Vec<f64>, x: &[f64], step: f64) -> Matrix {
    let f0 = f(x);
    let mut jac = Matrix::zeros(f0.len(), x.len());
    let mut xp = x.to_vec();
    for j in 0..x.len() {
        let h = step * x[j].abs().max(1.0);
        xp[j] = x[j] + h;
        let fp = f(&xp);
        xp[j] = x[j] - h;
        let fm = f(&xp);
        xp[j] = x[j];
        for i in 0..f0.len() {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    jac
}

/// Relative Frobenius discrepancy between an analytic and a reference
/// Jacobian, with an absolute floor of 1 on the scale.
pub fn relative_discrepancy(analytic: &Matrix, reference: &Matrix) -> f64 {
    let scale = reference.norm().max(1.0);
    (analytic - reference).norm() / scale
}

/// Solves `a x = b` for square `a` by LU, `None` if singular.
pub fn solve(a: &Matrix, b: &[f64]) -> Option<Vec<f64>> {
    let rhs = nalgebra::DVector::from_column_slice(b);
    a.clone().lu().solve(&rhs).map(|v| v.iter().copied().collect())
}

pub fn determinant(a: &Matrix) -> f64 {
    a.clone().determinant()
}

pub fn mat_vec(a: &Matrix, x: &[f64]) -> Vec<f64> {
    (0..a.nrows()).map(|i| (0..a.ncols()).map(|j| a[(i, j)] * x[j]).sum()).collect()
}

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
