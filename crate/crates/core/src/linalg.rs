//! Small numeric helpers: log-domain sums, 2x2 symmetric matrix functions and
//! the bivariate multivariate-gamma function.

use nalgebra::Matrix2;

use crate::error::{Error, Result};

/// Eigenvalue floor applied inside matrix square roots.
pub const EIG_FLOOR: f64 = 1e-12;

/// log(sum(exp(xs))) computed stably; returns -inf for an empty slice.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let s: f64 = xs.iter().map(|x| (x - m).exp()).sum();
    m + s.ln()
}

/// ln Gamma_2(a), the bivariate multivariate gamma function.
pub fn ln_gamma2(a: f64) -> f64 {
    0.5 * std::f64::consts::PI.ln()
        + statrs::function::gamma::ln_gamma(a)
        + statrs::function::gamma::ln_gamma(a - 0.5)
}

/// ln Gamma(a).
pub fn ln_gamma(a: f64) -> f64 {
    statrs::function::gamma::ln_gamma(a)
}

/// Rotation matrix by `theta` radians.
pub fn rotation2(theta: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(c, -s, s, c)
}

/// Force exact symmetry.
pub fn symmetrize2(m: &Matrix2<f64>) -> Matrix2<f64> {
    0.5 * (m + m.transpose())
}

/// Checks symmetry within `tol` and strictly positive eigenvalues.
pub fn is_spd2(m: &Matrix2<f64>, tol: f64) -> bool {
    if (m[(0, 1)] - m[(1, 0)]).abs() > tol {
        return false;
    }
    // symmetric 2x2: positive definite iff trace > 0 and det > 0
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    m[(0, 0)] > 0.0 && det > 0.0
}

/// Eigenvalues of a symmetric 2x2 matrix, ascending.
pub fn sym_eigenvalues2(m: &Matrix2<f64>) -> (f64, f64) {
    let a = m[(0, 0)];
    let b = 0.5 * (m[(0, 1)] + m[(1, 0)]);
    let d = m[(1, 1)];
    let mean = 0.5 * (a + d);
    let r = (0.25 * (a - d) * (a - d) + b * b).sqrt();
    (mean - r, mean + r)
}

/// Spectral map f(M) = U f(L) U^T for a symmetric 2x2 matrix, with the
/// eigenvalues floored at [`EIG_FLOOR`].
fn spectral_map2(m: &Matrix2<f64>, f: impl Fn(f64) -> f64) -> Matrix2<f64> {
    let a = m[(0, 0)];
    let b = 0.5 * (m[(0, 1)] + m[(1, 0)]);
    let d = m[(1, 1)];
    if b.abs() < 1e-300 {
        return Matrix2::new(f(a.max(EIG_FLOOR)), 0.0, 0.0, f(d.max(EIG_FLOOR)));
    }
    let (l1, l2) = sym_eigenvalues2(m);
    // eigenvector for l2: (b, l2 - a) normalized (non-degenerate since b != 0)
    let (vx, vy) = (b, l2 - a);
    let norm = (vx * vx + vy * vy).sqrt();
    let (ux, uy) = (vx / norm, vy / norm);
    let f1 = f(l1.max(EIG_FLOOR));
    let f2 = f(l2.max(EIG_FLOOR));
    // U = [[-uy, ux], [ux, uy]] with columns (v1, v2)
    let u = Matrix2::new(-uy, ux, ux, uy);
    let lam = Matrix2::new(f1, 0.0, 0.0, f2);
    let out = u * lam * u.transpose();
    symmetrize2(&out)
}

/// Symmetric square root of an SPD 2x2 matrix.
pub fn sym_sqrt2(m: &Matrix2<f64>) -> Matrix2<f64> {
    spectral_map2(m, f64::sqrt)
}

/// Symmetric inverse square root of an SPD 2x2 matrix.
pub fn sym_inv_sqrt2(m: &Matrix2<f64>) -> Matrix2<f64> {
    spectral_map2(m, |x| 1.0 / x.sqrt())
}

/// Determinant of a 2x2 matrix.
pub fn det2(m: &Matrix2<f64>) -> f64 {
    m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]
}

/// Inverse of a 2x2 matrix; `context` names the caller for the error message.
pub fn inv2(m: &Matrix2<f64>, context: &'static str) -> Result<Matrix2<f64>> {
    let det = det2(m);
    if det.abs() < 1e-300 || !det.is_finite() {
        return Err(Error::SingularMatrix(context));
    }
    Ok(Matrix2::new(m[(1, 1)], -m[(0, 1)], -m[(1, 0)], m[(0, 0)]) / det)
}

/// ln det of an SPD 2x2 matrix; `context` names the caller for the error message.
pub fn ln_det2(m: &Matrix2<f64>, context: &'static str) -> Result<f64> {
    let det = det2(m);
    if det <= 0.0 || !det.is_finite() {
        return Err(Error::SingularMatrix(context));
    }
    Ok(det.ln())
}
