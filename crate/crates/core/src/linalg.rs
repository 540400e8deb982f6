//! Small dense complex linear algebra helpers on top of `nalgebra`.
//!
//! Everything in this crate works on tiny matrices (2x2 to a handful of
//! elements), so the helpers favour clarity over blocking or reuse of
//! workspace buffers.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

/// Relative condition-number cap applied before every network solve.
pub const DEFAULT_CONDITION_CAP: f64 = 1e12;

/// Clipping threshold for slightly negative eigenvalues of PSD matrices.
pub const PSD_TOLERANCE: f64 = 1e-10;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Matrix 1-norm (maximum absolute column sum).
pub fn norm_1(a: &CMat) -> f64 {
    a.column_iter()
        .map(|col| col.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Inverse of `a` together with its 1-norm condition number.
///
/// Fails with [`Error::SingularNetwork`] when LU breaks down or the
/// condition number exceeds `cap`.
pub fn inverse_checked(a: &CMat, cap: f64) -> Result<CMat> {
    if !a.is_square() || a.nrows() == 0 {
        return Err(Error::InvalidInput(format!(
            "expected a non-empty square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::SingularNetwork {
            condition: f64::INFINITY,
        });
    }
    let inv = a.clone().try_inverse().ok_or(Error::SingularNetwork {
        condition: f64::INFINITY,
    })?;
    let condition = norm_1(a) * norm_1(&inv);
    if !condition.is_finite() || condition > cap {
        return Err(Error::SingularNetwork { condition });
    }
    Ok(inv)
}

/// Solves `a x = b` after a condition-number check.
pub fn solve_checked(a: &CMat, b: &CVec, cap: f64) -> Result<CVec> {
    if a.nrows() != b.len() {
        return Err(Error::InvalidInput(format!(
            "dimension mismatch: {}x{} system with rhs of length {}",
            a.nrows(),
            a.ncols(),
            b.len()
        )));
    }
    let inv = inverse_checked(a, cap)?;
    // Refine through LU so the result is the linear-solve answer, not inv * b.
    let x = a.clone().lu().solve(b).unwrap_or_else(|| &inv * b);
    Ok(x)
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
pub fn hermitian_eigen(a: &CMat) -> (Vec<f64>, CMat) {
    let n = a.nrows();
    // Symmetrize to kill round-off asymmetry before the Hermitian solver.
    let sym = (a + a.adjoint()).scale(0.5);
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMat::from_fn(n, n, |r, col| eig.eigenvectors[(r, order[col])]);
    (values, vectors)
}

/// Hermitian PSD square root via eigen-decomposition.
///
/// Eigenvalues in `[-PSD_TOLERANCE, 0)` are clipped to zero; anything more
/// negative is reported as [`Error::NotPsd`].
pub fn hermitian_sqrt(a: &CMat) -> Result<CMat> {
    let (values, vectors) = hermitian_eigen(a);
    let min = values.first().copied().unwrap_or(0.0);
    if min < -PSD_TOLERANCE {
        return Err(Error::NotPsd { min_eigenvalue: min });
    }
    let n = a.nrows();
    let mut root = CMat::zeros(n, n);
    for (k, &lambda) in values.iter().enumerate() {
        let s = lambda.max(0.0).sqrt();
        let v = vectors.column(k);
        root += (v * v.adjoint()).scale(s);
    }
    Ok(root)
}

/// Unit-norm copy of `v`; `None` for a (numerically) zero vector.
pub fn normalized(v: &CVec) -> Option<CVec> {
    let n = v.norm();
    if n > 0.0 && n.is_finite() {
        Some(v.unscale(n))
    } else {
        None
    }
}

/// Rotates `v` so that its first non-negligible entry is real and positive.
pub fn fix_phase(v: &CVec) -> CVec {
    let scale = v.norm();
    match v.iter().find(|z| z.norm() > 1e-12 * scale) {
        Some(lead) => {
            let rot = lead.conj() / lead.norm();
            v.map(|z| z * rot)
        }
        None => v.clone(),
    }
}

/// Normalized collinearity measure of two 2-vectors: `|det [a b]| / (|a| |b|)`.
pub fn normalized_det2(a: &CVec, b: &CVec) -> f64 {
    let det = a[0] * b[1] - a[1] * b[0];
    let denom = a.norm() * b.norm();
    if denom == 0.0 {
        0.0
    } else {
        det.norm() / denom
    }
}

/// Largest singular value of `a` and the matching right singular vector.
pub fn dominant_right_singular(a: &CMat) -> (f64, CVec) {
    let gram = a.adjoint() * a;
    let (values, vectors) = hermitian_eigen(&gram);
    let last = values.len() - 1;
    let v = fix_phase(&vectors.column(last).into_owned());
    (values[last].max(0.0).sqrt(), v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sqrt_squares_back() {
        let r = CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.5, 0.2), c(0.5, -0.2), c(1.0, 0.0)]);
        let s = hermitian_sqrt(&r).unwrap();
        assert!((&s * &s - &r).norm() < 1e-12);
        assert!((&s - s.adjoint()).norm() < 1e-14);
    }

    #[test]
    fn sqrt_rejects_indefinite() {
        let r = CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(2.0, 0.0), c(2.0, 0.0), c(1.0, 0.0)]);
        assert!(matches!(hermitian_sqrt(&r), Err(Error::NotPsd { .. })));
    }

    #[test]
    fn singular_is_rejected() {
        let a = CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(2.0, 0.0), c(2.0, 0.0), c(4.0, 0.0)]);
        assert!(matches!(
            inverse_checked(&a, DEFAULT_CONDITION_CAP),
            Err(Error::SingularNetwork { .. })
        ));
    }

    #[test]
    fn phase_convention() {
        let v = CVec::from_vec(vec![c(0.0, 0.0), c(0.0, -2.0)]);
        let w = fix_phase(&v);
        assert!((w[1] - c(2.0, 0.0)).norm() < 1e-15);
    }
}
