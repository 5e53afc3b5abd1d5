//! Dense linear-algebra helpers shared by the reservoir, training and
//! diagnostics modules.

use nalgebra::linalg::Schur;
use nalgebra::{ComplexField, DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Relative singular-value cut-off used for numerical rank.
pub const RANK_TOL: f64 = 1e-10;

/// Eigenvalues of a real square matrix (real Schur form).
///
/// The unshifted QR sweep can stall on exactly structured inputs such as
/// nilpotent shifts, so a failed attempt is retried on fixed orthogonal
/// similarity transforms, which leave the spectrum unchanged.
pub fn eigenvalues(m: &DMatrix<f64>) -> Vec<Complex64> {
    let n = m.nrows();
    if n == 0 {
        return Vec::new();
    }
    const MAX_SWEEPS: usize = 100_000;
    if let Some(s) = Schur::try_new(m.clone(), f64::EPSILON, MAX_SWEEPS) {
        return s.complex_eigenvalues().iter().copied().collect();
    }
    for attempt in 1..=4u64 {
        let q = DMatrix::from_fn(n, n, |i, j| ((i * 7 + j * 13 + attempt as usize * 31) as f64 * 0.618).sin()).qr().q();
        let rotated = q.transpose() * m * &q;
        if let Some(s) = Schur::try_new(rotated, f64::EPSILON, MAX_SWEEPS) {
            return s.complex_eigenvalues().iter().copied().collect();
        }
    }
    panic!("Schur iteration failed to converge on a {n}x{n} matrix");
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    eigenvalues(m).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Operator 2-norm (largest singular value).
pub fn norm2(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

/// Rank from singular values above `rel_tol · σ_max`.
pub fn numerical_rank<T: ComplexField<RealField = f64>>(m: &DMatrix<T>, rel_tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.max();
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * smax).count()
}

/// Solves `a x = b` by LU; errors when `a` is singular.
pub fn solve(a: &DMatrix<f64>, b: &DVector<f64>, what: &str) -> Result<DVector<f64>> {
    let x = a
        .clone()
        .lu()
        .solve(b)
        .ok_or_else(|| Error::Singular(what.to_string()))?;
    if x.iter().all(|v| v.is_finite()) {
        Ok(x)
    } else {
        Err(Error::Singular(what.to_string()))
    }
}

/// Matrix exponential by scaling and squaring of the Taylor series.
///
/// The argument is scaled by `2^-s` until its 1-norm is at most 1/2, the
/// series is summed until the next term is below `tol` relative to the
/// partial sum, and the result is squared `s` times.
pub fn expm(q: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let n = q.nrows();
    assert_eq!(n, q.ncols(), "expm needs a square matrix");
    let norm1 = (0..n).map(|j| q.column(j).abs().sum()).fold(0.0, f64::max);
    let mut s = 0u32;
    while norm1 / 2f64.powi(s as i32) > 0.5 {
        s += 1;
    }
    let scaled = q / 2f64.powi(s as i32);
    let mut sum = DMatrix::<f64>::identity(n, n);
    let mut term = DMatrix::<f64>::identity(n, n);
    for k in 1..200 {
        term = &term * &scaled / k as f64;
        sum += &term;
        if term.norm() <= tol * sum.norm() {
            break;
        }
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    sum
}

/// `rows × cols` matrix from nested rows.
pub fn from_rows(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let r = rows.len();
    let c = rows.first().map_or(0, |row| row.len());
    DMatrix::from_fn(r, c, |i, j| rows[i][j])
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn eigenvalues_of_scaled_shift() {
        for n in [3, 10, 50] {
            let m = DMatrix::from_fn(n, n, |i, j| if i == j + 1 { 0.99 } else { 0.0 });
            assert!(spectral_radius(&m) < 1e-2, "n = {n}");
        }
    }

    #[test]
    fn expm_of_zero_is_identity() {
        let e = expm(&DMatrix::zeros(3, 3), 1e-12);
        assert!((e - DMatrix::<f64>::identity(3, 3)).norm() < 1e-15);
    }

    #[test]
    fn expm_rotation_generator() {
        let t = 2.0;
        let q = dmatrix![0.0, -t; t, 0.0];
        let e = expm(&q, 1e-14);
        let want = dmatrix![t.cos(), -t.sin(); t.sin(), t.cos()];
        assert!((e - want).norm() < 1e-12);
    }

    #[test]
    fn spectral_radius_of_rotation_pair() {
        // Dominant complex pair: power iteration would oscillate here.
        let m = dmatrix![0.0, -2.0, 0.0; 2.0, 0.0, 0.0; 0.0, 0.0, 1.0];
        assert!((spectral_radius(&m) - 2.0).abs() < 1e-12);
        assert!((norm2(&m) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rank_of_outer_product() {
        let u = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let m = &u * u.transpose();
        assert_eq!(numerical_rank(&m, RANK_TOL), 1);
        assert_eq!(numerical_rank(&DMatrix::<f64>::identity(4, 4), RANK_TOL), 4);
    }
}
