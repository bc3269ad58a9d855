//! Small dense linear-algebra helpers shared by the estimators.

use nalgebra::DVector;
use num_complex::Complex64;
#[cfg(not(feature = "std"))]
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::{CMatrix, Error, Result};

/// Draws one circularly-symmetric complex Gaussian sample `CN(0, variance)`.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(s * re, s * im)
}

/// Matrix with i.i.d. `CN(0, variance)` entries.
pub fn complex_normal_matrix<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    variance: f64,
    rng: &mut R,
) -> CMatrix {
    // Column-major fill so the draw order matches the storage order.
    let mut m = CMatrix::zeros(rows, cols);
    for c in 0..cols {
        for r in 0..rows {
            m[(r, c)] = complex_normal(rng, variance);
        }
    }
    m
}

/// Euclidean norms of the columns of `m`.
pub fn column_norms(m: &CMatrix) -> DVector<f64> {
    DVector::from_iterator(m.ncols(), m.column_iter().map(|c| c.norm()))
}

/// Moore-Penrose pseudo-inverse through the SVD, together with the numerical
/// rank (singular values below `rtol * s_max` are treated as zero).
pub fn pseudo_inverse(m: &CMatrix, rtol: f64) -> Result<(CMatrix, usize)> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok((CMatrix::zeros(m.ncols(), m.nrows()), 0));
    }
    let svd = m.clone().svd(true, true);
    let s_max = svd.singular_values.max();
    let cutoff = rtol * s_max;
    let rank = svd.singular_values.iter().filter(|&&s| s > cutoff).count();
    let pinv = svd
        .pseudo_inverse(cutoff.max(f64::MIN_POSITIVE))
        .map_err(|_| Error::Singular("pseudo-inverse"))?;
    Ok((pinv, rank))
}

/// Solves `a * x = b` for square `a` by LU with partial pivoting.
pub fn solve(a: CMatrix, b: &CMatrix) -> Result<CMatrix> {
    a.lu().solve(b).ok_or(Error::Singular("linear system"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    #[test]
    fn pseudo_inverse_of_wide_matrix_is_right_inverse() {
        let mut rng = seed::rng(3);
        let a = complex_normal_matrix(2, 5, 1.0, &mut rng);
        let (p, rank) = pseudo_inverse(&a, 1e-12).unwrap();
        assert_eq!(rank, 2);
        let eye = &a * &p;
        for r in 0..2 {
            for c in 0..2 {
                let want = if r == c { 1.0 } else { 0.0 };
                assert!((eye[(r, c)] - Complex64::new(want, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn complex_normal_has_requested_power() {
        let mut rng = seed::rng(11);
        let n = 200_000;
        let p: f64 = (0..n).map(|_| complex_normal(&mut rng, 2.5).norm_sqr()).sum::<f64>() / n as f64;
        assert!((p - 2.5).abs() < 0.03, "{p}");
    }
}
