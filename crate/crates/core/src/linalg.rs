//! Small dense helpers for Hermitian matrices.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Relative eigenvalue floor below which a "PSD" matrix is rejected.
const PSD_TOLERANCE: f64 = 1e-9;

/// Draws a circularly symmetric complex Gaussian with unit variance.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Vector of i.i.d. unit-variance circular complex Gaussians.
pub fn complex_normal_vector<R: Rng + ?Sized>(rng: &mut R, len: usize) -> CVector {
    CVector::from_fn(len, |_, _| complex_normal(rng))
}

/// `scale * I` as a complex matrix.
pub fn scaled_identity(dim: usize, scale: f64) -> CMatrix {
    CMatrix::from_diagonal_element(dim, dim, Complex64::new(scale, 0.0))
}

/// tr(A B) without forming the product.
pub fn trace_product(a: &CMatrix, b: &CMatrix) -> Complex64 {
    let n = a.nrows();
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

/// Real part of the trace.
pub fn real_trace(a: &CMatrix) -> f64 {
    a.diagonal().iter().map(|z| z.re).sum()
}

/// Largest entrywise |A - A^H| relative to the largest entry of A.
pub fn hermitian_asymmetry(a: &CMatrix) -> f64 {
    let scale = a.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return 0.0;
    }
    let diff = a - a.adjoint();
    diff.iter().map(|z| z.norm()).fold(0.0, f64::max) / scale
}

/// Averages A with its adjoint.
pub fn hermitian_part(a: &CMatrix) -> CMatrix {
    (a + a.adjoint()) * Complex64::new(0.5, 0.0)
}

/// Checks that `a` is Hermitian with eigenvalues >= -tol * max|eig|.
pub fn is_hermitian_psd(a: &CMatrix, tol: f64) -> bool {
    if hermitian_asymmetry(a) > tol {
        return false;
    }
    let eig = hermitian_part(a).symmetric_eigen();
    let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    eig.eigenvalues
        .iter()
        .all(|&v| v >= -tol * top.max(f64::MIN_POSITIVE))
}

/// Hermitian square root of a PSD matrix, negative eigenvalues clipped to 0.
pub fn psd_sqrt(a: &CMatrix) -> Result<CMatrix> {
    let eig = hermitian_part(a).symmetric_eigen();
    let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    if let Some(&worst) = eig
        .eigenvalues
        .iter()
        .find(|&&v| v < -PSD_TOLERANCE * top.max(f64::MIN_POSITIVE))
    {
        return Err(Error::Numerical(format!(
            "covariance is not PSD: eigenvalue {worst:e} against largest {top:e}"
        )));
    }
    let roots = eig
        .eigenvalues
        .map(|v| Complex64::new(v.max(0.0).sqrt(), 0.0));
    let v = &eig.eigenvectors;
    Ok(v * CMatrix::from_diagonal(&roots) * v.adjoint())
}

/// Factor `S` with `S S^T = R` for a real symmetric PSD correlation matrix.
///
/// Uses the eigendecomposition so that rank-deficient matrices (coincident
/// points) are handled; slightly negative eigenvalues are clipped.
pub fn real_psd_factor(r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = r.nrows();
    let sym = (r + r.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let min = eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if min < -PSD_TOLERANCE * top.max(f64::MIN_POSITIVE) * n as f64 {
        return Err(Error::Numerical(format!(
            "correlation matrix of size {n} is not PSD: min eigenvalue {min:e}, max {top:e}"
        )));
    }
    let mut s = eig.eigenvectors;
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        let root = lambda.max(0.0).sqrt();
        s.column_mut(j).scale_mut(root);
    }
    Ok(s)
}

/// Inverse of a Hermitian positive definite matrix.
pub fn hermitian_inverse(a: &CMatrix) -> Result<CMatrix> {
    if a.nrows() == 1 {
        let v = a[(0, 0)].re;
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::Singular(format!("scalar {v:e} is not invertible")));
        }
        return Ok(CMatrix::from_element(1, 1, Complex64::new(1.0 / v, 0.0)));
    }
    hermitian_part(a)
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| {
            Error::Singular(format!(
                "{}x{} matrix is not positive definite",
                a.nrows(),
                a.ncols()
            ))
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_psd(rng: &mut ChaCha8Rng, n: usize) -> CMatrix {
        let g = CMatrix::from_fn(n, n, |_, _| complex_normal(rng));
        &g * g.adjoint()
    }

    #[test]
    fn sqrt_squares_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_psd(&mut rng, 4);
        let s = psd_sqrt(&a).unwrap();
        let back = &s * &s;
        assert!((back - &a).norm() < 1e-10 * a.norm());
        assert!(hermitian_asymmetry(&s) < 1e-12);
    }

    #[test]
    fn sqrt_rejects_indefinite() {
        let mut a = scaled_identity(2, 1.0);
        a[(1, 1)] = Complex64::new(-1.0, 0.0);
        assert!(matches!(psd_sqrt(&a), Err(Error::Numerical(_))));
    }

    #[test]
    fn trace_product_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_psd(&mut rng, 3);
        let b = CMatrix::from_fn(3, 3, |_, _| complex_normal(&mut rng));
        let dense = (&a * &b).trace();
        assert!((trace_product(&a, &b) - dense).norm() < 1e-12);
    }

    #[test]
    fn inverse_of_pd() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = random_psd(&mut rng, 3) + scaled_identity(3, 0.1);
        let inv = hermitian_inverse(&a).unwrap();
        let eye = &a * inv;
        assert!((eye - scaled_identity(3, 1.0)).norm() < 1e-9);
        assert!(hermitian_inverse(&CMatrix::zeros(1, 1)).is_err());
        assert!(hermitian_inverse(&CMatrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn real_factor_handles_rank_deficiency() {
        let r = DMatrix::from_element(3, 3, 1.0);
        let s = real_psd_factor(&r).unwrap();
        assert!((&s * s.transpose() - &r).norm() < 1e-12);
    }
}
