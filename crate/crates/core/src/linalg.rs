//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Tolerance on `‖C − Cᵀ‖_max` relative to `1 + ‖C‖_max`.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Eigenvalues at or above `-PSD_SAMPLING_TOL` are clipped to zero when a
/// covariance is factored for sampling.
pub const PSD_SAMPLING_TOL: f64 = 1e-10;

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

pub fn is_symmetric(m: &DMatrix<f64>) -> bool {
    if !m.is_square() {
        return false;
    }
    let asym = max_abs(&(m - m.transpose()));
    asym <= SYMMETRY_TOL * (1.0 + max_abs(m))
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(symmetrize(m))
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

pub(crate) fn check_square(m: &DMatrix<f64>, dim: usize, name: &str) -> Result<()> {
    if m.nrows() != dim || m.ncols() != dim {
        return Err(Error::usage(format!(
            "{name} must be {dim}x{dim}, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::usage(format!("{name} has non-finite entries")));
    }
    Ok(())
}

pub(crate) fn check_vector(v: &DVector<f64>, dim: usize, name: &str) -> Result<()> {
    if v.len() != dim {
        return Err(Error::usage(format!(
            "{name} must have length {dim}, got {}",
            v.len()
        )));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::usage(format!("{name} has non-finite entries")));
    }
    Ok(())
}

/// Validates a symmetric positive semi-definite matrix (eigenvalues ≥ `-tol`).
pub(crate) fn check_psd(m: &DMatrix<f64>, dim: usize, name: &str, tol: f64) -> Result<()> {
    check_square(m, dim, name)?;
    if !is_symmetric(m) {
        return Err(Error::usage(format!("{name} is not symmetric")));
    }
    let lo = min_eigenvalue(m);
    if lo < -tol {
        return Err(Error::usage(format!(
            "{name} is indefinite (min eigenvalue {lo:e})"
        )));
    }
    Ok(())
}

/// Lower Cholesky factor of a symmetric positive-definite matrix.
pub(crate) fn cholesky_lower(m: &DMatrix<f64>, dim: usize, name: &str) -> Result<DMatrix<f64>> {
    check_square(m, dim, name)?;
    if !is_symmetric(m) {
        return Err(Error::usage(format!("{name} is not symmetric")));
    }
    m.clone()
        .cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::usage(format!("{name} is not positive definite")))
}

/// A factor `S` with `S Sᵀ = C` for a possibly singular PSD matrix, built from
/// the eigen-decomposition with small negative eigenvalues clipped to zero.
pub fn psd_factor(c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let dim = c.nrows();
    check_psd(c, dim, "covariance", PSD_SAMPLING_TOL)?;
    let eig = SymmetricEigen::new(symmetrize(c));
    let mut s = eig.eigenvectors;
    for (j, lambda) in eig.eigenvalues.iter().enumerate() {
        let scale = lambda.max(0.0).sqrt();
        s.column_mut(j).scale_mut(scale);
    }
    Ok(s)
}

/// Row-major copy of a square matrix, for hot loops working on slices.
pub(crate) fn to_row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let (r, c) = m.shape();
    let mut out = Vec::with_capacity(r * c);
    for i in 0..r {
        for j in 0..c {
            out.push(m[(i, j)]);
        }
    }
    out
}

/// `out = a · x` for a row-major `dim × dim` matrix.
#[inline]
pub(crate) fn matvec(a: &[f64], x: &[f64], out: &mut [f64]) {
    let dim = x.len();
    for (i, o) in out.iter_mut().enumerate() {
        let row = &a[i * dim..(i + 1) * dim];
        *o = row.iter().zip(x).map(|(r, v)| r * v).sum();
    }
}

/// Weighted norm `|x|²_Σ = xᵀ Σ⁻¹ x`, evaluated through the Cholesky factor
/// of `Σ` by forward substitution.
#[derive(Debug, Clone)]
pub struct SigmaNorm {
    dim: usize,
    lower: Vec<f64>,
}

impl SigmaNorm {
    pub fn new(sigma: &DMatrix<f64>) -> Result<Self> {
        let dim = sigma.nrows();
        let l = cholesky_lower(sigma, dim, "Sigma")?;
        Ok(Self::from_lower(&l))
    }

    pub(crate) fn from_lower(l: &DMatrix<f64>) -> Self {
        Self {
            dim: l.nrows(),
            lower: to_row_major(l),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `|x|²_Σ`; `scratch` must have length `dim`.
    #[inline]
    pub fn norm_sq_with(&self, x: &[f64], scratch: &mut [f64]) -> f64 {
        let d = self.dim;
        let mut acc = 0.0;
        for i in 0..d {
            let row = &self.lower[i * d..i * d + i];
            let partial: f64 = row.iter().zip(&scratch[..i]).map(|(l, y)| l * y).sum();
            let y = (x[i] - partial) / self.lower[i * d + i];
            scratch[i] = y;
            acc += y * y;
        }
        acc
    }

    pub fn norm_sq(&self, x: &[f64]) -> f64 {
        let mut scratch = vec![0.0; self.dim];
        self.norm_sq_with(x, &mut scratch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigma_norm_matches_explicit_inverse() {
        let sigma = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let x = [0.3, -1.2];
        let inv = sigma.clone().try_inverse().unwrap();
        let xv = DVector::from_column_slice(&x);
        let expected = (xv.transpose() * inv * &xv)[(0, 0)];
        let got = SigmaNorm::new(&sigma).unwrap().norm_sq(&x);
        assert!((got - expected).abs() < 1e-14);
    }

    #[test]
    fn psd_factor_reconstructs_singular_matrix() {
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let s = psd_factor(&c).unwrap();
        assert!(max_abs(&(&s * s.transpose() - &c)) < 1e-15);
    }

    #[test]
    fn indefinite_rejected() {
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1e-3]);
        assert!(matches!(psd_factor(&c), Err(Error::Usage(_))));
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.0, 1.0]);
        assert!(matches!(psd_factor(&asym), Err(Error::Usage(_))));
    }

    #[test]
    fn non_pd_sigma_rejected() {
        let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(SigmaNorm::new(&sigma).is_err());
    }
}
