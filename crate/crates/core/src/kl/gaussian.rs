use nalgebra::{DMatrix, DVector};

use super::Divergence;
use crate::error::{Error, Result};
use crate::linalg::{self, check_psd, check_vector, min_eigenvalue};
use crate::sde::InitialLaw;

/// `N(mean, cov)` with `cov` symmetric PSD.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMeasure {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl GaussianMeasure {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        check_vector(&mean, d, "mean")?;
        check_psd(&cov, d, "covariance", linalg::SYMMETRY_TOL)?;
        Ok(Self { mean, cov })
    }

    pub fn scalar(mean: f64, var: f64) -> Result<Self> {
        Self::new(
            DVector::from_element(1, mean),
            DMatrix::from_element(1, 1, var),
        )
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// `D_KL(ν‖μ)` for Gaussians:
/// `½(tr(C̄⁻¹C) − D + log det C̄ − log det C + |m̄ − m|²_C̄)` with
/// `ν = N(m, C)`, `μ = N(m̄, C̄)`.
///
/// `μ` must have a positive-definite covariance. A singular `ν` puts mass on
/// a Lebesgue-null set and yields [`Divergence::Infinite`]. Identical
/// covariances use the closed form `½|m̄ − m|²_C` directly.
pub fn gaussian_kl(nu: &GaussianMeasure, mu: &GaussianMeasure) -> Result<Divergence> {
    let d = mu.dim();
    if nu.dim() != d {
        return Err(Error::usage(format!(
            "dimension mismatch: {} vs {}",
            nu.dim(),
            d
        )));
    }
    let chol =
        mu.cov.clone().cholesky().ok_or_else(|| {
            Error::usage("reference Gaussian covariance must be positive definite")
        })?;
    let diff = &mu.mean - &nu.mean;
    let mahalanobis = {
        let y = chol
            .l()
            .solve_lower_triangular(&diff)
            .expect("nonsingular factor");
        y.norm_squared()
    };
    if nu.cov == mu.cov {
        return Ok(Divergence::Finite(0.5 * mahalanobis));
    }
    // M = L̄⁻¹ C L̄⁻ᵀ has trace tr(C̄⁻¹C) and log det M = log det C − log det C̄.
    let l = chol.l();
    let half = l
        .solve_lower_triangular(&nu.cov)
        .expect("nonsingular factor");
    let m = l
        .solve_lower_triangular(&half.transpose())
        .expect("nonsingular factor");
    let m = linalg::symmetrize(&m);
    let eig = m.symmetric_eigenvalues();
    let lo = eig.iter().copied().fold(f64::INFINITY, f64::min);
    if lo <= 0.0 || min_eigenvalue(&nu.cov) <= 0.0 {
        return Ok(Divergence::Infinite);
    }
    let trace: f64 = eig.iter().sum();
    let logdet: f64 = eig.iter().map(|x| x.ln()).sum();
    let kl = 0.5 * (trace - d as f64 - logdet + mahalanobis);
    Ok(Divergence::Finite(kl.max(0.0)))
}

/// `D_KL(N(m₀, εC₀)‖μ₀)` for the supported initializations: two Dirac laws
/// (0 at the same atom, `+∞` otherwise), two Gaussians ([`gaussian_kl`] with
/// both covariances scaled by `ε`), or a Dirac/Gaussian mix (`+∞`).
pub fn initial_kl(approx: &InitialLaw, law: &InitialLaw, epsilon: f64) -> Result<Divergence> {
    if approx.dim() != law.dim() {
        return Err(Error::usage("initial laws have different dimensions"));
    }
    match (approx, law) {
        (InitialLaw::Dirac(a), InitialLaw::Dirac(b)) => Ok(if a == b {
            Divergence::ZERO
        } else {
            Divergence::Infinite
        }),
        (InitialLaw::Gaussian { mean: m, cov: c }, InitialLaw::Gaussian { mean: mb, cov: cb }) => {
            if !(epsilon > 0.0) {
                return Err(Error::usage("epsilon must be positive"));
            }
            gaussian_kl(
                &GaussianMeasure::new(m.clone(), c * epsilon)?,
                &GaussianMeasure::new(mb.clone(), cb * epsilon)?,
            )
        }
        _ => Ok(Divergence::Infinite),
    }
}
