//! Mean and covariance ODEs for the Gaussian approximation.
//!
//! The mean solves `dm/dt = f(m)` and the unit-scale covariance solves
//! `dC/dt = Df(m) C + C Df(m)ᵀ + Σ`; the approximation's marginal at time `t`
//! is `N(m(t), ε C(t))`. Two Euler discretizations are provided:
//!
//! - [`solve_cov_euler`]: `C_{k+1} = C_k + Δt (J_k C_k + C_k J_kᵀ + Σ)`, paired
//!   with a piecewise-linear interpolant in time. Can lose positivity when
//!   `Δt` is large; the minimum eigenvalue is recorded at every node.
//! - [`solve_cov_factored`]: `C_{k+1} = (I + J_k Δt) C_k (I + J_k Δt)ᵀ + Σ Δt`,
//!   the exact marginal covariance of the linearized Euler–Maruyama chain.
//!   PSD for every `Δt`.
//!
//! [`solve_reference`] integrates the coupled system with RK4 and serves as
//! the `Δt → 0` oracle.

use std::io::{self, Write};

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::drift::DriftModel;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::linalg::{self, check_psd, check_square, check_vector, max_abs, min_eigenvalue};

/// Which recursion produced a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Additive Euler covariance update with the piecewise-linear interpolant.
    EulerInterpolated,
    /// Factored covariance update (marginals of the linearized chain).
    Factored,
    /// RK4 reference solve.
    Reference,
}

impl Scheme {
    pub fn tag(&self) -> &'static str {
        match self {
            Scheme::EulerInterpolated => "euler-interpolated",
            Scheme::Factored => "factored",
            Scheme::Reference => "reference",
        }
    }
}

/// Covariances plus the minimum eigenvalue at each node.
#[derive(Debug, Clone)]
pub struct CovarianceSequence {
    pub covs: Vec<DMatrix<f64>>,
    pub min_eigenvalues: Vec<f64>,
}

fn check_finite_state(m: &DVector<f64>, c: Option<&DMatrix<f64>>, step: usize) -> Result<()> {
    let bad =
        m.iter().any(|x| !x.is_finite()) || c.is_some_and(|c| c.iter().any(|x| !x.is_finite()));
    if bad {
        Err(Error::BlowUp { step, path: None })
    } else {
        Ok(())
    }
}

/// `m_{k+1} = m_k + Δt f(m_k)`.
pub fn solve_mean_euler(
    model: &DriftModel,
    grid: &TimeGrid,
    m0: &DVector<f64>,
) -> Result<Vec<DVector<f64>>> {
    check_vector(m0, model.dim(), "m0")?;
    let dt = grid.dt();
    let mut means = Vec::with_capacity(grid.len());
    let mut f = DVector::zeros(model.dim());
    means.push(m0.clone());
    for k in 0..grid.steps() {
        let m = &means[k];
        model.drift_into(m.as_slice(), f.as_mut_slice());
        let next = m + &f * dt;
        check_finite_state(&next, None, k + 1)?;
        means.push(next);
    }
    Ok(means)
}

fn check_cov_inputs(
    model: &DriftModel,
    grid: &TimeGrid,
    means: &[DVector<f64>],
    c0: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
) -> Result<()> {
    let d = model.dim();
    if means.len() != grid.len() {
        return Err(Error::usage(format!(
            "mean sequence has {} nodes, grid has {}",
            means.len(),
            grid.len()
        )));
    }
    check_psd(c0, d, "C0", linalg::SYMMETRY_TOL)?;
    linalg::cholesky_lower(sigma, d, "Sigma")?;
    Ok(())
}

fn jacobian_at(model: &DriftModel, m: &DVector<f64>) -> DMatrix<f64> {
    let d = model.dim();
    let mut buf = vec![0.0; d * d];
    model.jacobian_into(m.as_slice(), &mut buf);
    DMatrix::from_row_slice(d, d, &buf)
}

/// Lyapunov right-hand side `J C + C Jᵀ + Σ`, exactly symmetric for symmetric inputs.
fn lyapunov_rhs(jac: &DMatrix<f64>, c: &DMatrix<f64>, sigma: &DMatrix<f64>) -> DMatrix<f64> {
    let jc = jac * c;
    &jc + jc.transpose() + sigma
}

fn assert_symmetric(c: &DMatrix<f64>, step: usize) -> Result<()> {
    if c.iter().any(|x| !x.is_finite()) {
        return Err(Error::BlowUp { step, path: None });
    }
    debug_assert!(
        linalg::is_symmetric(c),
        "covariance lost symmetry at step {step}"
    );
    Ok(())
}

/// Additive Euler covariance update.
pub fn solve_cov_euler(
    model: &DriftModel,
    grid: &TimeGrid,
    means: &[DVector<f64>],
    c0: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
) -> Result<CovarianceSequence> {
    check_cov_inputs(model, grid, means, c0, sigma)?;
    let dt = grid.dt();
    let mut covs = Vec::with_capacity(grid.len());
    let mut min_eigenvalues = Vec::with_capacity(grid.len());
    let c0 = linalg::symmetrize(c0);
    min_eigenvalues.push(min_eigenvalue(&c0));
    covs.push(c0);
    let mut warned = false;
    for k in 0..grid.steps() {
        let jac = jacobian_at(model, &means[k]);
        let next = &covs[k] + lyapunov_rhs(&jac, &covs[k], sigma) * dt;
        assert_symmetric(&next, k + 1)?;
        let lo = min_eigenvalue(&next);
        if lo < -linalg::SYMMETRY_TOL && !warned {
            warn!(
                "Euler covariance indefinite at step {} (min eigenvalue {lo:e}); consider a smaller dt",
                k + 1
            );
            warned = true;
        }
        min_eigenvalues.push(lo);
        covs.push(next);
    }
    Ok(CovarianceSequence {
        covs,
        min_eigenvalues,
    })
}

/// Factored covariance update `(I + J Δt) C (I + J Δt)ᵀ + Σ Δt`.
pub fn solve_cov_factored(
    model: &DriftModel,
    grid: &TimeGrid,
    means: &[DVector<f64>],
    c0: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
) -> Result<CovarianceSequence> {
    check_cov_inputs(model, grid, means, c0, sigma)?;
    let d = model.dim();
    let dt = grid.dt();
    let mut covs = Vec::with_capacity(grid.len());
    let mut min_eigenvalues = Vec::with_capacity(grid.len());
    let c0 = linalg::symmetrize(c0);
    min_eigenvalues.push(min_eigenvalue(&c0));
    covs.push(c0);
    let sigma_dt = sigma * dt;
    for k in 0..grid.steps() {
        let step = DMatrix::identity(d, d) + jacobian_at(model, &means[k]) * dt;
        let propagated = &step * &covs[k] * step.transpose();
        let next = linalg::symmetrize(&propagated) + &sigma_dt;
        assert_symmetric(&next, k + 1)?;
        min_eigenvalues.push(min_eigenvalue(&next));
        covs.push(next);
    }
    Ok(CovarianceSequence {
        covs,
        min_eigenvalues,
    })
}

/// Discrete mean/covariance sequence on a grid, with enough context to
/// evaluate the linearized drift and interpolate between nodes.
#[derive(Debug, Clone)]
pub struct MomentTrajectory {
    grid: TimeGrid,
    drift: DriftModel,
    sigma: DMatrix<f64>,
    scheme: Scheme,
    means: Vec<DVector<f64>>,
    covs: Vec<DMatrix<f64>>,
    min_eigenvalues: Vec<f64>,
}

impl MomentTrajectory {
    /// Euler mean plus the covariance recursion selected by `scheme`
    /// (`EulerInterpolated` or `Factored`).
    pub fn euler(
        model: &DriftModel,
        grid: &TimeGrid,
        m0: &DVector<f64>,
        c0: &DMatrix<f64>,
        sigma: &DMatrix<f64>,
        scheme: Scheme,
    ) -> Result<Self> {
        let means = solve_mean_euler(model, grid, m0)?;
        let seq = match scheme {
            Scheme::EulerInterpolated => solve_cov_euler(model, grid, &means, c0, sigma)?,
            Scheme::Factored => solve_cov_factored(model, grid, &means, c0, sigma)?,
            Scheme::Reference => {
                return Err(Error::usage(
                    "reference trajectories come from solve_reference",
                ))
            }
        };
        Ok(Self {
            grid: *grid,
            drift: model.clone(),
            sigma: sigma.clone(),
            scheme,
            means,
            covs: seq.covs,
            min_eigenvalues: seq.min_eigenvalues,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn drift(&self) -> &DriftModel {
        &self.drift
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn dim(&self) -> usize {
        self.drift.dim()
    }

    pub fn means(&self) -> &[DVector<f64>] {
        &self.means
    }

    pub fn covs(&self) -> &[DMatrix<f64>] {
        &self.covs
    }

    pub fn mean(&self, k: usize) -> &DVector<f64> {
        &self.means[k]
    }

    pub fn cov(&self, k: usize) -> &DMatrix<f64> {
        &self.covs[k]
    }

    pub fn min_eigenvalues(&self) -> &[f64] {
        &self.min_eigenvalues
    }

    /// `max_k max(|m_k|, ‖C_k‖_F)`.
    pub fn bound(&self) -> f64 {
        self.means
            .iter()
            .zip(&self.covs)
            .fold(0.0_f64, |acc, (m, c)| acc.max(m.norm()).max(c.norm()))
    }

    /// Mean and covariance at time `t ∈ [0, T]`.
    ///
    /// Nodes return stored values. Inside `(t_k, t_{k+1})` the
    /// Euler-interpolated scheme uses `m_k + τ f(m_k)` and
    /// `C_k + τ (J_k C_k + C_k J_kᵀ + Σ)` with `τ = t − t_k`; the other
    /// schemes interpolate linearly between the bracketing nodes.
    pub fn interpolate(&self, t: f64) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let horizon = self.grid.horizon();
        if !(0.0..=horizon).contains(&t) {
            return Err(Error::usage(format!("time {t} outside [0, {horizon}]")));
        }
        let k = ((t / self.grid.dt()).floor() as usize).min(self.grid.steps() - 1);
        let (lo, hi) = (self.grid.node(k), self.grid.node(k + 1));
        if t == lo {
            return Ok((self.means[k].clone(), self.covs[k].clone()));
        }
        if t == hi {
            return Ok((self.means[k + 1].clone(), self.covs[k + 1].clone()));
        }
        let tau = t - lo;
        Ok(match self.scheme {
            Scheme::EulerInterpolated => self.interval_moments(k, tau),
            Scheme::Factored | Scheme::Reference => {
                let w = tau / (hi - lo);
                (
                    &self.means[k] * (1.0 - w) + &self.means[k + 1] * w,
                    &self.covs[k] * (1.0 - w) + &self.covs[k + 1] * w,
                )
            }
        })
    }

    /// Euler-increment moments at offset `tau` into interval `k`, i.e. the
    /// one-sided limit at `τ = Δt` rather than the stored node.
    pub(crate) fn interval_moments(&self, k: usize, tau: f64) -> (DVector<f64>, DMatrix<f64>) {
        let m = &self.means[k];
        let c = &self.covs[k];
        let mut f = DVector::zeros(self.dim());
        self.drift.drift_into(m.as_slice(), f.as_mut_slice());
        let jac = jacobian_at(&self.drift, m);
        (m + f * tau, c + lyapunov_rhs(&jac, c, &self.sigma) * tau)
    }

    /// CSV with columns `t, m_1..m_D, c_i_j` for the lower triangle in
    /// column-major order, preceded by a `# scheme=` comment line.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let d = self.dim();
        writeln!(out, "# scheme={}", self.scheme.tag())?;
        let mut header = vec!["t".to_string()];
        header.extend((1..=d).map(|i| format!("m_{i}")));
        for j in 0..d {
            for i in j..d {
                header.push(format!("c_{}_{}", i + 1, j + 1));
            }
        }
        writeln!(out, "{}", header.join(","))?;
        for (k, (m, c)) in self.means.iter().zip(&self.covs).enumerate() {
            let mut row = vec![self.grid.node(k).to_string()];
            row.extend(m.iter().map(|x| x.to_string()));
            for j in 0..d {
                for i in j..d {
                    row.push(c[(i, j)].to_string());
                }
            }
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Internal RK4 step count and output stride of a reference solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceOptions {
    pub steps: usize,
    pub output_every: usize,
}

impl Default for ReferenceOptions {
    /// Step `1e-4·T`, every node kept.
    fn default() -> Self {
        Self {
            steps: 10_000,
            output_every: 1,
        }
    }
}

/// RK4 reference solve with the default options.
pub fn solve_reference(
    model: &DriftModel,
    horizon: f64,
    m0: &DVector<f64>,
    c0: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
) -> Result<MomentTrajectory> {
    solve_reference_with(model, horizon, m0, c0, sigma, ReferenceOptions::default())
}

pub fn solve_reference_with(
    model: &DriftModel,
    horizon: f64,
    m0: &DVector<f64>,
    c0: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    opts: ReferenceOptions,
) -> Result<MomentTrajectory> {
    let d = model.dim();
    check_vector(m0, d, "m0")?;
    check_psd(c0, d, "C0", linalg::SYMMETRY_TOL)?;
    check_square(sigma, d, "Sigma")?;
    linalg::cholesky_lower(sigma, d, "Sigma")?;
    if opts.steps == 0 || opts.output_every == 0 || opts.steps % opts.output_every != 0 {
        return Err(Error::usage(format!(
            "reference solve needs output_every dividing steps, got {} / {}",
            opts.steps, opts.output_every
        )));
    }
    let internal = TimeGrid::new(horizon, opts.steps)?;
    let grid = TimeGrid::new(horizon, opts.steps / opts.output_every)?;
    let h = internal.dt();

    let rhs = |m: &DVector<f64>, c: &DMatrix<f64>| {
        let mut f = DVector::zeros(d);
        model.drift_into(m.as_slice(), f.as_mut_slice());
        let jac = jacobian_at(model, m);
        (f, lyapunov_rhs(&jac, c, sigma))
    };

    let mut m = m0.clone();
    let mut c = linalg::symmetrize(c0);
    let mut means = vec![m.clone()];
    let mut covs = vec![c.clone()];
    for step in 0..opts.steps {
        let (k1m, k1c) = rhs(&m, &c);
        let (k2m, k2c) = rhs(&(&m + &k1m * (h / 2.0)), &(&c + &k1c * (h / 2.0)));
        let (k3m, k3c) = rhs(&(&m + &k2m * (h / 2.0)), &(&c + &k2c * (h / 2.0)));
        let (k4m, k4c) = rhs(&(&m + &k3m * h), &(&c + &k3c * h));
        m += (k1m + k2m * 2.0 + k3m * 2.0 + k4m) * (h / 6.0);
        c += (k1c + k2c * 2.0 + k3c * 2.0 + k4c) * (h / 6.0);
        check_finite_state(&m, Some(&c), step + 1)?;
        if (step + 1) % opts.output_every == 0 {
            means.push(m.clone());
            covs.push(c.clone());
        }
    }
    let min_eigenvalues = covs.iter().map(min_eigenvalue).collect();
    Ok(MomentTrajectory {
        grid,
        drift: model.clone(),
        sigma: sigma.clone(),
        scheme: Scheme::Reference,
        means,
        covs,
        min_eigenvalues,
    })
}

/// Max over nodes of `|C_a − C_b|_max` for two trajectories on the same grid.
pub fn max_cov_gap(a: &MomentTrajectory, b: &MomentTrajectory) -> f64 {
    a.covs
        .iter()
        .zip(&b.covs)
        .map(|(x, y)| max_abs(&(x - y)))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(x: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, x)
    }

    fn v(x: f64) -> DVector<f64> {
        DVector::from_element(1, x)
    }

    #[test]
    fn euler_mean_of_decay() {
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let means = solve_mean_euler(&DriftModel::ou1d(), &grid, &v(1.0)).unwrap();
        for (k, m) in means.iter().enumerate() {
            assert!((m[0] - 0.9f64.powi(k as i32)).abs() < 1e-15);
        }
        assert!((means[10][0] - 0.348_678_440_1).abs() < 1e-9);
    }

    #[test]
    fn zero_drift_keeps_mean_and_accumulates_covariance() {
        let model = DriftModel::zero(2);
        let grid = TimeGrid::new(2.0, 8).unwrap();
        let m0 = DVector::from_column_slice(&[0.3, -1.0]);
        let sigma = DMatrix::identity(2, 2);
        let c0 = DMatrix::zeros(2, 2);
        let means = solve_mean_euler(&model, &grid, &m0).unwrap();
        assert!(means.iter().all(|m| *m == m0));
        for seq in [
            solve_cov_euler(&model, &grid, &means, &c0, &sigma).unwrap(),
            solve_cov_factored(&model, &grid, &means, &c0, &sigma).unwrap(),
        ] {
            for (k, c) in seq.covs.iter().enumerate() {
                let expect = DMatrix::identity(2, 2) * (k as f64 * grid.dt());
                assert!(max_abs(&(c - expect)) < 1e-14);
            }
        }
    }

    #[test]
    fn euler_covariance_fixed_point() {
        // C* = 1/2 is a fixed point of C + Δt(−2C + 1) for any Δt.
        for dt in [0.1, 0.5, 0.9] {
            let grid = TimeGrid::from_step(4.5, dt).unwrap();
            let model = DriftModel::ou1d();
            let means = solve_mean_euler(&model, &grid, &v(0.0)).unwrap();
            let seq = solve_cov_euler(&model, &grid, &means, &s(0.5), &s(1.0)).unwrap();
            assert!(seq.covs.iter().all(|c| (c[(0, 0)] - 0.5).abs() < 1e-15));
        }
    }

    #[test]
    fn factored_scalar_recursion() {
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let model = DriftModel::ou1d();
        let means = solve_mean_euler(&model, &grid, &v(0.0)).unwrap();
        // Σ = 0 is not positive definite; use a negligible Σ and compare.
        let seq = solve_cov_factored(&model, &grid, &means, &s(1.0), &s(1e-300)).unwrap();
        for (k, c) in seq.covs.iter().enumerate() {
            assert!((c[(0, 0)] - 0.81f64.powi(k as i32)).abs() < 1e-14);
        }
    }

    #[test]
    fn euler_covariance_approaches_closed_form() {
        let exact = (1.0 - (-2.0f64).exp()) / 2.0;
        let model = DriftModel::ou1d();
        let mut errs = Vec::new();
        for k in [100, 200, 400] {
            let grid = TimeGrid::new(1.0, k).unwrap();
            let traj = MomentTrajectory::euler(
                &model,
                &grid,
                &v(1.0),
                &s(0.0),
                &s(1.0),
                Scheme::EulerInterpolated,
            )
            .unwrap();
            errs.push((traj.cov(k)[(0, 0)] - exact).abs());
        }
        assert!((errs[0] / errs[1] - 2.0).abs() < 0.1);
        assert!((errs[1] / errs[2] - 2.0).abs() < 0.1);
    }

    #[test]
    fn reference_matches_closed_forms() {
        let r = solve_reference(&DriftModel::ou1d(), 1.0, &v(1.0), &s(0.0), &s(1.0)).unwrap();
        let k = r.grid().steps();
        assert!((r.mean(k)[0] - (-1.0f64).exp()).abs() < 1e-10);
        assert!((r.cov(k)[(0, 0)] - (1.0 - (-2.0f64).exp()) / 2.0).abs() < 1e-10);

        let r = solve_reference(&DriftModel::Cubic1D, 1.0, &v(0.0), &s(0.0), &s(1.0)).unwrap();
        for (k, t) in r.grid().nodes().enumerate() {
            assert_eq!(r.mean(k)[0], 0.0);
            assert!((r.cov(k)[(0, 0)] - t).abs() < 1e-12);
        }
    }

    #[test]
    fn reference_stride() {
        let opts = ReferenceOptions {
            steps: 1000,
            output_every: 10,
        };
        let r = solve_reference_with(&DriftModel::ou1d(), 1.0, &v(1.0), &s(0.0), &s(1.0), opts)
            .unwrap();
        assert_eq!(r.grid().steps(), 100);
        assert!((r.mean(100)[0] - (-1.0f64).exp()).abs() < 1e-10);
        let bad = ReferenceOptions {
            steps: 1000,
            output_every: 7,
        };
        assert!(
            solve_reference_with(&DriftModel::ou1d(), 1.0, &v(1.0), &s(0.0), &s(1.0), bad).is_err()
        );
    }

    #[test]
    fn interpolation_contract() {
        let model = DriftModel::DoubleWell1D;
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let traj = MomentTrajectory::euler(
            &model,
            &grid,
            &v(0.5),
            &s(0.0),
            &s(1.0),
            Scheme::EulerInterpolated,
        )
        .unwrap();
        for k in 0..=10 {
            let (m, c) = traj.interpolate(grid.node(k)).unwrap();
            assert_eq!(m, *traj.mean(k));
            assert_eq!(c, *traj.cov(k));
        }
        let (k, dt) = (3, grid.dt());
        let mid = (grid.node(k) + grid.node(k + 1)) / 2.0;
        let (mm, cm) = traj.interpolate(mid).unwrap();
        let (m_lo, c_lo) = traj.interval_moments(k, 0.0);
        let (m_hi, c_hi) = traj.interval_moments(k, dt);
        assert!((mm[0] - (m_lo[0] + m_hi[0]) / 2.0).abs() < 1e-15);
        assert!((cm[(0, 0)] - (c_lo[(0, 0)] + c_hi[(0, 0)]) / 2.0).abs() < 1e-15);
        assert!(traj.interpolate(1.0 + 1e-9).is_err());
        assert!(traj.interpolate(-1e-9).is_err());
    }

    #[test]
    fn zero_drift_interpolated_covariance_is_linear() {
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let traj = MomentTrajectory::euler(
            &DriftModel::zero(1),
            &grid,
            &v(0.0),
            &s(0.0),
            &s(1.0),
            Scheme::EulerInterpolated,
        )
        .unwrap();
        for t in [0.0, 0.1, 0.33, 0.5, 0.9, 1.0] {
            assert!((traj.interpolate(t).unwrap().1[(0, 0)] - t).abs() < 1e-15);
        }
    }

    #[test]
    fn euler_scheme_may_go_indefinite_and_records_it() {
        // Δt = 1.5 with J = −1: C_1 = C_0 + 1.5(−2 C_0 + Σ) with Σ tiny turns negative.
        let grid = TimeGrid::new(3.0, 2).unwrap();
        let model = DriftModel::ou1d();
        let traj = MomentTrajectory::euler(
            &model,
            &grid,
            &v(0.0),
            &s(1.0),
            &s(1e-6),
            Scheme::EulerInterpolated,
        )
        .unwrap();
        assert!(traj.min_eigenvalues()[1] < 0.0);
        let fact =
            MomentTrajectory::euler(&model, &grid, &v(0.0), &s(1.0), &s(1e-6), Scheme::Factored)
                .unwrap();
        assert!(fact.min_eigenvalues().iter().all(|&l| l >= -1e-12));
    }

    #[test]
    fn input_validation() {
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let model = DriftModel::DoubleWell1D;
        let means = solve_mean_euler(&model, &grid, &v(0.5)).unwrap();
        assert!(solve_cov_euler(&model, &grid, &means, &s(-1.0), &s(1.0)).is_err());
        assert!(solve_cov_factored(&model, &grid, &means, &s(0.0), &s(0.0)).is_err());
        assert!(solve_cov_euler(&model, &grid, &means[..3], &s(0.0), &s(1.0)).is_err());
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        let m2 = DriftModel::zero(2);
        let means2 = solve_mean_euler(&m2, &grid, &DVector::zeros(2)).unwrap();
        assert!(solve_cov_euler(&m2, &grid, &means2, &asym, &DMatrix::identity(2, 2)).is_err());
    }

    #[test]
    fn blow_up_names_step() {
        let grid = TimeGrid::new(10.0, 10).unwrap();
        let err = solve_mean_euler(&DriftModel::Cubic1D, &grid, &v(10.0)).unwrap_err();
        assert!(matches!(err, Error::BlowUp { path: None, .. }), "{err:?}");
    }

    #[test]
    fn csv_layout() {
        let grid = TimeGrid::new(1.0, 2).unwrap();
        let traj = MomentTrajectory::euler(
            &DriftModel::zero(2),
            &grid,
            &DVector::zeros(2),
            &DMatrix::zeros(2, 2),
            &DMatrix::identity(2, 2),
            Scheme::Factored,
        )
        .unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# scheme=factored");
        assert_eq!(lines[1], "t,m_1,m_2,c_1_1,c_2_1,c_2_2");
        assert_eq!(lines[4], "1,0,0,1,0,1");
    }
}
