//! Euler–Maruyama ensembles for the nonlinear SDE and its linearized chain.
//!
//! Path `p` draws its initial state from stream `(seed, PathInit, p)` and its
//! step-`k` increment from block `k` of stream `(seed, PathNoise, p)`, so an
//! ensemble is a pure function of `(spec, grid, N, seed)` whatever the thread
//! count. The nonlinear and linearized simulators share these streams: given
//! the same seed they are driven by identical noise.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::drift::DriftModel;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::linalg::{self, check_psd, check_vector, matvec, psd_factor, to_row_major};
use crate::moments::MomentTrajectory;
use crate::rng::{Domain, NormalStream};

/// Law of the initial condition `v(0)`.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialLaw {
    Dirac(DVector<f64>),
    /// `N(mean, ε·cov)`: `cov` is the unit-scale covariance `C0`.
    Gaussian {
        mean: DVector<f64>,
        cov: DMatrix<f64>,
    },
}

impl InitialLaw {
    pub fn dim(&self) -> usize {
        match self {
            InitialLaw::Dirac(v) => v.len(),
            InitialLaw::Gaussian { mean, .. } => mean.len(),
        }
    }

    /// Initial moments `(m0, C0)` of the Gaussian approximation; a Dirac
    /// initialization maps to `C0 = 0`.
    pub fn moments(&self) -> (DVector<f64>, DMatrix<f64>) {
        match self {
            InitialLaw::Dirac(v) => (v.clone(), DMatrix::zeros(v.len(), v.len())),
            InitialLaw::Gaussian { mean, cov } => (mean.clone(), cov.clone()),
        }
    }

    /// Dirac at `m0` when `c0` vanishes, Gaussian otherwise.
    pub fn from_moments(m0: &DVector<f64>, c0: &DMatrix<f64>) -> Self {
        if c0.iter().all(|x| *x == 0.0) {
            InitialLaw::Dirac(m0.clone())
        } else {
            InitialLaw::Gaussian {
                mean: m0.clone(),
                cov: c0.clone(),
            }
        }
    }
}

/// `dv = f(v) dt + √(εΣ) dW`, `v(0) ~ initial`.
#[derive(Debug, Clone)]
pub struct SdeSpec {
    drift: DriftModel,
    sigma: DMatrix<f64>,
    sigma_lower: DMatrix<f64>,
    epsilon: f64,
    initial: InitialLaw,
}

impl SdeSpec {
    /// `epsilon = 0` is accepted and gives the deterministic Euler flow;
    /// divergence estimators reject it.
    pub fn new(
        drift: DriftModel,
        sigma: DMatrix<f64>,
        epsilon: f64,
        initial: InitialLaw,
    ) -> Result<Self> {
        let d = drift.dim();
        let sigma_lower = linalg::cholesky_lower(&sigma, d, "Sigma")?;
        if !(epsilon.is_finite() && epsilon >= 0.0) {
            return Err(Error::usage(format!(
                "epsilon must be non-negative, got {epsilon}"
            )));
        }
        match &initial {
            InitialLaw::Dirac(v) => check_vector(v, d, "initial atom")?,
            InitialLaw::Gaussian { mean, cov } => {
                check_vector(mean, d, "initial mean")?;
                check_psd(cov, d, "initial covariance", linalg::SYMMETRY_TOL)?;
            }
        }
        Ok(Self {
            drift,
            sigma,
            sigma_lower,
            epsilon,
            initial,
        })
    }

    pub fn drift(&self) -> &DriftModel {
        &self.drift
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    /// Lower Cholesky factor `L` with `Σ = L Lᵀ`.
    pub fn sigma_lower(&self) -> &DMatrix<f64> {
        &self.sigma_lower
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn initial(&self) -> &InitialLaw {
        &self.initial
    }

    pub fn dim(&self) -> usize {
        self.drift.dim()
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        Self::new(
            self.drift.clone(),
            self.sigma.clone(),
            epsilon,
            self.initial.clone(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PathLaw {
    Nonlinear,
    Linearized,
}

/// `N` simulated paths on a grid, stored path-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    grid: TimeGrid,
    n_paths: usize,
    dim: usize,
    states: Vec<f64>,
    seed: u64,
    law: PathLaw,
}

impl PathEnsemble {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn law(&self) -> PathLaw {
        self.law
    }

    pub fn raw(&self) -> &[f64] {
        &self.states
    }

    pub fn state(&self, path: usize, k: usize) -> &[f64] {
        let off = (path * self.grid.len() + k) * self.dim;
        &self.states[off..off + self.dim]
    }

    /// Component `d` of every path at node `k`.
    pub fn component_at(&self, k: usize, d: usize) -> Vec<f64> {
        (0..self.n_paths).map(|p| self.state(p, k)[d]).collect()
    }

    /// Sample mean and (unbiased) covariance at node `k`.
    pub fn moments_at(&self, k: usize) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.n_paths as f64;
        let mut mean = DVector::zeros(self.dim);
        for p in 0..self.n_paths {
            mean += DVector::from_column_slice(self.state(p, k));
        }
        mean /= n;
        let mut cov = DMatrix::zeros(self.dim, self.dim);
        for p in 0..self.n_paths {
            let x = DVector::from_column_slice(self.state(p, k)) - &mean;
            cov += &x * x.transpose();
        }
        (mean, cov / (n - 1.0).max(1.0))
    }

    /// One row per `(path, node)`: `path,k,t,x_1..x_D`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let mut header = vec!["path".to_string(), "k".into(), "t".into()];
        header.extend((1..=self.dim).map(|i| format!("x_{i}")));
        writeln!(out, "{}", header.join(","))?;
        for p in 0..self.n_paths {
            for k in 0..self.grid.len() {
                let mut row = vec![p.to_string(), k.to_string(), self.grid.node(k).to_string()];
                row.extend(self.state(p, k).iter().map(|x| x.to_string()));
                writeln!(out, "{}", row.join(","))?;
            }
        }
        Ok(())
    }
}

/// Drift used inside the stepping loop.
enum StepDrift<'a> {
    Full(&'a DriftModel),
    /// `g_k(l) = f(m_k) + J_k (l − m_k)`; `anchors[k] = (m_k, f(m_k), J_k row-major)`.
    Linearized(Vec<(Vec<f64>, Vec<f64>, Vec<f64>)>),
}

impl StepDrift<'_> {
    #[inline]
    fn eval(&self, k: usize, x: &[f64], out: &mut [f64], scratch: &mut [f64]) {
        match self {
            StepDrift::Full(model) => model.drift_into(x, out),
            StepDrift::Linearized(anchors) => {
                let (m, fm, jac) = &anchors[k];
                for ((s, xi), mi) in scratch.iter_mut().zip(x).zip(m) {
                    *s = xi - mi;
                }
                matvec(jac, scratch, out);
                for (o, f) in out.iter_mut().zip(fm) {
                    *o += f;
                }
            }
        }
    }
}

fn check_run(grid: &TimeGrid, n_paths: usize) -> Result<()> {
    if n_paths == 0 {
        return Err(Error::usage("ensemble needs at least one path"));
    }
    grid.len()
        .checked_mul(n_paths)
        .ok_or_else(|| Error::usage("ensemble too large"))?;
    Ok(())
}

struct Stepper<'a> {
    dim: usize,
    steps: usize,
    dt: f64,
    seed: u64,
    noise_factor: Vec<f64>,
    init_factor: Option<(Vec<f64>, Vec<f64>)>,
    atom: Vec<f64>,
    drift: StepDrift<'a>,
}

impl<'a> Stepper<'a> {
    fn new(
        spec: &SdeSpec,
        init: &InitialLaw,
        grid: &TimeGrid,
        seed: u64,
        drift: StepDrift<'a>,
    ) -> Result<Self> {
        let eps = spec.epsilon();
        let init_factor = match init {
            InitialLaw::Dirac(_) => None,
            InitialLaw::Gaussian { mean, cov } => {
                let s = psd_factor(&(cov * eps))?;
                Some((mean.as_slice().to_vec(), to_row_major(&s)))
            }
        };
        Ok(Self {
            dim: spec.dim(),
            steps: grid.steps(),
            dt: grid.dt(),
            seed,
            noise_factor: to_row_major(&(spec.sigma_lower() * (eps * grid.dt()).sqrt())),
            init_factor,
            atom: init.moments().0.as_slice().to_vec(),
            drift,
        })
    }

    /// Runs path `p`, handing every node state to `visit(k, state)`.
    fn run(&self, p: usize, mut visit: impl FnMut(usize, &[f64])) -> Result<()> {
        let d = self.dim;
        let mut x = vec![0.0; d];
        let mut next = vec![0.0; d];
        let mut xi = vec![0.0; d];
        let mut f = vec![0.0; d];
        let mut kick = vec![0.0; d];
        let mut scratch = vec![0.0; d];
        match &self.init_factor {
            None => x.copy_from_slice(&self.atom),
            Some((mean, factor)) => {
                NormalStream::new(self.seed, Domain::PathInit, 0, p as u64, d).fill_block(&mut xi);
                matvec(factor, &xi, &mut kick);
                for i in 0..d {
                    x[i] = mean[i] + kick[i];
                }
            }
        }
        visit(0, &x);
        let mut noise = NormalStream::new(self.seed, Domain::PathNoise, 0, p as u64, d);
        for k in 0..self.steps {
            self.drift.eval(k, &x, &mut f, &mut scratch);
            noise.fill_block(&mut xi);
            matvec(&self.noise_factor, &xi, &mut kick);
            for i in 0..d {
                next[i] = x[i] + f[i] * self.dt + kick[i];
            }
            if next.iter().any(|v| !v.is_finite()) {
                return Err(Error::BlowUp {
                    step: k + 1,
                    path: Some(p),
                });
            }
            std::mem::swap(&mut x, &mut next);
            visit(k + 1, &x);
        }
        Ok(())
    }
}

fn run_ensemble(
    spec: &SdeSpec,
    init: &InitialLaw,
    grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
    drift: StepDrift<'_>,
    law: PathLaw,
) -> Result<PathEnsemble> {
    check_run(grid, n_paths)?;
    let d = spec.dim();
    let nodes = grid.len();
    let stepper = Stepper::new(spec, init, grid, seed, drift)?;
    let mut states = vec![0.0; n_paths * nodes * d];
    states
        .par_chunks_mut(nodes * d)
        .enumerate()
        .map(|(p, path)| stepper.run(p, |k, x| path[k * d..(k + 1) * d].copy_from_slice(x)))
        .collect::<Result<Vec<()>>>()?;
    Ok(PathEnsemble {
        grid: *grid,
        n_paths,
        dim: d,
        states,
        seed,
        law,
    })
}

/// Terminal states `v_K` of [`simulate_nonlinear`], path-major (`N × D`),
/// without storing the paths. Bit-identical to the last node of the full
/// ensemble for the same arguments.
pub fn simulate_nonlinear_terminal(
    spec: &SdeSpec,
    grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    check_run(grid, n_paths)?;
    let d = spec.dim();
    let stepper = Stepper::new(
        spec,
        spec.initial(),
        grid,
        seed,
        StepDrift::Full(spec.drift()),
    )?;
    let last = grid.steps();
    let mut out = vec![0.0; n_paths * d];
    out.par_chunks_mut(d)
        .enumerate()
        .map(|(p, end)| {
            stepper.run(p, |k, x| {
                if k == last {
                    end.copy_from_slice(x)
                }
            })
        })
        .collect::<Result<Vec<()>>>()?;
    Ok(out)
}

/// `v_{k+1} = v_k + f(v_k) Δt + √(εΔt) L ξ_k`.
pub fn simulate_nonlinear(
    spec: &SdeSpec,
    grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
) -> Result<PathEnsemble> {
    run_ensemble(
        spec,
        spec.initial(),
        grid,
        n_paths,
        seed,
        StepDrift::Full(spec.drift()),
        PathLaw::Nonlinear,
    )
}

/// `l_{k+1} = l_k + (f(m_k) + Df(m_k)(l_k − m_k)) Δt + √(εΔt) L ξ_k`, started
/// from `N(m_0, ε C_0)` of the trajectory. For affine drifts the
/// linearization is `f` itself and the nonlinear update is used verbatim.
pub fn simulate_linearized(
    traj: &MomentTrajectory,
    spec: &SdeSpec,
    grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
) -> Result<PathEnsemble> {
    if traj.grid() != grid {
        return Err(Error::usage(format!(
            "trajectory grid (T={}, K={}) does not match simulation grid (T={}, K={})",
            traj.grid().horizon(),
            traj.grid().steps(),
            grid.horizon(),
            grid.steps()
        )));
    }
    if traj.drift() != spec.drift() {
        return Err(Error::usage("trajectory and SDE use different drifts"));
    }
    let init = InitialLaw::from_moments(traj.mean(0), traj.cov(0));
    let drift = if spec.drift().is_linear() {
        StepDrift::Full(spec.drift())
    } else {
        let d = spec.dim();
        let anchors = traj.means()[..grid.steps()]
            .iter()
            .map(|m| {
                let mut fm = vec![0.0; d];
                let mut jac = vec![0.0; d * d];
                spec.drift().drift_into(m.as_slice(), &mut fm);
                spec.drift().jacobian_into(m.as_slice(), &mut jac);
                (m.as_slice().to_vec(), fm, jac)
            })
            .collect();
        StepDrift::Linearized(anchors)
    };
    run_ensemble(spec, &init, grid, n_paths, seed, drift, PathLaw::Linearized)
}

const SAMPLE_CHUNK: usize = 4096;

/// `N` exact draws from `N(mean, cov)` with `cov` PSD (possibly singular);
/// degenerate directions come out deterministic.
pub fn sample_gaussian(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    n: usize,
    seed: u64,
) -> Result<Vec<DVector<f64>>> {
    let d = mean.len();
    check_vector(mean, d, "mean")?;
    linalg::check_square(cov, d, "covariance")?;
    let factor = to_row_major(&psd_factor(cov)?);
    let chunks: Vec<Vec<DVector<f64>>> = (0..n.div_ceil(SAMPLE_CHUNK))
        .into_par_iter()
        .map(|c| {
            let len = SAMPLE_CHUNK.min(n - c * SAMPLE_CHUNK);
            let mut stream = NormalStream::new(seed, Domain::GaussianSample, 0, c as u64, d);
            let mut z = vec![0.0; d];
            let mut x = vec![0.0; d];
            (0..len)
                .map(|_| {
                    stream.fill_block(&mut z);
                    matvec(&factor, &z, &mut x);
                    DVector::from_iterator(d, x.iter().zip(mean.iter()).map(|(a, b)| a + b))
                })
                .collect()
        })
        .collect();
    Ok(chunks.into_iter().flatten().collect())
}
