//! Scaling studies: ε-sweeps, Δt-sweeps, log-log slope fits and the
//! wrong-mean total-variation demonstration.
//!
//! The Gaussian approximation is always started from the moments of the
//! SDE's own initial law, so the initial divergence is zero.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::kl::{
    kl_continuous, kl_discrete, Divergence, GaussianMeasure, KlEstimate, KlMethod, SpaceMethod,
    TimeRule,
};
use crate::moments::{solve_reference_with, MomentTrajectory, ReferenceOptions, Scheme};
use crate::sde::{simulate_nonlinear_terminal, SdeSpec};
use crate::tv::{pinsker_holds, tv_estimate_1d, TvEstimate, DEFAULT_TV_BINS};

/// Acceptance band for the ε-sweep slope.
pub const EPSILON_SLOPE_BAND: (f64, f64) = (0.85, 1.15);
pub const EPSILON_MIN_R2: f64 = 0.98;
/// Acceptance band for the Δt-sweep slope.
pub const DT_SLOPE_BAND: (f64, f64) = (1.7, 2.3);

/// Least-squares line through `(log x, log y)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub residuals: Vec<f64>,
}

pub fn fit_loglog(xs: &[f64], ys: &[f64]) -> Result<SlopeFit> {
    if xs.len() != ys.len() {
        return Err(Error::usage(format!(
            "{} abscissae but {} ordinates",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 3 {
        return Err(Error::usage("log-log fit needs at least 3 points"));
    }
    if let Some(bad) = xs.iter().chain(ys).find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(Error::usage(format!(
            "log-log fit needs positive finite data, got {bad}"
        )));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::usage("log-log fit needs distinct abscissae"));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals: Vec<f64> = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| y - intercept - slope * x)
        .collect();
    let ss_res: f64 = residuals.iter().map(|r| r * r).sum();
    let ss_tot: f64 = ly.iter().map(|y| (y - my).powi(2)).sum();
    let r2 = if ss_tot > 0.0 {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Ok(SlopeFit {
        slope,
        intercept,
        r2,
        residuals,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FitOutcome {
    Fitted(SlopeFit),
    /// Every value is exactly zero (affine drift).
    ExactZero,
    /// Some values are non-positive, so no log-log fit exists.
    Undefined {
        reason: String,
    },
}

impl FitOutcome {
    fn from_values(xs: &[f64], ys: &[f64], exact_zero: bool) -> Result<Self> {
        if exact_zero {
            return Ok(FitOutcome::ExactZero);
        }
        if let Some(y) = ys.iter().find(|y| !(**y > 0.0)) {
            return Ok(FitOutcome::Undefined {
                reason: format!("non-positive value {y}"),
            });
        }
        fit_loglog(xs, ys).map(FitOutcome::Fitted)
    }

    pub fn slope(&self) -> Option<f64> {
        match self {
            FitOutcome::Fitted(f) => Some(f.slope),
            _ => None,
        }
    }

    pub fn within(&self, band: (f64, f64), min_r2: f64) -> bool {
        match self {
            FitOutcome::Fitted(f) => f.slope >= band.0 && f.slope <= band.1 && f.r2 >= min_r2,
            _ => false,
        }
    }
}

/// Settings shared by all sweeps.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    /// Problem definition; its `epsilon` is replaced per sweep point.
    pub spec: SdeSpec,
    pub horizon: f64,
    /// Swept values (ε or Δt), positive and strictly descending.
    pub values: Vec<f64>,
    /// Fixed ε of Δt-sweeps.
    pub epsilon: f64,
    /// Fixed Δt of the discrete estimator in ε-sweeps.
    pub dt: f64,
    /// Euler–Maruyama step used to sample the diffusion for TV companions.
    pub dt_sim: f64,
    pub method: SpaceMethod,
    pub time_rule: TimeRule,
    pub reference: ReferenceOptions,
    /// Euler–Maruyama paths per TV companion; 0 disables them.
    pub tv_paths: usize,
    pub tv_bins: usize,
    pub seed: u64,
}

impl SweepConfig {
    pub fn new(spec: SdeSpec, horizon: f64, values: Vec<f64>) -> Self {
        Self {
            spec,
            horizon,
            values,
            epsilon: 1e-3,
            dt: 1e-3,
            dt_sim: 1e-3,
            method: SpaceMethod::default(),
            time_rule: TimeRule::default(),
            reference: ReferenceOptions {
                steps: 10_000,
                output_every: 10,
            },
            tv_paths: 100_000,
            tv_bins: DEFAULT_TV_BINS,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.len() < 4 {
            return Err(Error::usage("sweep needs at least 4 values"));
        }
        if self.values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::usage("sweep values must be positive"));
        }
        if self.values.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::usage(
                "sweep values must be sorted in strictly descending order",
            ));
        }
        for (name, v) in [
            ("horizon", self.horizon),
            ("epsilon", self.epsilon),
            ("dt", self.dt),
            ("dt_sim", self.dt_sim),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::usage(format!("{name} must be positive, got {v}")));
            }
        }
        self.method.validate(self.spec.dim())?;
        if self.tv_paths > 0 && self.spec.dim() != 1 {
            return Err(Error::usage(
                "TV companions need a one-dimensional problem; set tv_paths = 0",
            ));
        }
        Ok(())
    }

    fn reference(&self) -> Result<MomentTrajectory> {
        let (m0, c0) = self.spec.initial().moments();
        solve_reference_with(
            self.spec.drift(),
            self.horizon,
            &m0,
            &c0,
            self.spec.sigma(),
            self.reference,
        )
    }

    fn euler(&self, grid: &TimeGrid, scheme: Scheme) -> Result<MomentTrajectory> {
        let (m0, c0) = self.spec.initial().moments();
        MomentTrajectory::euler(self.spec.drift(), grid, &m0, &c0, self.spec.sigma(), scheme)
    }

    /// Terminal Euler–Maruyama samples of the diffusion at noise level `eps`.
    fn terminal_samples(&self, eps: f64, index: usize) -> Result<Option<Vec<f64>>> {
        if self.tv_paths == 0 {
            return Ok(None);
        }
        let grid = TimeGrid::from_step(self.horizon, self.dt_sim)?;
        let spec = self.spec.with_epsilon(eps)?;
        let seed = self.seed.wrapping_add(index as u64);
        simulate_nonlinear_terminal(&spec, &grid, self.tv_paths, seed).map(Some)
    }

    fn companion(
        &self,
        traj: &MomentTrajectory,
        eps: f64,
        samples: Option<&[f64]>,
    ) -> Result<Option<TvEstimate>> {
        let Some(samples) = samples else {
            return Ok(None);
        };
        let k = traj.grid().steps();
        let gauss = GaussianMeasure::new(traj.mean(k).clone(), traj.cov(k) * eps)?;
        tv_estimate_1d(&gauss, samples, self.tv_bins).map(Some)
    }
}

/// One row of a sweep table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub value: f64,
    pub kl: KlEstimate,
    /// `KL − KL_ref` in Δt-sweeps.
    pub excess: Option<f64>,
    pub tv: Option<TvEstimate>,
}

impl SweepPoint {
    /// Pinsker check against the companion TV, if any.
    pub fn pinsker(&self) -> Option<bool> {
        self.tv
            .as_ref()
            .map(|tv| pinsker_holds(self.kl.total().as_f64(), self.kl.stderr, tv))
    }

    /// The quantity fitted against the swept value.
    pub fn fitted(&self) -> f64 {
        self.excess.unwrap_or(self.kl.total().as_f64())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTable {
    pub variable: &'static str,
    pub estimator: &'static str,
    pub points: Vec<SweepPoint>,
    pub fit: FitOutcome,
}

impl SweepTable {
    fn new(
        variable: &'static str,
        estimator: &'static str,
        points: Vec<SweepPoint>,
    ) -> Result<Self> {
        let xs: Vec<f64> = points.iter().map(|p| p.value).collect();
        let ys: Vec<f64> = points.iter().map(SweepPoint::fitted).collect();
        let exact_zero = points.iter().all(|p| p.kl.method == KlMethod::ExactZero);
        let fit = FitOutcome::from_values(&xs, &ys, exact_zero)?;
        Ok(Self {
            variable,
            estimator,
            points,
            fit,
        })
    }

    pub fn pinsker_violations(&self) -> usize {
        self.points
            .iter()
            .filter(|p| p.pinsker() == Some(false))
            .count()
    }

    /// `sweep_value,kl_total,kl_initial,kl_residual,stderr,tv,tv_err`, plus
    /// `kl_excess` for Δt-sweeps. Missing TV values are left empty.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let with_excess = self.points.iter().any(|p| p.excess.is_some());
        let mut header = "sweep_value,kl_total,kl_initial,kl_residual,stderr,tv,tv_err".to_string();
        if with_excess {
            header.push_str(",kl_excess");
        }
        writeln!(out, "{header}")?;
        for p in &self.points {
            let (tv, err) = match &p.tv {
                Some(tv) => (tv.value.to_string(), tv.error.to_string()),
                None => (String::new(), String::new()),
            };
            write!(
                out,
                "{},{},{},{},{},{},{}",
                p.value,
                p.kl.total(),
                p.kl.initial_term,
                p.kl.residual_term,
                p.kl.stderr,
                tv,
                err
            )?;
            if with_excess {
                write!(
                    out,
                    ",{}",
                    p.excess.map(|e| e.to_string()).unwrap_or_default()
                )?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpsilonSweep {
    /// `kl_continuous` on the reference trajectory.
    pub continuous: SweepTable,
    /// `kl_discrete` on the factored trajectory with step `dt`.
    pub discrete: SweepTable,
}

impl EpsilonSweep {
    pub fn passed(&self) -> bool {
        [&self.continuous, &self.discrete].iter().all(|t| {
            t.fit.within(EPSILON_SLOPE_BAND, EPSILON_MIN_R2) && t.pinsker_violations() == 0
        })
    }
}

fn with_point<T>(value: f64, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Usage(msg) => Error::Usage(format!("sweep point {value}: {msg}")),
        other => other,
    })
}

/// Path divergence against ε, in continuous time and for the Euler chain.
pub fn sweep_epsilon(cfg: &SweepConfig) -> Result<EpsilonSweep> {
    cfg.validate()?;
    let reference = cfg.reference()?;
    let grid = TimeGrid::from_step(cfg.horizon, cfg.dt)?;
    let factored = cfg.euler(&grid, Scheme::Factored)?;
    let mut continuous = Vec::new();
    let mut discrete = Vec::new();
    for (i, &eps) in cfg.values.iter().enumerate() {
        with_point(
            eps,
            (|| {
                let spec = cfg.spec.with_epsilon(eps)?;
                let kl_c = kl_continuous(
                    &reference,
                    &spec,
                    Divergence::ZERO,
                    cfg.time_rule,
                    cfg.method,
                    cfg.seed,
                )?;
                let kl_d = kl_discrete(
                    &factored,
                    &spec,
                    Divergence::ZERO,
                    grid.steps(),
                    cfg.method,
                    cfg.seed,
                )?;
                let samples = cfg.terminal_samples(eps, i)?;
                continuous.push(SweepPoint {
                    value: eps,
                    kl: kl_c,
                    excess: None,
                    tv: cfg.companion(&reference, eps, samples.as_deref())?,
                });
                discrete.push(SweepPoint {
                    value: eps,
                    kl: kl_d,
                    excess: None,
                    tv: cfg.companion(&factored, eps, samples.as_deref())?,
                });
                Ok(())
            })(),
        )?;
    }
    Ok(EpsilonSweep {
        continuous: SweepTable::new("epsilon", "continuous", continuous)?,
        discrete: SweepTable::new("epsilon", "discrete", discrete)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DtSweep {
    pub epsilon: f64,
    /// `KL_ref` from the reference trajectory.
    pub reference: KlEstimate,
    pub table: SweepTable,
}

impl DtSweep {
    pub fn passed(&self) -> bool {
        self.table.fit.within(DT_SLOPE_BAND, 0.0) && self.table.pinsker_violations() == 0
    }
}

/// Continuous-time divergence of the Euler-interpolated approximation at
/// fixed ε against Δt; the fit is on `KL(Δt) − KL_ref`.
pub fn sweep_dt(cfg: &SweepConfig) -> Result<DtSweep> {
    cfg.validate()?;
    let eps = cfg.epsilon;
    let spec = cfg.spec.with_epsilon(eps)?;
    let reference = cfg.reference()?;
    let kl_ref = kl_continuous(
        &reference,
        &spec,
        Divergence::ZERO,
        cfg.time_rule,
        cfg.method,
        cfg.seed,
    )?;
    let samples = cfg.terminal_samples(eps, 0)?;
    let mut points = Vec::new();
    for &dt in &cfg.values {
        let point = with_point(
            dt,
            (|| {
                let grid = TimeGrid::from_step(cfg.horizon, dt)?;
                let traj = cfg.euler(&grid, Scheme::EulerInterpolated)?;
                let kl = kl_continuous(
                    &traj,
                    &spec,
                    Divergence::ZERO,
                    cfg.time_rule,
                    cfg.method,
                    cfg.seed,
                )?;
                let excess = kl.total().as_f64() - kl_ref.total().as_f64();
                let tv = cfg.companion(&traj, eps, samples.as_deref())?;
                let mut kl = kl;
                kl.stderr = kl.stderr.hypot(kl_ref.stderr);
                Ok(SweepPoint {
                    value: dt,
                    kl,
                    excess: Some(excess),
                    tv,
                })
            })(),
        )?;
        points.push(point);
    }
    Ok(DtSweep {
        epsilon: eps,
        reference: kl_ref,
        table: SweepTable::new("dt", "continuous-interpolated", points)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioPoint {
    pub epsilon: f64,
    pub kl: f64,
    /// `KL·ε/Δt²`.
    pub ratio: f64,
}

/// `KL·ε/Δt²` of the Euler-interpolated approximation at fixed Δt for each
/// ε; it levels off once the `Δt²/ε` term dominates.
pub fn fixed_dt_ratios(cfg: &SweepConfig, dt: f64, epsilons: &[f64]) -> Result<Vec<RatioPoint>> {
    let grid = TimeGrid::from_step(cfg.horizon, dt)?;
    let traj = cfg.euler(&grid, Scheme::EulerInterpolated)?;
    epsilons
        .iter()
        .map(|&eps| {
            let spec = cfg.spec.with_epsilon(eps)?;
            let kl = kl_continuous(
                &traj,
                &spec,
                Divergence::ZERO,
                cfg.time_rule,
                cfg.method,
                cfg.seed,
            )?
            .total()
            .as_f64();
            Ok(RatioPoint {
                epsilon: eps,
                kl,
                ratio: kl * eps / (dt * dt),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TvPoint {
    pub epsilon: f64,
    pub tv: TvEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WrongMeanTable {
    pub offset: f64,
    pub points: Vec<TvPoint>,
    /// TV non-decreasing as ε decreases, up to 3 combined errors.
    pub monotone: bool,
}

impl WrongMeanTable {
    pub fn final_tv(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.tv.value)
    }

    /// `sweep_value,tv,tv_err`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "sweep_value,tv,tv_err")?;
        for p in &self.points {
            writeln!(out, "{},{},{}", p.epsilon, p.tv.value, p.tv.error)?;
        }
        Ok(())
    }
}

/// TV between `N(m(T) + offset, εC(T))` and Euler–Maruyama samples of the
/// diffusion at `T`, for each ε of the sweep (one-dimensional problems).
pub fn wrong_mean_tv(cfg: &SweepConfig, offset: f64) -> Result<WrongMeanTable> {
    if cfg.spec.dim() != 1 {
        return Err(Error::usage("wrong-mean TV is one-dimensional"));
    }
    if cfg.tv_paths == 0 {
        return Err(Error::usage("wrong-mean TV needs tv_paths > 0"));
    }
    if !offset.is_finite() {
        return Err(Error::usage("offset must be finite"));
    }
    cfg.validate()?;
    let reference = cfg.reference()?;
    let k = reference.grid().steps();
    let shifted = reference.mean(k) + DVector::from_element(1, offset);
    let mut points = Vec::new();
    for (i, &eps) in cfg.values.iter().enumerate() {
        let tv = with_point(
            eps,
            (|| {
                let samples = cfg
                    .terminal_samples(eps, i)?
                    .expect("tv_paths checked above");
                let gauss = GaussianMeasure::new(shifted.clone(), reference.cov(k) * eps)?;
                tv_estimate_1d(&gauss, &samples, cfg.tv_bins)
            })(),
        )?;
        points.push(TvPoint { epsilon: eps, tv });
    }
    let monotone = points
        .windows(2)
        .all(|w| w[1].tv.value >= w[0].tv.value - 3.0 * w[0].tv.error.hypot(w[1].tv.error));
    Ok(WrongMeanTable {
        offset,
        points,
        monotone,
    })
}

/// Convenience for a scalar problem `v(0) = v0`, `Σ = 1`.
pub fn scalar_spec(drift: crate::drift::DriftModel, v0: f64) -> Result<SdeSpec> {
    SdeSpec::new(
        drift,
        DMatrix::from_element(1, 1, 1.0),
        1.0,
        crate::sde::InitialLaw::Dirac(DVector::from_element(1, v0)),
    )
}
