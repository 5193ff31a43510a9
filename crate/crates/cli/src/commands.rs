//! Command dispatch. Each command returns its summary, the files to write
//! and, where one exists, its acceptance check.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use serde_json::{json, Value};
use smallnoise_core::experiments::{self, SweepConfig};
use smallnoise_core::kl::initial_kl;
use smallnoise_core::moments::solve_reference_with;
use smallnoise_core::{
    kl_continuous, kl_discrete, rate_functional, simulate_linearized, simulate_nonlinear,
    Divergence, Error, KlEstimate, MomentTrajectory, Scheme,
};

use crate::config::{Command, LawKind, RateConfig, Resolved, RunConfig, TrajectoryKind};

pub struct Report {
    pub summary: Value,
    pub files: Vec<(String, Vec<u8>)>,
    /// `None` when the command has no acceptance check.
    pub check: Option<bool>,
}

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("serializable")
}

fn matrix(m: &DMatrix<f64>) -> Value {
    json!((0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect::<Vec<_>>())
        .collect::<Vec<_>>())
}

fn csv<F>(write: F) -> Vec<u8>
where
    F: FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
{
    let mut buf = Vec::new();
    write(&mut buf).expect("writing to memory");
    buf
}

fn euler(r: &Resolved, scheme: Scheme) -> Result<MomentTrajectory, Error> {
    let (m0, c0) = r.approx.moments();
    MomentTrajectory::euler(r.spec.drift(), &r.grid, &m0, &c0, r.spec.sigma(), scheme)
}

fn trajectory(r: &Resolved, kind: TrajectoryKind) -> Result<MomentTrajectory, Error> {
    match kind {
        TrajectoryKind::Factored => euler(r, Scheme::Factored),
        TrajectoryKind::EulerInterpolated => euler(r, Scheme::EulerInterpolated),
        TrajectoryKind::Reference => {
            let (m0, c0) = r.approx.moments();
            solve_reference_with(
                r.spec.drift(),
                r.grid.horizon(),
                &m0,
                &c0,
                r.spec.sigma(),
                r.reference,
            )
        }
    }
}

fn kl_report(est: KlEstimate) -> Report {
    let record = est.record();
    let ok = est.residual_term >= -3.0 * est.stderr && est.total().as_f64() >= -3.0 * est.stderr;
    let mut summary = json!({
        "kl_total": record.value,
        "kl_initial": record.initial_term,
        "kl_residual": record.residual_term,
        "stderr": record.stderr,
        "method": record.method,
        "n_samples": record.n_samples,
    });
    let file = serde_json::to_vec_pretty(&record).expect("serializable");
    summary["files"] = json!(["kl.json"]);
    Report {
        summary,
        files: vec![("kl.json".into(), file)],
        check: Some(ok),
    }
}

fn sweep_config(cfg: &RunConfig, r: &Resolved) -> Result<SweepConfig, Error> {
    if cfg.problem.approx_initial.is_some() {
        return Err(Error::Usage(
            "sweeps start the approximation from problem.initial; remove problem.approx_initial"
                .into(),
        ));
    }
    let s = &cfg.sweep;
    let mut sc = SweepConfig::new(r.spec.clone(), r.grid.horizon(), s.values.clone());
    sc.epsilon = s.epsilon.unwrap_or(r.spec.epsilon());
    sc.dt = s.dt.unwrap_or(r.grid.dt());
    sc.dt_sim = s.dt_sim.unwrap_or(r.grid.dt());
    sc.method = cfg.estimator.space;
    sc.time_rule = r.rule;
    sc.reference = r.reference;
    sc.tv_paths = s.tv_paths;
    sc.tv_bins = s.tv_bins;
    sc.seed = cfg.seed;
    Ok(sc)
}

fn fit_summary(t: &experiments::SweepTable) -> Value {
    json!({
        "fit": to_value(&t.fit),
        "pinsker_violations": t.pinsker_violations(),
    })
}

pub fn run(cfg: &RunConfig, r: &Resolved) -> Result<Report, Error> {
    let eps = r.spec.epsilon();
    match r.command {
        Command::Simulate => {
            let ens = match cfg.simulate.law {
                LawKind::Nonlinear => {
                    simulate_nonlinear(&r.spec, &r.grid, cfg.simulate.paths, cfg.seed)?
                }
                LawKind::Linearized => {
                    let traj = euler(r, Scheme::Factored)?;
                    simulate_linearized(&traj, &r.spec, &r.grid, cfg.simulate.paths, cfg.seed)?
                }
            };
            let (mean, cov) = ens.moments_at(r.grid.steps());
            let mut files = Vec::new();
            if cfg.simulate.dump {
                files.push(("ensemble.csv".to_string(), csv(|b| ens.write_csv(b))));
            }
            Ok(Report {
                summary: json!({
                    "law": to_value(&ens.law()),
                    "n_paths": ens.n_paths(),
                    "terminal_mean": mean.as_slice(),
                    "terminal_cov": matrix(&cov),
                    "files": files.iter().map(|f| f.0.clone()).collect::<Vec<_>>(),
                }),
                files,
                check: None,
            })
        }
        Command::Moments => {
            let traj = trajectory(r, cfg.moments.scheme)?;
            let k = traj.grid().steps();
            let min_eig = traj
                .min_eigenvalues()
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min);
            let check = traj.scheme() != Scheme::Factored || min_eig >= -1e-12;
            Ok(Report {
                summary: json!({
                    "scheme": traj.scheme().tag(),
                    "nodes": traj.grid().len(),
                    "final_mean": traj.mean(k).as_slice(),
                    "final_cov": matrix(traj.cov(k)),
                    "min_eigenvalue": min_eig,
                    "bound": traj.bound(),
                    "files": ["moments.csv"],
                }),
                files: vec![("moments.csv".into(), csv(|b| traj.write_csv(b)))],
                check: Some(check),
            })
        }
        Command::KlContinuous => {
            let traj = trajectory(r, cfg.estimator.trajectory)?;
            let kl0 = initial_kl(&r.approx, r.spec.initial(), eps)?;
            let est = kl_continuous(&traj, &r.spec, kl0, r.rule, cfg.estimator.space, cfg.seed)?;
            let mut rep = kl_report(est);
            rep.summary["trajectory"] = json!(traj.scheme().tag());
            Ok(rep)
        }
        Command::KlDiscrete => {
            let traj = euler(r, Scheme::Factored)?;
            let kl0 = initial_kl(&r.approx, r.spec.initial(), eps)?;
            let upto = cfg.estimator.upto.unwrap_or(r.grid.steps());
            let est = kl_discrete(&traj, &r.spec, kl0, upto, cfg.estimator.space, cfg.seed)?;
            let mut rep = kl_report(est);
            rep.summary["upto"] = json!(upto);
            Ok(rep)
        }
        Command::SweepEps => {
            let sweep = experiments::sweep_epsilon(&sweep_config(cfg, r)?)?;
            Ok(Report {
                summary: json!({
                    "continuous": fit_summary(&sweep.continuous),
                    "discrete": fit_summary(&sweep.discrete),
                    "slope_band": experiments::EPSILON_SLOPE_BAND,
                    "min_r2": experiments::EPSILON_MIN_R2,
                    "passed": sweep.passed(),
                    "files": ["sweep_eps_continuous.csv", "sweep_eps_discrete.csv", "sweep_eps.json"],
                }),
                files: vec![
                    (
                        "sweep_eps_continuous.csv".into(),
                        csv(|b| sweep.continuous.write_csv(b)),
                    ),
                    (
                        "sweep_eps_discrete.csv".into(),
                        csv(|b| sweep.discrete.write_csv(b)),
                    ),
                    (
                        "sweep_eps.json".into(),
                        serde_json::to_vec_pretty(&sweep).expect("serializable"),
                    ),
                ],
                check: Some(sweep.passed()),
            })
        }
        Command::SweepDt => {
            let sc = sweep_config(cfg, r)?;
            let sweep = experiments::sweep_dt(&sc)?;
            let ratios = match cfg.sweep.ratio_dt {
                Some(dt) if !cfg.sweep.ratio_epsilons.is_empty() => Some(
                    experiments::fixed_dt_ratios(&sc, dt, &cfg.sweep.ratio_epsilons)?,
                ),
                _ => None,
            };
            let mut detail = to_value(&sweep);
            detail["ratios"] = to_value(&ratios);
            Ok(Report {
                summary: json!({
                    "epsilon": sweep.epsilon,
                    "kl_ref": sweep.reference.total(),
                    "table": fit_summary(&sweep.table),
                    "slope_band": experiments::DT_SLOPE_BAND,
                    "ratios": to_value(&ratios),
                    "passed": sweep.passed(),
                    "files": ["sweep_dt.csv", "sweep_dt.json"],
                }),
                files: vec![
                    ("sweep_dt.csv".into(), csv(|b| sweep.table.write_csv(b))),
                    (
                        "sweep_dt.json".into(),
                        serde_json::to_vec_pretty(&detail).expect("serializable"),
                    ),
                ],
                check: Some(sweep.passed()),
            })
        }
        Command::WrongMeanTv => {
            let offset = cfg.sweep.offset;
            let table = experiments::wrong_mean_tv(&sweep_config(cfg, r)?, offset)?;
            let last = table.final_tv();
            let passed = if offset != 0.0 {
                table.monotone && last >= 0.99
            } else {
                last <= 0.1
            };
            Ok(Report {
                summary: json!({
                    "offset": offset,
                    "tv": table.points.iter().map(|p| p.tv.value).collect::<Vec<_>>(),
                    "monotone": table.monotone,
                    "final_tv": last,
                    "passed": passed,
                    "files": ["wrong_mean_tv.csv"],
                }),
                files: vec![("wrong_mean_tv.csv".into(), csv(|b| table.write_csv(b)))],
                check: Some(passed),
            })
        }
        Command::Rate => {
            let (v0, _) = r.spec.initial().moments();
            let (grid, path) = match &cfg.rate {
                RateConfig::Ode => {
                    let traj = trajectory(r, TrajectoryKind::Reference)?;
                    (*traj.grid(), traj.means().to_vec())
                }
                RateConfig::Euler => {
                    let traj = euler(r, Scheme::Factored)?;
                    (r.grid, traj.means().to_vec())
                }
                RateConfig::Constant => (r.grid, vec![v0.clone(); r.grid.len()]),
                RateConfig::Line { slope } => {
                    if slope.len() != v0.len() {
                        return Err(Error::Usage(format!(
                            "rate.slope needs {} entries",
                            v0.len()
                        )));
                    }
                    let w = DVector::from_column_slice(slope);
                    (r.grid, r.grid.nodes().map(|t| &v0 + &w * t).collect())
                }
            };
            let value: Divergence =
                rate_functional(r.spec.drift(), r.spec.sigma(), &grid, &path, &v0)?;
            Ok(Report {
                summary: json!({ "rate": value, "nodes": grid.len() }),
                files: Vec::new(),
                check: None,
            })
        }
    }
}
