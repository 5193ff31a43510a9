use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::residual::{expected_gap, ResidualEstimate, SpaceMethod};
use super::{Divergence, KlEstimate, KlMethod};
use crate::error::{Error, Result};
use crate::linalg::SigmaNorm;
use crate::moments::{MomentTrajectory, Scheme};
use crate::sde::SdeSpec;

/// Composite trapezoid in time.
///
/// On node-valued trajectories the rule runs over the trajectory grid. On
/// Euler-interpolated trajectories the integrand jumps at every node (the
/// linearization anchor switches from `m_k` to `m_{k+1}`), so each interval
/// is integrated separately from its one-sided limits with `substeps`
/// trapezoid panels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeRule {
    pub substeps: usize,
}

impl Default for TimeRule {
    fn default() -> Self {
        Self { substeps: 8 }
    }
}

impl TimeRule {
    pub fn trapezoid() -> Self {
        Self { substeps: 1 }
    }

    pub fn with_substeps(substeps: usize) -> Self {
        Self { substeps }
    }
}

fn check_pair(traj: &MomentTrajectory, spec: &SdeSpec) -> Result<f64> {
    let eps = spec.epsilon();
    if !(eps > 0.0) {
        return Err(Error::usage(format!("epsilon must be positive, got {eps}")));
    }
    if traj.drift() != spec.drift() {
        return Err(Error::usage("trajectory and SDE use different drifts"));
    }
    if traj.sigma() != spec.sigma() {
        return Err(Error::usage("trajectory and SDE use different Sigma"));
    }
    Ok(eps)
}

struct Node {
    weight: f64,
    estimate: ResidualEstimate,
}

fn combine(
    nodes: Vec<Node>,
    scale: f64,
    kl0: Divergence,
    method: SpaceMethod,
    seed: u64,
) -> KlEstimate {
    let residual: f64 = nodes
        .iter()
        .map(|n| n.weight * n.estimate.value)
        .sum::<f64>()
        * scale;
    let var: f64 = nodes
        .iter()
        .map(|n| (n.weight * n.estimate.stderr).powi(2))
        .sum();
    let all_zero = nodes
        .iter()
        .all(|n| n.estimate.method == KlMethod::ExactZero);
    KlEstimate {
        initial_term: kl0,
        residual_term: residual,
        stderr: var.sqrt() * scale,
        n_samples: method.n_samples(),
        method: if all_zero {
            KlMethod::ExactZero
        } else {
            method.tag()
        },
        seed,
    }
}

/// Continuous-time path divergence
/// `kl0 + (1/2ε) ∫₀ᵀ E^{N(m(t), εC(t))} |f(v) − g_t(v)|²_Σ dt`.
///
/// For reference trajectories `g_t(v) = f(m(t)) + Df(m(t))(v − m(t))`. For
/// Euler-interpolated trajectories on `(t_k, t_{k+1})`,
/// `g_t(v) = f(m_k) + Df(m_k)(v − m(t))` with `m(t)` the interpolated mean.
/// Factored trajectories describe the discrete chain and are rejected.
pub fn kl_continuous(
    traj: &MomentTrajectory,
    spec: &SdeSpec,
    kl0: Divergence,
    rule: TimeRule,
    method: SpaceMethod,
    seed: u64,
) -> Result<KlEstimate> {
    let eps = check_pair(traj, spec)?;
    method.validate(traj.dim())?;
    if rule.substeps == 0 {
        return Err(Error::usage("time rule needs at least one substep"));
    }
    let norm = SigmaNorm::new(spec.sigma())?;
    let grid = traj.grid();
    let dt = grid.dt();
    let model = traj.drift();

    let nodes: Vec<Node> = match traj.scheme() {
        Scheme::Factored => {
            return Err(Error::usage(
                "factored trajectories carry discrete-chain marginals; use kl_discrete",
            ))
        }
        Scheme::Reference => (0..grid.len())
            .into_par_iter()
            .map(|k| {
                let weight = if k == 0 || k == grid.steps() {
                    dt / 2.0
                } else {
                    dt
                };
                let m = traj.mean(k);
                let estimate = expected_gap(
                    model,
                    &norm,
                    m,
                    m,
                    &(traj.cov(k) * eps),
                    method,
                    seed,
                    k as u64,
                )?;
                Ok(Node { weight, estimate })
            })
            .collect::<Result<_>>()?,
        Scheme::EulerInterpolated => {
            let s = rule.substeps;
            let h = dt / s as f64;
            (0..grid.steps() * (s + 1))
                .into_par_iter()
                .map(|idx| {
                    let (k, j) = (idx / (s + 1), idx % (s + 1));
                    let weight = if j == 0 || j == s { h / 2.0 } else { h };
                    let (center, cov) = traj.interval_moments(k, j as f64 * h);
                    let estimate = expected_gap(
                        model,
                        &norm,
                        traj.mean(k),
                        &center,
                        &(cov * eps),
                        method,
                        seed,
                        idx as u64,
                    )?;
                    Ok(Node { weight, estimate })
                })
                .collect::<Result<_>>()?
        }
    };
    Ok(combine(nodes, 1.0 / (2.0 * eps), kl0, method, seed))
}

/// Discrete-time path divergence of the linearized Euler–Maruyama chain
/// against the nonlinear one over nodes `0..=upto`:
/// `kl0 + (Δt/2ε) Σ_{j<upto} E^{N(m_j, εC_j)} |f − g_j|²_Σ`,
/// `g_j(u) = f(m_j) + Df(m_j)(u − m_j)`.
pub fn kl_discrete(
    traj: &MomentTrajectory,
    spec: &SdeSpec,
    kl0: Divergence,
    upto: usize,
    method: SpaceMethod,
    seed: u64,
) -> Result<KlEstimate> {
    let eps = check_pair(traj, spec)?;
    method.validate(traj.dim())?;
    if traj.scheme() != Scheme::Factored {
        return Err(Error::usage(format!(
            "kl_discrete needs factored covariances, got a {} trajectory",
            traj.scheme().tag()
        )));
    }
    let grid = traj.grid();
    if upto > grid.steps() {
        return Err(Error::usage(format!(
            "step {upto} beyond the trajectory's {} steps",
            grid.steps()
        )));
    }
    let norm = SigmaNorm::new(spec.sigma())?;
    let model = traj.drift();
    let nodes: Vec<Node> = (0..upto)
        .into_par_iter()
        .map(|j| {
            let m = traj.mean(j);
            let estimate = expected_gap(
                model,
                &norm,
                m,
                m,
                &(traj.cov(j) * eps),
                method,
                seed,
                j as u64,
            )?;
            Ok(Node {
                weight: 1.0,
                estimate,
            })
        })
        .collect::<Result<_>>()?;
    Ok(combine(nodes, grid.dt() / (2.0 * eps), kl0, method, seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drift::DriftModel;
    use crate::grid::TimeGrid;
    use crate::moments::{solve_reference_with, ReferenceOptions};
    use crate::sde::InitialLaw;
    use nalgebra::{DMatrix, DVector};

    fn s(x: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, x)
    }

    fn v(x: f64) -> DVector<f64> {
        DVector::from_element(1, x)
    }

    fn cubic_setup(eps: f64) -> (MomentTrajectory, SdeSpec) {
        let spec =
            SdeSpec::new(DriftModel::Cubic1D, s(1.0), eps, InitialLaw::Dirac(v(0.0))).unwrap();
        let opts = ReferenceOptions {
            steps: 1000,
            output_every: 10,
        };
        let traj =
            solve_reference_with(spec.drift(), 1.0, &v(0.0), &s(0.0), &s(1.0), opts).unwrap();
        (traj, spec)
    }

    #[test]
    fn cubic_closed_form_with_quadrature() {
        // (1/2ε) ∫ 15 (εt)³ dt = (15/8) ε² T⁴; trapezoid on 100 panels is
        // within 1e-4 relative of the integral of t³.
        let eps = 0.1;
        let (traj, spec) = cubic_setup(eps);
        let est = kl_continuous(
            &traj,
            &spec,
            Divergence::ZERO,
            TimeRule::trapezoid(),
            SpaceMethod::GaussHermite { order: 20 },
            0,
        )
        .unwrap();
        let exact = 15.0 / 8.0 * eps * eps;
        // Trapezoid of t³ with h = 0.01 gives 1/4 + h²/4.
        let trap_exact = exact * (1.0 + 1e-4);
        assert!(
            (est.residual_term - trap_exact).abs() < 1e-12,
            "{}",
            est.residual_term
        );
        assert_eq!(est.total(), Divergence::Finite(est.residual_term));
    }

    #[test]
    fn rejects_mismatches() {
        let (traj, spec) = cubic_setup(0.1);
        let zero_eps = spec.with_epsilon(0.0).unwrap();
        assert!(kl_continuous(
            &traj,
            &zero_eps,
            Divergence::ZERO,
            TimeRule::default(),
            SpaceMethod::default(),
            0
        )
        .is_err());
        assert!(kl_discrete(&traj, &spec, Divergence::ZERO, 1, SpaceMethod::default(), 0).is_err());
        let other = SdeSpec::new(
            DriftModel::DoubleWell1D,
            s(1.0),
            0.1,
            InitialLaw::Dirac(v(0.0)),
        )
        .unwrap();
        assert!(kl_continuous(
            &traj,
            &other,
            Divergence::ZERO,
            TimeRule::default(),
            SpaceMethod::default(),
            0
        )
        .is_err());

        let grid = TimeGrid::new(1.0, 10).unwrap();
        let fact = MomentTrajectory::euler(
            spec.drift(),
            &grid,
            &v(0.0),
            &s(0.0),
            &s(1.0),
            Scheme::Factored,
        )
        .unwrap();
        assert!(kl_continuous(
            &fact,
            &spec,
            Divergence::ZERO,
            TimeRule::default(),
            SpaceMethod::default(),
            0
        )
        .is_err());
        assert!(kl_discrete(
            &fact,
            &spec,
            Divergence::ZERO,
            11,
            SpaceMethod::default(),
            0
        )
        .is_err());
    }

    #[test]
    fn empty_sum_and_infinite_initial() {
        let spec = SdeSpec::new(
            DriftModel::DoubleWell1D,
            s(1.0),
            0.01,
            InitialLaw::Dirac(v(0.5)),
        )
        .unwrap();
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let traj = MomentTrajectory::euler(
            spec.drift(),
            &grid,
            &v(0.5),
            &s(0.0),
            &s(1.0),
            Scheme::Factored,
        )
        .unwrap();
        let est = kl_discrete(
            &traj,
            &spec,
            Divergence::Finite(0.25),
            0,
            SpaceMethod::default(),
            0,
        )
        .unwrap();
        assert_eq!(est.total(), Divergence::Finite(0.25));
        let est = kl_discrete(
            &traj,
            &spec,
            Divergence::Infinite,
            10,
            SpaceMethod::default(),
            0,
        )
        .unwrap();
        assert!(est.total().is_infinite());
    }

    #[test]
    fn discrete_sum_against_hand_computation() {
        // DoubleWell: residual = −3m δ² − δ³, E r² = 27 m² s⁴ + 15 s⁶ for δ ~ N(0, s²).
        let eps = 0.01;
        let spec = SdeSpec::new(
            DriftModel::DoubleWell1D,
            s(1.0),
            eps,
            InitialLaw::Dirac(v(0.5)),
        )
        .unwrap();
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let traj = MomentTrajectory::euler(
            spec.drift(),
            &grid,
            &v(0.5),
            &s(0.0),
            &s(1.0),
            Scheme::Factored,
        )
        .unwrap();
        let est = kl_discrete(
            &traj,
            &spec,
            Divergence::ZERO,
            10,
            SpaceMethod::GaussHermite { order: 20 },
            0,
        )
        .unwrap();
        let mut sum = 0.0;
        for j in 0..10 {
            let (m, s2) = (traj.mean(j)[0], eps * traj.cov(j)[(0, 0)]);
            sum += 27.0 * m * m * s2 * s2 + 15.0 * s2.powi(3);
        }
        let expect = grid.dt() / (2.0 * eps) * sum;
        assert!(
            (est.residual_term - expect).abs() < 1e-14,
            "{} vs {expect}",
            est.residual_term
        );
    }
}
