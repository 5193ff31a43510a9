//! Distributional checks on simulated ensembles.

use nalgebra::{DMatrix, DVector};
use smallnoise_core::*;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

const BINS: usize = 20;

/// Pearson statistic of `samples` against `N(mean, var)` on equiprobable bins.
fn chi_square(samples: &[f64], mean: f64, var: f64) -> f64 {
    let normal = Normal::new(mean, var.sqrt()).unwrap();
    let mut counts = [0usize; BINS];
    for &x in samples {
        let b = ((normal.cdf(x) * BINS as f64) as usize).min(BINS - 1);
        counts[b] += 1;
    }
    let expected = samples.len() as f64 / BINS as f64;
    counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum()
}

/// Bonferroni-corrected chi-square test of every (node, component) marginal
/// of the linearized chain against `N(m_k, εC_k)`.
fn check_linearized_marginals(
    spec: &SdeSpec,
    grid: &TimeGrid,
    nodes: &[usize],
    n_paths: usize,
    seed: u64,
) {
    let (m0, c0) = spec.initial().moments();
    let traj =
        MomentTrajectory::euler(spec.drift(), grid, &m0, &c0, spec.sigma(), Scheme::Factored)
            .unwrap();
    let ens = simulate_linearized(&traj, spec, grid, n_paths, seed).unwrap();
    let tests = nodes.len() * spec.dim();
    let critical = ChiSquared::new((BINS - 1) as f64)
        .unwrap()
        .inverse_cdf(1.0 - 0.01 / tests as f64);
    for &k in nodes {
        for d in 0..spec.dim() {
            let var = spec.epsilon() * traj.cov(k)[(d, d)];
            let stat = chi_square(&ens.component_at(k, d), traj.mean(k)[d], var);
            assert!(
                stat < critical,
                "node {k}, component {d}: {stat} >= {critical}"
            );
        }
    }
}

#[test]
fn linearized_double_well_marginals_are_gaussian() {
    let spec = SdeSpec::new(
        DriftModel::DoubleWell1D,
        DMatrix::from_element(1, 1, 1.0),
        0.01,
        InitialLaw::Dirac(DVector::from_element(1, 0.5)),
    )
    .unwrap();
    let grid = TimeGrid::new(1.0, 100).unwrap();
    check_linearized_marginals(&spec, &grid, &[10, 50, 100], 50_000, 3);
}

#[test]
fn linearized_lorenz_marginals_are_gaussian() {
    let spec = SdeSpec::new(
        DriftModel::lorenz63(),
        DMatrix::identity(3, 3),
        0.01,
        InitialLaw::Gaussian {
            mean: DVector::from_vec(vec![1.0, 1.0, 20.0]),
            cov: DMatrix::identity(3, 3) * 0.1,
        },
    )
    .unwrap();
    let grid = TimeGrid::new(0.2, 200).unwrap();
    check_linearized_marginals(&spec, &grid, &[50, 200], 50_000, 4);
}

#[test]
fn ou_ensemble_matches_euler_moments() {
    // For linear drift the factored recursion is the exact EM covariance.
    let eps = 0.05;
    let spec = SdeSpec::new(
        DriftModel::ou1d(),
        DMatrix::from_element(1, 1, 1.0),
        eps,
        InitialLaw::Dirac(DVector::from_element(1, 1.0)),
    )
    .unwrap();
    let grid = TimeGrid::new(1.0, 50).unwrap();
    let n = 100_000;
    let ens = simulate_nonlinear(&spec, &grid, n, 11).unwrap();
    let traj = MomentTrajectory::euler(
        spec.drift(),
        &grid,
        &DVector::from_element(1, 1.0),
        &DMatrix::zeros(1, 1),
        spec.sigma(),
        Scheme::Factored,
    )
    .unwrap();
    for k in [10, 25, 50] {
        let (mean, cov) = ens.moments_at(k);
        let var = eps * traj.cov(k)[(0, 0)];
        let mean_se = (var / n as f64).sqrt();
        let var_se = var * (2.0 / (n - 1) as f64).sqrt();
        assert!(
            (mean[0] - traj.mean(k)[0]).abs() < 4.0 * mean_se,
            "mean at {k}"
        );
        assert!((cov[(0, 0)] - var).abs() < 4.0 * var_se, "variance at {k}");
    }
}

#[test]
fn double_well_variance_close_to_linearization() {
    let eps = 1e-3;
    let spec = SdeSpec::new(
        DriftModel::DoubleWell1D,
        DMatrix::from_element(1, 1, 1.0),
        eps,
        InitialLaw::Dirac(DVector::from_element(1, 0.5)),
    )
    .unwrap();
    let grid = TimeGrid::new(1.0, 1000).unwrap();
    let ens = simulate_nonlinear(&spec, &grid, 100_000, 12).unwrap();
    let traj = solve_reference(
        spec.drift(),
        1.0,
        &DVector::from_element(1, 0.5),
        &DMatrix::zeros(1, 1),
        spec.sigma(),
    )
    .unwrap();
    let (_, cov) = ens.moments_at(1000);
    let predicted = eps * traj.cov(traj.grid().steps())[(0, 0)];
    assert!(
        (cov[(0, 0)] / predicted - 1.0).abs() < 0.05,
        "{} vs {predicted}",
        cov[(0, 0)]
    );
}

fn with_threads<T: Send>(n: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .unwrap()
        .install(f)
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let spec = SdeSpec::new(
        DriftModel::lorenz63(),
        DMatrix::identity(3, 3),
        0.01,
        InitialLaw::Gaussian {
            mean: DVector::from_vec(vec![1.0, 1.0, 20.0]),
            cov: DMatrix::identity(3, 3) * 0.1,
        },
    )
    .unwrap();
    let grid = TimeGrid::new(0.1, 100).unwrap();
    let run = || {
        let ens = simulate_nonlinear(&spec, &grid, 5000, 21).unwrap();
        let (m0, c0) = spec.initial().moments();
        let traj = MomentTrajectory::euler(
            spec.drift(),
            &grid,
            &m0,
            &c0,
            spec.sigma(),
            Scheme::Factored,
        )
        .unwrap();
        let lin = simulate_linearized(&traj, &spec, &grid, 5000, 21).unwrap();
        let mc = kl_discrete(
            &traj,
            &spec,
            Divergence::ZERO,
            100,
            SpaceMethod::MonteCarlo { samples: 20_000 },
            5,
        )
        .unwrap();
        let bits = |xs: &[f64]| xs.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        (
            bits(ens.raw()),
            bits(lin.raw()),
            mc.residual_term.to_bits(),
            mc.stderr.to_bits(),
        )
    };
    let one = with_threads(1, run);
    let four = with_threads(4, run);
    let seven = with_threads(7, run);
    assert!(one == four && four == seven);
}
