//! Gaussian approximations of small-noise diffusions
//! `dv = f(v) dt + √(εΣ) dW` and the Kullback–Leibler divergence between the
//! approximation and the diffusion law.
//!
//! The approximation has marginals `N(m(t), εC(t))` with
//! `dm/dt = f(m)` and `dC/dt = Df(m) C + C Df(m)ᵀ + Σ`. [`moments`] propagates
//! these equations, [`sde`] simulates the diffusion and the linearized chain,
//! [`kl`] evaluates the path divergences, and [`experiments`] runs the
//! ε- and Δt-scaling studies.

pub mod drift;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod kl;
pub mod linalg;
pub mod moments;
pub mod quadrature;
pub mod rate;
pub mod rng;
pub mod sde;
pub mod tv;

pub use drift::{check_jacobian, DriftModel, DriftSpec, JacobianReport};
pub use error::{Error, Result};
pub use experiments::{
    fit_loglog, fixed_dt_ratios, sweep_dt, sweep_epsilon, wrong_mean_tv, DtSweep, EpsilonSweep,
    FitOutcome, SlopeFit, SweepConfig, SweepTable, WrongMeanTable,
};
pub use grid::TimeGrid;
pub use kl::{
    expected_residual, gaussian_kl, initial_kl, kl_bruteforce_joint, kl_continuous, kl_discrete,
    linearization_residual, Divergence, GaussianMeasure, KlEstimate, KlMethod, KlRecord,
    SpaceMethod, TimeRule,
};
pub use moments::{solve_reference, MomentTrajectory, ReferenceOptions, Scheme};
pub use rate::rate_functional;
pub use sde::{
    sample_gaussian, simulate_linearized, simulate_nonlinear, simulate_nonlinear_terminal,
    InitialLaw, PathEnsemble, SdeSpec,
};
pub use tv::{pinsker_holds, tv_estimate_1d, TvEstimate};
