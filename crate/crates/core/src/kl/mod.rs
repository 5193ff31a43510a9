//! Kullback–Leibler divergences between the Gaussian approximation and the
//! diffusion law.
//!
//! Path divergences split into an initial term `D_KL(ν₀‖μ₀)` and a residual
//! term driven by the linearization error `|f − g|²_Σ`:
//!
//! - continuous time: `(1/2ε) ∫₀ᵀ E^{ν_t} |f(v) − g_t(v)|²_Σ dt`
//!   ([`kl_continuous`]),
//! - Euler–Maruyama chains: `(Δt/2ε) Σ_{j<k} E^{ν_j} |f − g_j|²_Σ`
//!   ([`kl_discrete`]), checked against a brute-force joint-density
//!   estimator ([`kl_bruteforce_joint`]).

mod gaussian;
mod oracle;
mod path;
mod residual;

use serde::{Serialize, Serializer};

pub use gaussian::{gaussian_kl, initial_kl, GaussianMeasure};
pub use oracle::{kl_bruteforce_joint, JointEstimate};
pub use path::{kl_continuous, kl_discrete, TimeRule};
pub use residual::{expected_residual, linearization_residual, ResidualEstimate, SpaceMethod};

/// A non-negative extended real: a finite value or `+∞`.
///
/// `+∞` marks a missing absolute continuity and is kept apart from
/// floating-point overflow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Divergence {
    Finite(f64),
    Infinite,
}

impl Divergence {
    pub const ZERO: Divergence = Divergence::Finite(0.0);

    pub fn is_infinite(&self) -> bool {
        matches!(self, Divergence::Infinite)
    }

    /// `f64::INFINITY` for the sentinel.
    pub fn as_f64(&self) -> f64 {
        match self {
            Divergence::Finite(x) => *x,
            Divergence::Infinite => f64::INFINITY,
        }
    }

    pub fn finite(&self) -> Option<f64> {
        match self {
            Divergence::Finite(x) => Some(*x),
            Divergence::Infinite => None,
        }
    }

    pub fn plus(self, x: f64) -> Divergence {
        match self {
            Divergence::Finite(y) => Divergence::Finite(y + x),
            Divergence::Infinite => Divergence::Infinite,
        }
    }
}

impl Serialize for Divergence {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Divergence::Finite(x) => s.serialize_f64(*x),
            Divergence::Infinite => s.serialize_str("inf"),
        }
    }
}

impl std::fmt::Display for Divergence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Divergence::Finite(x) => write!(f, "{x}"),
            Divergence::Infinite => write!(f, "inf"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum KlMethod {
    MonteCarlo,
    GaussHermite,
    ExactZero,
}

/// A path divergence `initial_term + residual_term`, in nats.
#[derive(Debug, Clone, PartialEq)]
pub struct KlEstimate {
    pub initial_term: Divergence,
    pub residual_term: f64,
    /// Monte Carlo standard error of `residual_term` (0 for quadrature).
    pub stderr: f64,
    /// Space samples per time node (quadrature points for Gauss–Hermite).
    pub n_samples: usize,
    pub method: KlMethod,
    pub seed: u64,
}

impl KlEstimate {
    pub fn total(&self) -> Divergence {
        self.initial_term.plus(self.residual_term)
    }

    pub fn record(&self) -> KlRecord {
        KlRecord {
            value: self.total(),
            initial_term: self.initial_term,
            residual_term: self.residual_term,
            stderr: self.stderr,
            method: self.method,
            n_samples: self.n_samples,
            seed: self.seed,
        }
    }
}

impl Serialize for KlEstimate {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.record().serialize(s)
    }
}

/// JSON form of a [`KlEstimate`].
#[derive(Debug, Clone, Serialize)]
pub struct KlRecord {
    pub value: Divergence,
    pub initial_term: Divergence,
    pub residual_term: f64,
    pub stderr: f64,
    pub method: KlMethod,
    pub n_samples: usize,
    pub seed: u64,
}
