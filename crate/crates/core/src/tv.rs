//! Histogram estimate of the total variation distance between a 1D Gaussian
//! and an empirical sample.

use serde::Serialize;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::kl::GaussianMeasure;

pub const MIN_TV_SAMPLES: usize = 10_000;
pub const DEFAULT_TV_BINS: usize = 200;
/// Half-width of the histogram window in standard deviations.
pub const TV_RANGE_SIGMAS: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TvEstimate {
    pub value: f64,
    pub bins: usize,
    pub n_samples: usize,
    /// Statistical error (half-sample spread and histogram noise floor) plus
    /// `tail_mass`.
    pub error: f64,
    /// Gaussian mass outside the histogram window.
    pub tail_mass: f64,
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

struct Histogram {
    lo: f64,
    width: f64,
    /// Exact Gaussian bin masses; the last entry is the mass outside the window.
    masses: Vec<f64>,
}

impl Histogram {
    fn new(mean: f64, sd: f64, bins: usize) -> Self {
        let lo = mean - TV_RANGE_SIGMAS * sd;
        let width = 2.0 * TV_RANGE_SIGMAS * sd / bins as f64;
        let cdf: Vec<f64> = (0..=bins)
            .map(|b| {
                std_normal_cdf(-TV_RANGE_SIGMAS + 2.0 * TV_RANGE_SIGMAS * b as f64 / bins as f64)
            })
            .collect();
        let mut masses: Vec<f64> = cdf.windows(2).map(|w| w[1] - w[0]).collect();
        masses.push(2.0 * std_normal_cdf(-TV_RANGE_SIGMAS));
        Self { lo, width, masses }
    }

    fn bins(&self) -> usize {
        self.masses.len() - 1
    }

    /// Expected histogram TV of `n` exact draws, `½ Σ_b E|p̂_b − q_b|`, from
    /// the normal approximation `√(2q(1−q)/(πn))` of each term (capped at
    /// `2q`, its value when the bin is almost surely empty).
    fn null_floor(&self, n: usize) -> f64 {
        let n = n as f64;
        0.5 * self
            .masses
            .iter()
            .map(|&q| {
                (2.0 * q * (1.0 - q) / (std::f64::consts::PI * n))
                    .sqrt()
                    .min(2.0 * q)
            })
            .sum::<f64>()
    }

    fn tv(&self, samples: &[f64]) -> f64 {
        let bins = self.bins();
        let mut counts = vec![0usize; bins + 1];
        for &x in samples {
            let pos = (x - self.lo) / self.width;
            let b = if pos >= 0.0 && pos < bins as f64 {
                pos as usize
            } else {
                bins
            };
            counts[b] += 1;
        }
        let n = samples.len() as f64;
        let sum: f64 = counts
            .iter()
            .zip(&self.masses)
            .map(|(&c, &q)| (c as f64 / n - q).abs())
            .sum();
        (0.5 * sum).min(1.0)
    }
}

/// `½ Σ_b |p̂_b − q_b|` over `bins` equal bins on `[m − 8σ, m + 8σ]` plus one
/// overflow bin for everything outside.
///
/// The error combines the discrepancy between the two half-samples with the
/// histogram's noise floor (the expected TV of `n` exact draws from the
/// Gaussian itself), plus the Gaussian tail mass outside the window.
pub fn tv_estimate_1d(gauss: &GaussianMeasure, samples: &[f64], bins: usize) -> Result<TvEstimate> {
    if gauss.dim() != 1 {
        return Err(Error::usage("TV estimator is one-dimensional"));
    }
    if samples.len() < MIN_TV_SAMPLES {
        return Err(Error::usage(format!(
            "TV estimator needs at least {MIN_TV_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    if bins == 0 {
        return Err(Error::usage("TV estimator needs at least one bin"));
    }
    let var = gauss.cov()[(0, 0)];
    if !(var > 0.0) {
        return Err(Error::usage(
            "TV estimator needs a positive Gaussian variance",
        ));
    }
    if let Some(bad) = samples.iter().find(|x| !x.is_finite()) {
        return Err(Error::NonFinite {
            what: "TV sample".into(),
            input: vec![*bad],
        });
    }
    let hist = Histogram::new(gauss.mean()[0], var.sqrt(), bins);
    let value = hist.tv(samples);
    let (a, b) = samples.split_at(samples.len() / 2);
    let split = (hist.tv(a) - hist.tv(b)).abs() / 2.0;
    let floor = hist.null_floor(samples.len());
    let tail_mass = hist.masses[bins];
    Ok(TvEstimate {
        value,
        bins,
        n_samples: samples.len(),
        error: split.hypot(floor) + tail_mass,
        tail_mass,
    })
}

/// Pinsker check `TV ≤ √KL + 3·err`, with `err` combining the TV error and
/// the delta-method error of `√KL`.
pub fn pinsker_holds(kl: f64, kl_stderr: f64, tv: &TvEstimate) -> bool {
    if kl.is_infinite() {
        return true;
    }
    let root = kl.max(0.0).sqrt();
    let kl_part = if root > 0.0 {
        kl_stderr / (2.0 * root)
    } else {
        kl_stderr.sqrt()
    };
    tv.value <= root + 3.0 * (tv.error + kl_part)
}
