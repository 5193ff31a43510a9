//! Linearization residual `|f(u) − f(a) − Df(a)(u − c)|²_Σ` and its
//! expectation under Gaussian marginals.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::KlMethod;
use crate::drift::DriftModel;
use crate::error::{Error, Result};
use crate::linalg::{check_square, check_vector, matvec, psd_factor, to_row_major, SigmaNorm};
use crate::quadrature::TensorRule;
use crate::rng::{Domain, NormalStream};

/// How Gaussian expectations over state space are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum SpaceMethod {
    MonteCarlo {
        samples: usize,
    },
    /// Tensorized rule, `D ≤ 3`.
    GaussHermite {
        order: usize,
    },
}

impl Default for SpaceMethod {
    fn default() -> Self {
        SpaceMethod::MonteCarlo { samples: 100_000 }
    }
}

impl SpaceMethod {
    pub fn n_samples(&self) -> usize {
        match self {
            SpaceMethod::MonteCarlo { samples } => *samples,
            SpaceMethod::GaussHermite { order } => *order,
        }
    }

    pub fn tag(&self) -> KlMethod {
        match self {
            SpaceMethod::MonteCarlo { .. } => KlMethod::MonteCarlo,
            SpaceMethod::GaussHermite { .. } => KlMethod::GaussHermite,
        }
    }

    pub(crate) fn validate(&self, dim: usize) -> Result<()> {
        match *self {
            SpaceMethod::MonteCarlo { samples } if samples < 2 => {
                Err(Error::usage("Monte Carlo needs at least 2 samples"))
            }
            SpaceMethod::GaussHermite { order: 0 } => {
                Err(Error::usage("Gauss-Hermite order must be positive"))
            }
            SpaceMethod::GaussHermite { .. } if dim > crate::quadrature::MAX_TENSOR_DIM => {
                Err(Error::usage(format!(
                    "Gauss-Hermite quadrature is limited to D <= 3, got D = {dim}"
                )))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResidualEstimate {
    pub value: f64,
    pub stderr: f64,
    pub method: KlMethod,
}

/// `u ↦ f(u) − f(a) − J_a (u − c)` for anchor `a` and centre `c`,
/// measured in `|·|²_Σ`.
pub(crate) struct ResidualKernel<'a> {
    model: &'a DriftModel,
    norm: &'a SigmaNorm,
    f_anchor: Vec<f64>,
    jac: Vec<f64>,
    center: Vec<f64>,
}

impl<'a> ResidualKernel<'a> {
    pub(crate) fn new(
        model: &'a DriftModel,
        norm: &'a SigmaNorm,
        anchor: &[f64],
        center: &[f64],
    ) -> Self {
        let d = model.dim();
        let mut f_anchor = vec![0.0; d];
        let mut jac = vec![0.0; d * d];
        model.drift_into(anchor, &mut f_anchor);
        model.jacobian_into(anchor, &mut jac);
        Self {
            model,
            norm,
            f_anchor,
            jac,
            center: center.to_vec(),
        }
    }

    /// `scratch` must hold `3·D` values.
    #[inline]
    pub(crate) fn eval(&self, u: &[f64], scratch: &mut [f64]) -> f64 {
        let d = u.len();
        let (gap, rest) = scratch.split_at_mut(d);
        let (offset, tmp) = rest.split_at_mut(d);
        for i in 0..d {
            offset[i] = u[i] - self.center[i];
        }
        matvec(&self.jac, offset, tmp);
        self.model.drift_into(u, gap);
        for i in 0..d {
            gap[i] -= self.f_anchor[i] + tmp[i];
        }
        self.norm.norm_sq_with(gap, offset)
    }
}

/// `|f(u) − f(m) − Df(m)(u − m)|²_Σ`.
pub fn linearization_residual(
    model: &DriftModel,
    sigma: &DMatrix<f64>,
    u: &DVector<f64>,
    m: &DVector<f64>,
) -> Result<f64> {
    let d = model.dim();
    check_vector(u, d, "u")?;
    check_vector(m, d, "m")?;
    let norm = SigmaNorm::new(sigma)?;
    let kernel = ResidualKernel::new(model, &norm, m.as_slice(), m.as_slice());
    let value = kernel.eval(u.as_slice(), &mut vec![0.0; 3 * d]);
    if !value.is_finite() {
        return Err(Error::NonFinite {
            what: "linearization residual".into(),
            input: u.as_slice().to_vec(),
        });
    }
    Ok(value)
}

/// `E |f(v) − f(m) − Df(m)(v − m)|²_Σ` for `v ~ N(m, C_ε)`.
///
/// Affine drifts return exactly 0 without sampling.
pub fn expected_residual(
    model: &DriftModel,
    sigma: &DMatrix<f64>,
    m: &DVector<f64>,
    c_eps: &DMatrix<f64>,
    method: SpaceMethod,
    seed: u64,
) -> Result<ResidualEstimate> {
    let d = model.dim();
    check_vector(m, d, "m")?;
    let norm = SigmaNorm::new(sigma)?;
    expected_gap(model, &norm, m, m, c_eps, method, seed, 0)
}

const MC_CHUNK: usize = 8192;

/// Running mean and centred second moment.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        let delta = x - self.mean;
        self.mean += delta / self.n;
        self.m2 += delta * (x - self.mean);
    }

    fn merge(self, other: Moments) -> Moments {
        if other.n == 0.0 {
            return self;
        }
        if self.n == 0.0 {
            return other;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        Moments {
            n,
            mean: self.mean + delta * other.n / n,
            m2: self.m2 + other.m2 + delta * delta * self.n * other.n / n,
        }
    }
}

/// Expectation of the residual kernel with anchor `anchor` and centre
/// `center` under `N(center, c_eps)`. `stream_key` separates the Monte Carlo
/// streams of different time nodes. Affine drifts are evaluated in closed
/// form.
#[allow(clippy::too_many_arguments)]
pub(crate) fn expected_gap(
    model: &DriftModel,
    norm: &SigmaNorm,
    anchor: &DVector<f64>,
    center: &DVector<f64>,
    c_eps: &DMatrix<f64>,
    method: SpaceMethod,
    seed: u64,
    stream_key: u64,
) -> Result<ResidualEstimate> {
    let d = model.dim();
    check_vector(anchor, d, "anchor")?;
    check_vector(center, d, "center")?;
    check_square(c_eps, d, "covariance")?;
    method.validate(d)?;
    let kernel = ResidualKernel::new(model, norm, anchor.as_slice(), center.as_slice());
    if model.is_linear() {
        // The gap is the constant A(c − a).
        let value = if anchor == center {
            0.0
        } else {
            kernel.eval(center.as_slice(), &mut vec![0.0; 3 * d])
        };
        return Ok(ResidualEstimate {
            value,
            stderr: 0.0,
            method: if value == 0.0 {
                KlMethod::ExactZero
            } else {
                method.tag()
            },
        });
    }
    let factor = to_row_major(&psd_factor(c_eps)?);
    let center = center.as_slice();

    let estimate = match method {
        SpaceMethod::GaussHermite { order } => {
            let rule = TensorRule::new(order, d)?;
            let mut u = vec![0.0; d];
            let mut scratch = vec![0.0; 3 * d];
            let mut value = 0.0;
            for i in 0..rule.len() {
                matvec(&factor, rule.point(i), &mut u);
                for (x, c) in u.iter_mut().zip(center) {
                    *x += c;
                }
                value += rule.weights[i] * kernel.eval(&u, &mut scratch);
            }
            ResidualEstimate {
                value,
                stderr: 0.0,
                method: KlMethod::GaussHermite,
            }
        }
        SpaceMethod::MonteCarlo { samples } => {
            let chunks: Vec<Moments> = (0..samples.div_ceil(MC_CHUNK))
                .into_par_iter()
                .map(|c| {
                    let len = MC_CHUNK.min(samples - c * MC_CHUNK);
                    let mut stream =
                        NormalStream::new(seed, Domain::Residual, stream_key, c as u64, d);
                    let mut z = vec![0.0; d];
                    let mut u = vec![0.0; d];
                    let mut scratch = vec![0.0; 3 * d];
                    let mut acc = Moments::default();
                    for _ in 0..len {
                        stream.fill_block(&mut z);
                        matvec(&factor, &z, &mut u);
                        for (x, c) in u.iter_mut().zip(center) {
                            *x += c;
                        }
                        acc.push(kernel.eval(&u, &mut scratch));
                    }
                    acc
                })
                .collect();
            let total = chunks.into_iter().fold(Moments::default(), Moments::merge);
            let var = total.m2 / (total.n - 1.0);
            ResidualEstimate {
                value: total.mean,
                stderr: (var / total.n).sqrt(),
                method: KlMethod::MonteCarlo,
            }
        }
    };
    if !estimate.value.is_finite() {
        return Err(Error::NonFinite {
            what: "expected linearization residual".into(),
            input: center.to_vec(),
        });
    }
    Ok(estimate)
}
