//! Drift functions `f: R^D → R^D` with analytic Jacobians.
//!
//! Every catalog drift is `C²` with second derivatives bounded by
//! `c(1 + |u|^s)`; `s` is carried as metadata only. Horizons for which the
//! mean ODE has a unique solution:
//!
//! - `Linear`: all horizons.
//! - `DoubleWell1D` (`u − u³`): all horizons, trajectories stay between the
//!   wells at ±1 once inside them.
//! - `Cubic1D` (`−u³`): all horizons, the flow is contracting.
//! - `Lorenz63`: all horizons, solutions remain in a bounded absorbing ball.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum DriftModel {
    /// `f(u) = A u + b`.
    Linear {
        a: DMatrix<f64>,
        b: DVector<f64>,
    },
    /// `f(u) = u − u³`.
    DoubleWell1D,
    /// `f(u) = −u³`.
    Cubic1D,
    Lorenz63 {
        sigma: f64,
        rho: f64,
        beta: f64,
    },
}

impl DriftModel {
    pub fn linear(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        if !a.is_square() || a.nrows() != b.len() || b.is_empty() {
            return Err(Error::usage(format!(
                "linear drift needs a square A matching b, got {}x{} and {}",
                a.nrows(),
                a.ncols(),
                b.len()
            )));
        }
        if a.iter().chain(b.iter()).any(|x| !x.is_finite()) {
            return Err(Error::usage("linear drift has non-finite coefficients"));
        }
        Ok(DriftModel::Linear { a, b })
    }

    /// `f(u) = −u` in dimension 1.
    pub fn ou1d() -> Self {
        DriftModel::Linear {
            a: DMatrix::from_element(1, 1, -1.0),
            b: DVector::zeros(1),
        }
    }

    /// `f ≡ 0` in dimension `dim`.
    pub fn zero(dim: usize) -> Self {
        DriftModel::Linear {
            a: DMatrix::zeros(dim, dim),
            b: DVector::zeros(dim),
        }
    }

    pub fn lorenz63() -> Self {
        DriftModel::Lorenz63 {
            sigma: 10.0,
            rho: 28.0,
            beta: 8.0 / 3.0,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            DriftModel::Linear { b, .. } => b.len(),
            DriftModel::DoubleWell1D | DriftModel::Cubic1D => 1,
            DriftModel::Lorenz63 { .. } => 3,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DriftModel::Linear { .. } => "linear",
            DriftModel::DoubleWell1D => "double-well",
            DriftModel::Cubic1D => "cubic",
            DriftModel::Lorenz63 { .. } => "lorenz63",
        }
    }

    /// Exponent `s` in the growth bound on second derivatives.
    pub fn growth_exponent(&self) -> u32 {
        match self {
            DriftModel::Linear { .. } | DriftModel::Lorenz63 { .. } => 0,
            DriftModel::DoubleWell1D | DriftModel::Cubic1D => 1,
        }
    }

    /// Affine drifts are their own linearization everywhere.
    pub fn is_linear(&self) -> bool {
        matches!(self, DriftModel::Linear { .. })
    }

    /// Unchecked evaluation for hot loops: `out = f(u)`.
    #[inline]
    pub fn drift_into(&self, u: &[f64], out: &mut [f64]) {
        match self {
            DriftModel::Linear { a, b } => {
                let d = b.len();
                for i in 0..d {
                    let mut acc = b[i];
                    for j in 0..d {
                        acc += a[(i, j)] * u[j];
                    }
                    out[i] = acc;
                }
            }
            DriftModel::DoubleWell1D => out[0] = u[0] - u[0] * u[0] * u[0],
            DriftModel::Cubic1D => out[0] = -(u[0] * u[0] * u[0]),
            DriftModel::Lorenz63 { sigma, rho, beta } => {
                let (x, y, z) = (u[0], u[1], u[2]);
                out[0] = sigma * (y - x);
                out[1] = x * (rho - z) - y;
                out[2] = x * y - beta * z;
            }
        }
    }

    /// Unchecked Jacobian into a row-major `D × D` buffer.
    #[inline]
    pub fn jacobian_into(&self, u: &[f64], out: &mut [f64]) {
        match self {
            DriftModel::Linear { a, .. } => {
                let d = a.nrows();
                for i in 0..d {
                    for j in 0..d {
                        out[i * d + j] = a[(i, j)];
                    }
                }
            }
            DriftModel::DoubleWell1D => out[0] = 1.0 - 3.0 * u[0] * u[0],
            DriftModel::Cubic1D => out[0] = -3.0 * u[0] * u[0],
            DriftModel::Lorenz63 { sigma, rho, beta } => {
                let (x, y, z) = (u[0], u[1], u[2]);
                out.copy_from_slice(&[-sigma, *sigma, 0.0, rho - z, -1.0, -x, y, x, -beta]);
            }
        }
    }

    fn check_input(&self, u: &DVector<f64>) -> Result<()> {
        if u.len() != self.dim() {
            return Err(Error::usage(format!(
                "{} drift expects dimension {}, got {}",
                self.name(),
                self.dim(),
                u.len()
            )));
        }
        if u.iter().any(|x| !x.is_finite()) {
            return Err(Error::usage("drift evaluated at a non-finite point"));
        }
        Ok(())
    }

    pub fn eval_drift(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_input(u)?;
        let mut out = DVector::zeros(self.dim());
        self.drift_into(u.as_slice(), out.as_mut_slice());
        if out.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                what: format!("{} drift", self.name()),
                input: u.as_slice().to_vec(),
            });
        }
        Ok(out)
    }

    pub fn eval_jacobian(&self, u: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_input(u)?;
        let d = self.dim();
        let mut buf = vec![0.0; d * d];
        self.jacobian_into(u.as_slice(), &mut buf);
        if buf.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                what: format!("{} Jacobian", self.name()),
                input: u.as_slice().to_vec(),
            });
        }
        Ok(DMatrix::from_row_slice(d, d, &buf))
    }
}

/// Drift selection by name plus a flat parameter list, as used in config files.
///
/// | name          | params                                          |
/// |---------------|-------------------------------------------------|
/// | `linear`      | `D, A (row-major, D²), b (D)`                   |
/// | `ou`          | none (`f(u) = −u`, D = 1)                       |
/// | `double-well` | none                                            |
/// | `cubic`       | none                                            |
/// | `lorenz63`    | none, or `σ, ρ, β`                              |
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftSpec {
    pub name: String,
    #[serde(default)]
    pub params: Vec<f64>,
}

impl DriftSpec {
    pub fn new(name: impl Into<String>, params: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            params,
        }
    }

    pub fn build(&self) -> Result<DriftModel> {
        let p = &self.params;
        let no_params = |model: DriftModel| {
            if p.is_empty() {
                Ok(model)
            } else {
                Err(Error::usage(format!(
                    "drift '{}' takes no parameters",
                    self.name
                )))
            }
        };
        match self.name.as_str() {
            "double-well" => no_params(DriftModel::DoubleWell1D),
            "cubic" => no_params(DriftModel::Cubic1D),
            "ou" => no_params(DriftModel::ou1d()),
            "lorenz63" => match p.as_slice() {
                [] => Ok(DriftModel::lorenz63()),
                [sigma, rho, beta] => Ok(DriftModel::Lorenz63 {
                    sigma: *sigma,
                    rho: *rho,
                    beta: *beta,
                }),
                _ => Err(Error::usage("lorenz63 takes 0 or 3 parameters")),
            },
            "linear" => {
                let d = match p.first() {
                    Some(&d) if d >= 1.0 && d.fract() == 0.0 => d as usize,
                    _ => {
                        return Err(Error::usage(
                            "linear drift: first parameter is the dimension",
                        ))
                    }
                };
                if p.len() != 1 + d * d + d {
                    return Err(Error::usage(format!(
                        "linear drift of dimension {d} needs {} parameters, got {}",
                        1 + d * d + d,
                        p.len()
                    )));
                }
                let a = DMatrix::from_row_slice(d, d, &p[1..1 + d * d]);
                let b = DVector::from_column_slice(&p[1 + d * d..]);
                DriftModel::linear(a, b)
            }
            other => Err(Error::usage(format!("unknown drift '{other}'"))),
        }
    }
}

/// Central-difference Jacobian with step `1e-6·(1 + |u|)`.
pub fn finite_difference_jacobian(model: &DriftModel, u: &DVector<f64>) -> DMatrix<f64> {
    let d = model.dim();
    let h = 1e-6 * (1.0 + u.norm());
    let mut jac = DMatrix::zeros(d, d);
    let mut plus = vec![0.0; d];
    let mut minus = vec![0.0; d];
    let mut probe = u.as_slice().to_vec();
    for j in 0..d {
        probe[j] = u[j] + h;
        model.drift_into(&probe, &mut plus);
        probe[j] = u[j] - h;
        model.drift_into(&probe, &mut minus);
        probe[j] = u[j];
        for i in 0..d {
            jac[(i, j)] = (plus[i] - minus[i]) / (2.0 * h);
        }
    }
    jac
}

pub const JACOBIAN_TOL: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct JacobianReport {
    /// Max entrywise `|Df − FD| / max(1, ‖Df‖_max)` per point.
    pub discrepancies: Vec<f64>,
    pub tolerance: f64,
}

impl JacobianReport {
    pub fn passed(&self) -> bool {
        self.discrepancies.iter().all(|&d| d <= self.tolerance)
    }

    pub fn worst(&self) -> f64 {
        self.discrepancies.iter().copied().fold(0.0, f64::max)
    }

    pub fn failures(&self) -> Vec<usize> {
        self.discrepancies
            .iter()
            .enumerate()
            .filter(|(_, d)| !(**d <= self.tolerance))
            .map(|(i, _)| i)
            .collect()
    }
}

pub fn check_jacobian(model: &DriftModel, points: &[DVector<f64>]) -> Result<JacobianReport> {
    if points.is_empty() {
        return Err(Error::usage("check_jacobian needs at least one point"));
    }
    let mut discrepancies = Vec::with_capacity(points.len());
    for u in points {
        let analytic = model.eval_jacobian(u)?;
        let fd = finite_difference_jacobian(model, u);
        let scale = analytic.iter().fold(1.0_f64, |m, x| m.max(x.abs()));
        let worst = analytic
            .iter()
            .zip(fd.iter())
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        discrepancies.push(worst / scale);
    }
    Ok(JacobianReport {
        discrepancies,
        tolerance: JACOBIAN_TOL,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn double_well_values() {
        let m = DriftModel::DoubleWell1D;
        assert_eq!(m.eval_drift(&v(&[0.0])).unwrap()[0], 0.0);
        assert_eq!(m.eval_drift(&v(&[2.0])).unwrap()[0], -6.0);
        assert_eq!(m.eval_jacobian(&v(&[0.0])).unwrap()[(0, 0)], 1.0);
    }

    #[test]
    fn cubic_jacobian() {
        assert_eq!(
            DriftModel::Cubic1D.eval_jacobian(&v(&[1.0])).unwrap()[(0, 0)],
            -3.0
        );
    }

    #[test]
    fn rotation_drift() {
        let m = DriftModel::linear(
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]),
            DVector::zeros(2),
        )
        .unwrap();
        assert_eq!(m.eval_drift(&v(&[1.0, 0.0])).unwrap(), v(&[0.0, -1.0]));
    }

    #[test]
    fn dimension_mismatch_is_usage_error() {
        let err = DriftModel::DoubleWell1D
            .eval_drift(&v(&[1.0, 2.0]))
            .unwrap_err();
        assert!(matches!(err, Error::Usage(_)));
    }

    #[test]
    fn overflow_is_numeric_error_with_input() {
        let err = DriftModel::Cubic1D.eval_drift(&v(&[1e200])).unwrap_err();
        match err {
            Error::NonFinite { input, .. } => assert_eq!(input, vec![1e200]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn linear_fd_check_is_tight() {
        let m = DriftModel::linear(
            DMatrix::from_row_slice(2, 2, &[0.3, -1.0, 2.0, 0.1]),
            v(&[1.0, -2.0]),
        )
        .unwrap();
        let pts = vec![v(&[0.0, 0.0]), v(&[3.0, -4.0]), v(&[-10.0, 7.5])];
        let report = check_jacobian(&m, &pts).unwrap();
        assert!(report.worst() < 1e-8, "{}", report.worst());
    }

    #[test]
    fn double_well_fd_check() {
        let pts = vec![v(&[-1.0]), v(&[0.0]), v(&[1.0])];
        assert!(check_jacobian(&DriftModel::DoubleWell1D, &pts)
            .unwrap()
            .passed());
    }

    #[test]
    fn empty_points_rejected() {
        assert!(check_jacobian(&DriftModel::Cubic1D, &[]).is_err());
    }

    #[test]
    fn spec_parsing() {
        let lin = DriftSpec::new("linear", vec![1.0, -1.0, 0.0])
            .build()
            .unwrap();
        assert_eq!(lin, DriftModel::ou1d());
        assert_eq!(
            DriftSpec::new("ou", vec![]).build().unwrap(),
            DriftModel::ou1d()
        );
        assert!(DriftSpec::new("linear", vec![2.0, 1.0]).build().is_err());
        assert!(DriftSpec::new("cubic", vec![1.0]).build().is_err());
        assert!(DriftSpec::new("quintic", vec![]).build().is_err());
        assert_eq!(DriftSpec::new("lorenz63", vec![]).build().unwrap().dim(), 3);
    }

    fn catalog() -> Vec<DriftModel> {
        vec![
            DriftModel::DoubleWell1D,
            DriftModel::Cubic1D,
            DriftModel::lorenz63(),
            DriftModel::linear(
                DMatrix::from_row_slice(2, 2, &[-1.0, 0.5, 0.2, -0.3]),
                v(&[0.1, 0.2]),
            )
            .unwrap(),
        ]
    }

    proptest! {
        #[test]
        fn catalog_jacobians_match_central_differences(
            xs in proptest::collection::vec(-20.0f64..20.0, 3)
        ) {
            for model in catalog() {
                let u = v(&xs[..model.dim()]);
                let report = check_jacobian(&model, &[u]).unwrap();
                prop_assert!(report.passed(), "{} {:?}", model.name(), report.discrepancies);
            }
        }

        #[test]
        fn linear_drift_equals_its_linearization(
            u in proptest::collection::vec(-50.0f64..50.0, 2),
            m in proptest::collection::vec(-50.0f64..50.0, 2),
        ) {
            let model = &catalog()[3];
            let (u, m) = (v(&u), v(&m));
            let lin = model.eval_drift(&m).unwrap()
                + model.eval_jacobian(&m).unwrap() * (&u - &m);
            let gap = (model.eval_drift(&u).unwrap() - lin).amax();
            let bound = 1e-13 * (u.norm() + m.norm()).powi(2).max(1.0);
            prop_assert!(gap <= bound, "gap {gap} bound {bound}");
        }
    }
}
