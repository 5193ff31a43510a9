//! Freidlin–Wentzell action of piecewise-linear paths.

use nalgebra::{DMatrix, DVector};

use crate::drift::DriftModel;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::kl::Divergence;
use crate::linalg::{check_vector, SigmaNorm};

/// `I(φ) = ½ ∫₀ᵀ |φ'(t) − f(φ(t))|²_Σ dt` for the piecewise-linear path
/// through `path[k]` at the grid nodes, by the composite midpoint rule.
///
/// A path that does not start at `v0` has infinite action.
pub fn rate_functional(
    model: &DriftModel,
    sigma: &DMatrix<f64>,
    grid: &TimeGrid,
    path: &[DVector<f64>],
    v0: &DVector<f64>,
) -> Result<Divergence> {
    let d = model.dim();
    if path.len() != grid.len() {
        return Err(Error::usage(format!(
            "path has {} nodes, grid has {}",
            path.len(),
            grid.len()
        )));
    }
    check_vector(v0, d, "v0")?;
    for p in path {
        check_vector(p, d, "path node")?;
    }
    let norm = SigmaNorm::new(sigma)?;
    if path[0] != *v0 {
        return Ok(Divergence::Infinite);
    }
    let dt = grid.dt();
    let mut mid = vec![0.0; d];
    let mut f = vec![0.0; d];
    let mut gap = vec![0.0; d];
    let mut scratch = vec![0.0; d];
    let mut total = 0.0;
    for w in path.windows(2) {
        for i in 0..d {
            mid[i] = 0.5 * (w[0][i] + w[1][i]);
        }
        model.drift_into(&mid, &mut f);
        for i in 0..d {
            gap[i] = (w[1][i] - w[0][i]) / dt - f[i];
        }
        total += norm.norm_sq_with(&gap, &mut scratch);
    }
    let value = 0.5 * dt * total;
    if !value.is_finite() {
        return Err(Error::NonFinite {
            what: "rate functional".into(),
            input: v0.as_slice().to_vec(),
        });
    }
    Ok(Divergence::Finite(value))
}
