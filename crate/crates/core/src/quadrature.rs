//! Gauss–Hermite rules for expectations under the standard normal.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Largest dimension for which tensorized rules are offered.
pub const MAX_TENSOR_DIM: usize = 3;

/// One-dimensional probabilists' Gauss–Hermite rule: `Σ w_i g(z_i) ≈ E g(Z)`,
/// `Z ~ N(0, 1)`, exact for polynomials of degree `< 2·order`.
#[derive(Debug, Clone)]
pub struct HermiteRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl HermiteRule {
    /// Golub–Welsch: nodes are the eigenvalues of the Jacobi matrix with
    /// off-diagonal `√k`, weights the squared first eigenvector components.
    pub fn new(order: usize) -> Result<Self> {
        if order == 0 || order > 100 {
            return Err(Error::usage(format!(
                "Gauss-Hermite order must be in 1..=100, got {order}"
            )));
        }
        let mut jacobi = DMatrix::zeros(order, order);
        for k in 1..order {
            let off = (k as f64).sqrt();
            jacobi[(k - 1, k)] = off;
            jacobi[(k, k - 1)] = off;
        }
        let eig = SymmetricEigen::new(jacobi);
        let mut pairs: Vec<(f64, f64)> = (0..order)
            .map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2)))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        Ok(Self {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1 / total).collect(),
        })
    }
}

/// Tensor-product rule in `dim ≤ 3` dimensions, nodes stored flat.
#[derive(Debug, Clone)]
pub struct TensorRule {
    pub dim: usize,
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl TensorRule {
    pub fn new(order: usize, dim: usize) -> Result<Self> {
        if dim == 0 || dim > MAX_TENSOR_DIM {
            return Err(Error::usage(format!(
                "Gauss-Hermite quadrature supports dimensions 1..={MAX_TENSOR_DIM}, got {dim}"
            )));
        }
        let rule = HermiteRule::new(order)?;
        let count = order.pow(dim as u32);
        let mut points = Vec::with_capacity(count * dim);
        let mut weights = Vec::with_capacity(count);
        for flat in 0..count {
            let mut rest = flat;
            let mut w = 1.0;
            for _ in 0..dim {
                let i = rest % order;
                rest /= order;
                points.push(rule.nodes[i]);
                w *= rule.weights[i];
            }
            weights.push(w);
        }
        Ok(Self {
            dim,
            points,
            weights,
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }
}
