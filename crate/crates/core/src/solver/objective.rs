//! The masked least-squares objective `f(Y) = ½‖P_E(g(Y)) - P_E(D_obs)‖_F²`.
//!
//! [`cost`] and [`euclidean_gradient`] follow the dense definitions and are
//! the reference route. [`MaskedObjective`] evaluates the same quantities
//! touching only the sampled pairs and the thin factors of `Y`; the solver
//! runs on it.

use nalgebra::DMatrix;

use crate::error::{dim_err, Result};
use crate::harness::ObservedDistances;
use crate::manifold::{project_from_product, ManifoldPoint, TangentVector};
use crate::matrix_ops::{apply_mask, edm_adjoint, edm_from_gram, SymmetricMatrix};

fn check_dims(y: &ManifoldPoint, obs: &ObservedDistances) -> Result<()> {
    if y.n() != obs.n() {
        return Err(dim_err(format!(
            "point has n = {} but observations have n = {}",
            y.n(),
            obs.n()
        )));
    }
    Ok(())
}

/// `P_E(g(Y)) - P_E(D_obs)` as a dense matrix.
pub fn masked_residual(y: &ManifoldPoint, obs: &ObservedDistances) -> Result<SymmetricMatrix> {
    check_dims(y, obs)?;
    masked_residual_of_gram(&y.to_ambient(), obs)
}

fn masked_residual_of_gram(y: &SymmetricMatrix, obs: &ObservedDistances) -> Result<SymmetricMatrix> {
    let d = edm_from_gram(y);
    apply_mask(&d.sub(obs.values())?, obs.sample_set())
}

/// The objective extended to every symmetric `Y`, not just rank-`k` PSD ones.
pub fn cost_of_gram(y: &SymmetricMatrix, obs: &ObservedDistances) -> Result<f64> {
    let r = masked_residual_of_gram(y, obs)?;
    Ok(0.5 * r.frobenius_norm().powi(2))
}

/// `f(Y) = ½‖P_E(g(Y)) - P_E(D_obs)‖_F²`.
pub fn cost(y: &ManifoldPoint, obs: &ObservedDistances) -> Result<f64> {
    let r = masked_residual(y, obs)?;
    Ok(0.5 * r.frobenius_norm().powi(2))
}

/// `∇f(Y) = 2 diag(R 1) - 2 R` with `R` the masked residual.
pub fn euclidean_gradient(y: &ManifoldPoint, obs: &ObservedDistances) -> Result<SymmetricMatrix> {
    Ok(edm_adjoint(&masked_residual(y, obs)?))
}

/// Sparse evaluation of the objective over the sampled pairs.
#[derive(Debug, Clone)]
pub struct MaskedObjective {
    n: usize,
    pairs: Vec<(usize, usize)>,
    observed: Vec<f64>,
}

impl MaskedObjective {
    pub fn new(obs: &ObservedDistances) -> Self {
        let pairs = obs.sample_set().pairs().to_vec();
        let observed = pairs.iter().map(|&(i, j)| obs.values()[(i, j)]).collect();
        Self {
            n: obs.n(),
            pairs,
            observed,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `‖P_E(D_obs)‖_F`
    pub fn observed_norm(&self) -> f64 {
        (2.0 * self.observed.iter().map(|d| d * d).sum::<f64>()).sqrt()
    }

    /// Residual `‖x_i - x_j‖² - d_ij` for each sampled unordered pair.
    pub fn residuals(&self, y: &ManifoldPoint) -> Vec<f64> {
        let x = y.factor();
        let k = x.ncols();
        self.pairs
            .iter()
            .zip(&self.observed)
            .map(|(&(i, j), &d)| {
                let mut s = 0.0;
                for l in 0..k {
                    let diff = x[(i, l)] - x[(j, l)];
                    s += diff * diff;
                }
                s - d
            })
            .collect()
    }

    /// `f` from pair residuals; each unordered pair appears twice in the
    /// Frobenius norm.
    pub fn value(&self, residuals: &[f64]) -> f64 {
        residuals.iter().map(|r| r * r).sum()
    }

    /// `∇f(Y) · Q` for `∇f = 2 diag(R 1) - 2 R`.
    fn gradient_times(&self, residuals: &[f64], q: &DMatrix<f64>) -> DMatrix<f64> {
        let k = q.ncols();
        let mut row_sums = vec![0.0; self.n];
        let mut rq = DMatrix::zeros(self.n, k);
        for (&(i, j), &r) in self.pairs.iter().zip(residuals) {
            row_sums[i] += r;
            row_sums[j] += r;
            for l in 0..k {
                rq[(i, l)] += r * q[(j, l)];
                rq[(j, l)] += r * q[(i, l)];
            }
        }
        let mut out = rq * -2.0;
        for i in 0..self.n {
            for l in 0..k {
                out[(i, l)] += 2.0 * row_sums[i] * q[(i, l)];
            }
        }
        out
    }

    pub fn riemannian_grad(&self, y: &ManifoldPoint, residuals: &[f64]) -> TangentVector {
        project_from_product(y, self.gradient_times(residuals, y.q()))
    }

    /// `g(ambient(V))` restricted to the sampled pairs.
    pub fn edm_of_tangent(&self, y: &ManifoldPoint, v: &TangentVector) -> Vec<f64> {
        // V_ij = z_i·q_j + q_i·up_j with z = Q B + Up.
        let q = y.q();
        let up = v.up();
        let z = q * v.b() + up;
        let k = q.ncols();
        let entry = |i: usize, j: usize| -> f64 {
            let mut s = 0.0;
            for l in 0..k {
                s += z[(i, l)] * q[(j, l)] + q[(i, l)] * up[(j, l)];
            }
            s
        };
        self.pairs
            .iter()
            .map(|&(i, j)| entry(i, i) + entry(j, j) - 2.0 * entry(i, j))
            .collect()
    }
}
