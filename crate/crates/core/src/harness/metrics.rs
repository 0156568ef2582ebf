use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Result};
use crate::localization::{align, extract_coordinates, LocationMap};
use crate::manifold::ManifoldPoint;
use crate::matrix_ops::{edm_from_gram, truncated_eig, SymmetricMatrix};
use crate::solver::Termination;

use super::{ObservedDistances, Scenario};

/// A trial counts as a success when `mse_a` falls below this.
pub const SUCCESS_THRESHOLD: f64 = 1e-6;

/// Reconstruction errors of a distance estimate against ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// `(1/|E|)‖P_E(D̂) - P_E(D)‖_F²`, `|E|` counting ordered pairs.
    pub mse_s: f64,
    /// `(1/n²)‖D̂ - D‖_F²`
    pub mse_a: f64,
    /// `sqrt(mse_a)`
    pub rmse: f64,
    /// Position error after Procrustes alignment to the true layout.
    pub rmse_position: f64,
}

/// Metrics of one solver run together with its run statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    #[serde(flatten)]
    pub metrics: Metrics,
    pub iterations: usize,
    pub converged: bool,
    pub termination: Option<Termination>,
    /// Seconds.
    pub wall_time: f64,
}

impl EvalResult {
    pub fn success(&self) -> bool {
        self.metrics.mse_a < SUCCESS_THRESHOLD
    }
}

fn distance_errors(d_hat: &SymmetricMatrix, s: &Scenario, obs: &ObservedDistances) -> Result<(f64, f64)> {
    if d_hat.n() != s.n || obs.n() != s.n {
        return Err(dim_err(format!(
            "estimate n = {}, scenario n = {}, observations n = {}",
            d_hat.n(),
            s.n,
            obs.n()
        )));
    }
    let e = obs.sample_set();
    let sampled: f64 = e
        .pairs()
        .iter()
        .map(|&(i, j)| (d_hat[(i, j)] - s.d_true[(i, j)]).powi(2))
        .sum();
    let mse_s = if e.is_empty() {
        0.0
    } else {
        2.0 * sampled / e.directed_len() as f64
    };
    let mse_a = (d_hat.as_matrix() - s.d_true.as_matrix()).norm_squared() / (s.n * s.n) as f64;
    Ok((mse_s, mse_a))
}

/// Coordinates whose distances best match `d_hat` in the classical-MDS sense.
fn mds_coordinates(d_hat: &SymmetricMatrix, k: usize) -> Result<LocationMap> {
    let n = d_hat.n();
    let d = d_hat.as_matrix();
    let row_means: Vec<f64> = (0..n).map(|i| d.row(i).sum() / n as f64).collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    let gram = SymmetricMatrix::from_upper_fn(n, |i, j| {
        -0.5 * (d[(i, j)] - row_means[i] - row_means[j] + grand)
    });
    let eig = truncated_eig(&gram, k)?;
    let mut coords = eig.vectors;
    for (j, l) in eig.values.iter().enumerate() {
        coords.column_mut(j).scale_mut(l.max(0.0).sqrt());
    }
    Ok(LocationMap::new(coords))
}

/// Scores a completed distance matrix; positions come from classical MDS of
/// `d_hat`.
pub fn evaluate(d_hat: &SymmetricMatrix, s: &Scenario, obs: &ObservedDistances) -> Result<Metrics> {
    let (mse_s, mse_a) = distance_errors(d_hat, s, obs)?;
    let est = mds_coordinates(d_hat, s.k)?;
    let (_, fit) = align(&est, &s.location_map())?;
    Ok(Metrics {
        mse_s,
        mse_a,
        rmse: mse_a.sqrt(),
        rmse_position: fit.rmse_position,
    })
}

/// Scores a solver estimate; positions are `Q Λ^{1/2}` aligned to the truth.
pub fn evaluate_estimate(y: &ManifoldPoint, s: &Scenario, obs: &ObservedDistances) -> Result<Metrics> {
    let d_hat = edm_from_gram(&y.to_ambient());
    let (mse_s, mse_a) = distance_errors(&d_hat, s, obs)?;
    let (_, fit) = align(&extract_coordinates(y), &s.location_map())?;
    Ok(Metrics {
        mse_s,
        mse_a,
        rmse: mse_a.sqrt(),
        rmse_position: fit.rmse_position,
    })
}
