use crate::error::{Error, Result};
use crate::harness::ObservedDistances;
use crate::manifold::{retract, tangent_inner, ManifoldPoint, TangentVector};

use super::objective::MaskedObjective;
use super::SolverConfig;

/// An accepted step.
#[derive(Debug, Clone)]
pub struct LineSearchOutcome {
    pub alpha: f64,
    /// Quadratic-model step the backtracking started from.
    pub alpha0: f64,
    pub y_next: ManifoldPoint,
    pub f_next: f64,
    pub backtracks: usize,
    pub(crate) residuals_next: Vec<f64>,
}

/// Initial step: exact minimizer of `t ↦ f(Y + tP)` before retraction, which
/// is a quadratic in `t` because `g` and `P_E` are linear.
pub(crate) fn quadratic_step(
    objective: &MaskedObjective,
    y: &ManifoldPoint,
    p: &TangentVector,
    residuals: &[f64],
) -> f64 {
    let gp = objective.edm_of_tangent(y, p);
    let num: f64 = residuals.iter().zip(&gp).map(|(r, d)| r * d).sum();
    let den: f64 = gp.iter().map(|d| d * d).sum();
    let alpha0 = -num / den;
    if alpha0.is_finite() && alpha0 > 0.0 {
        alpha0
    } else {
        1.0
    }
}

/// Armijo backtracking on the retracted objective, starting from the
/// quadratic-model step. `slope` is `<grad f(Y), P>` and must be negative.
pub(crate) fn backtrack(
    objective: &MaskedObjective,
    y: &ManifoldPoint,
    p: &TangentVector,
    residuals: &[f64],
    f0: f64,
    slope: f64,
    cfg: &SolverConfig,
) -> Result<LineSearchOutcome> {
    let alpha0 = quadratic_step(objective, y, p, residuals);
    let mut alpha = alpha0;
    for backtracks in 0..=cfg.max_backtracks {
        match retract(y, p, alpha) {
            Ok(y_next) => {
                let residuals_next = objective.residuals(&y_next);
                let f_next = objective.value(&residuals_next);
                if f_next <= f0 + cfg.armijo_c1 * alpha * slope {
                    return Ok(LineSearchOutcome {
                        alpha,
                        alpha0,
                        y_next,
                        f_next,
                        backtracks,
                        residuals_next,
                    });
                }
            }
            Err(Error::RankDeficientRetraction { .. }) => {}
            Err(e) => return Err(e),
        }
        alpha *= cfg.armijo_mu;
    }
    Err(Error::LineSearchFailure {
        backtracks: cfg.max_backtracks,
    })
}

/// Armijo line search along a descent direction `p` at `y`.
///
/// Fails with [`Error::InvalidConfig`] if `p` is not a descent direction.
pub fn line_search(
    y: &ManifoldPoint,
    p: &TangentVector,
    obs: &ObservedDistances,
    cfg: &SolverConfig,
) -> Result<LineSearchOutcome> {
    cfg.validate()?;
    let objective = MaskedObjective::new(obs);
    let residuals = objective.residuals(y);
    let f0 = objective.value(&residuals);
    let grad = objective.riemannian_grad(y, &residuals);
    let slope = tangent_inner(&grad, p)?;
    if !(slope < 0.0) {
        return Err(Error::InvalidConfig(format!(
            "search direction is not a descent direction (slope {slope:e})"
        )));
    }
    backtrack(&objective, y, p, &residuals, f0, slope, cfg)
}
