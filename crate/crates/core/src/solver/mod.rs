//! Riemannian nonlinear conjugate gradient for fixed-rank EDM completion.
//!
//! Each iteration computes the Euclidean gradient of the masked objective,
//! projects it onto the tangent space, mixes in the transported previous
//! direction with a β rule, runs an Armijo line search seeded by the exact
//! quadratic step, and retracts by eigenvalue hard-thresholding.

mod line_search;
mod objective;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::ObservedDistances;
use crate::manifold::{tangent_inner, transport, ManifoldPoint, TangentVector};
use crate::matrix_ops::{truncated_eig, SymmetricMatrix};

pub use line_search::{line_search, LineSearchOutcome};
pub use objective::{cost, cost_of_gram, euclidean_gradient, masked_residual, MaskedObjective};

/// Conjugate update parameter rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum BetaRule {
    #[default]
    PolakRibierePlus,
    FletcherReeves,
    SteepestDescent,
}

impl std::str::FromStr for BetaRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pr+" | "prp+" | "polak-ribiere-plus" | "polakribiereplus" => Ok(Self::PolakRibierePlus),
            "fr" | "fletcher-reeves" | "fletcherreeves" => Ok(Self::FletcherReeves),
            "sd" | "steepest-descent" | "steepestdescent" => Ok(Self::SteepestDescent),
            other => Err(Error::InvalidConfig(format!("unknown beta rule '{other}'"))),
        }
    }
}

/// Stopping tolerance on `‖P_E(D_i) - P_E(D_obs)‖_F`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Tolerance {
    Absolute(f64),
    /// Multiple of `‖P_E(D_obs)‖_F`.
    Relative(f64),
}

impl Tolerance {
    pub fn resolve(&self, observed_norm: f64) -> f64 {
        match *self {
            Tolerance::Absolute(eps) => eps,
            Tolerance::Relative(rel) => rel * observed_norm,
        }
    }

    fn raw(&self) -> f64 {
        match *self {
            Tolerance::Absolute(v) | Tolerance::Relative(v) => v,
        }
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance::Relative(1e-6)
    }
}

/// How the first iterate is chosen when no explicit start point is given.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum InitStrategy {
    /// Classical MDS on the zero-filled observations.
    #[default]
    Spectral,
    /// Seeded Gaussian factor `X`, `Y = X Xᵀ`.
    RandomFactor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Embedding dimension, the rank of `Y`.
    pub k: usize,
    pub epsilon: Tolerance,
    pub max_iters: usize,
    /// Backtracking shrink factor.
    pub armijo_mu: f64,
    /// Sufficient-decrease constant.
    pub armijo_c1: f64,
    pub max_backtracks: usize,
    pub beta_rule: BetaRule,
    pub init: InitStrategy,
    pub seed: u64,
}

impl SolverConfig {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            epsilon: Tolerance::default(),
            max_iters: 500,
            armijo_mu: 0.5,
            armijo_c1: 1e-4,
            max_backtracks: 25,
            beta_rule: BetaRule::default(),
            init: InitStrategy::default(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.k < 1 {
            return bad("k must be at least 1");
        }
        if !(self.armijo_mu > 0.0 && self.armijo_mu < 1.0) {
            return bad("armijo_mu must lie in (0, 1)");
        }
        if !(self.armijo_c1 > 0.0 && self.armijo_c1 < 1.0) {
            return bad("armijo_c1 must lie in (0, 1)");
        }
        if !(self.epsilon.raw() >= 0.0) {
            return bad("epsilon must be non-negative");
        }
        Ok(())
    }
}

/// Diagnostics of one accepted iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// 1-based iteration index.
    pub iter: usize,
    /// Objective before the step.
    pub f_prev: f64,
    /// Objective after the step.
    pub f: f64,
    /// `‖grad f‖` at the start of the iteration.
    pub grad_norm: f64,
    pub alpha: f64,
    pub beta: f64,
    /// `<grad f, P>`, negative for a descent direction.
    pub slope: f64,
    pub backtracks: usize,
    /// Direction was reset to steepest descent.
    pub restarted: bool,
    pub armijo_c1: f64,
}

impl IterationRecord {
    /// `f ≤ f_prev + c1·α·slope`
    pub fn armijo_holds(&self) -> bool {
        self.f <= self.f_prev + self.armijo_c1 * self.alpha * self.slope
    }

    /// `‖P_E(D_i) - P_E(D_obs)‖_F` after the step.
    pub fn residual(&self) -> f64 {
        (2.0 * self.f).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    Converged,
    MaxIterations,
    /// Riemannian gradient vanished exactly above tolerance.
    Stationary,
    /// No acceptable step even after a steepest-descent restart.
    LineSearchFailed,
}

#[derive(Debug, Clone)]
pub struct SolverReport {
    pub iterations: usize,
    pub initial_residual: f64,
    pub final_residual: f64,
    /// Absolute stopping threshold actually used.
    pub epsilon: f64,
    pub trace: Vec<IterationRecord>,
    pub converged: bool,
    pub termination: Termination,
    pub estimate: ManifoldPoint,
}

/// Loop variables of the iteration.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub y: ManifoldPoint,
    /// Conjugate direction for the next step, tangent at `y`:
    /// `-grad + β·transport(P_prev)`, or `-grad` before the first step.
    pub p: TangentVector,
    /// `β` used to form `p`.
    pub beta: f64,
    pub grad: TangentVector,
    pub f_value: f64,
    pub iter: usize,
    residuals: Vec<f64>,
}

/// `β` for the next direction. `old_grad` lives at the previous iterate,
/// the other two at the new one.
pub fn choose_beta(
    old_grad: &TangentVector,
    new_grad: &TangentVector,
    transported_old_grad: &TangentVector,
    rule: BetaRule,
) -> Result<f64> {
    if rule == BetaRule::SteepestDescent {
        return Ok(0.0);
    }
    let old_sq = tangent_inner(old_grad, old_grad)?;
    if old_sq <= 0.0 {
        return Ok(0.0);
    }
    let beta = match rule {
        BetaRule::FletcherReeves => tangent_inner(new_grad, new_grad)? / old_sq,
        BetaRule::PolakRibierePlus => {
            let diff = new_grad.axpby(1.0, transported_old_grad, -1.0);
            (tangent_inner(new_grad, &diff)? / old_sq).max(0.0)
        }
        BetaRule::SteepestDescent => 0.0,
    };
    Ok(if beta.is_finite() { beta } else { 0.0 })
}

/// Zero-filled classical MDS: top-`k` eigenpairs of `-½ J D_obs J`, with
/// eigenvalues floored at `1e-6·λ_1` so the start lies on the manifold.
pub fn spectral_init(obs: &ObservedDistances, k: usize) -> Result<ManifoldPoint> {
    let n = obs.n();
    let d = obs.values().as_matrix();
    let row_means: Vec<f64> = (0..n).map(|i| d.row(i).sum() / n as f64).collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    let gram = SymmetricMatrix::from_upper_fn(n, |i, j| {
        -0.5 * (d[(i, j)] - row_means[i] - row_means[j] + grand)
    });
    let mut eig = truncated_eig(&gram, k)?;
    let top = eig.values[0];
    let floor = if top > 0.0 { 1e-6 * top } else { 1.0 };
    for v in eig.values.iter_mut() {
        if !(*v >= floor) {
            *v = floor;
        }
    }
    ManifoldPoint::new(eig.vectors, eig.values)
}

/// Seeded Gaussian factor scaled so that its mean squared pair distance
/// matches the observations.
pub fn random_init(obs: &ObservedDistances, k: usize, seed: u64) -> Result<ManifoldPoint> {
    let n = obs.n();
    let pairs = obs.sample_set().pairs();
    let mean_d = if pairs.is_empty() {
        1.0
    } else {
        pairs.iter().map(|&(i, j)| obs.values()[(i, j)]).sum::<f64>() / pairs.len() as f64
    };
    let sigma = (mean_d.max(f64::MIN_POSITIVE) / (2.0 * k as f64)).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = DMatrix::from_fn(n, k, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        sigma * z
    });
    ManifoldPoint::from_factor(&x)
}

/// Stepwise driver. [`solve`] runs it to completion; tests use it to inspect
/// intermediate states.
#[derive(Debug, Clone)]
pub struct Solver {
    objective: MaskedObjective,
    cfg: SolverConfig,
    epsilon: f64,
    state: SolverState,
    trace: Vec<IterationRecord>,
}

impl Solver {
    pub fn new(obs: &ObservedDistances, cfg: &SolverConfig, init: Option<ManifoldPoint>) -> Result<Self> {
        cfg.validate()?;
        if cfg.k >= obs.n() {
            return Err(Error::InvalidConfig(format!(
                "rank k = {} must be smaller than n = {}",
                cfg.k,
                obs.n()
            )));
        }
        let y = match init {
            Some(y) => {
                if y.n() != obs.n() || y.k() != cfg.k {
                    return Err(Error::InvalidDimension(format!(
                        "initial point is ({}, {}) but problem is ({}, {})",
                        y.n(),
                        y.k(),
                        obs.n(),
                        cfg.k
                    )));
                }
                y
            }
            None => match cfg.init {
                InitStrategy::Spectral => spectral_init(obs, cfg.k)?,
                InitStrategy::RandomFactor => random_init(obs, cfg.k, cfg.seed)?,
            },
        };
        let objective = MaskedObjective::new(obs);
        let epsilon = cfg.epsilon.resolve(objective.observed_norm());
        let residuals = objective.residuals(&y);
        let f_value = objective.value(&residuals);
        let grad = objective.riemannian_grad(&y, &residuals);
        let state = SolverState {
            p: grad.scale(-1.0),
            beta: 0.0,
            y,
            grad,
            f_value,
            iter: 0,
            residuals,
        };
        Ok(Self {
            objective,
            cfg: cfg.clone(),
            epsilon,
            state,
            trace: Vec::new(),
        })
    }

    pub fn state(&self) -> &SolverState {
        &self.state
    }

    pub fn trace(&self) -> &[IterationRecord] {
        &self.trace
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn residual_norm(&self) -> f64 {
        (2.0 * self.state.f_value).sqrt()
    }

    pub fn is_converged(&self) -> bool {
        self.residual_norm() < self.epsilon
    }

    /// One iteration. On a line-search failure along the conjugate
    /// direction, retries once along `-grad` before giving up.
    pub fn step(&mut self) -> Result<&IterationRecord> {
        let cfg = &self.cfg;
        let st = &self.state;
        let grad_norm = st.grad.norm();
        let steepest = st.grad.scale(-1.0);

        let mut p = st.p.clone();
        let mut beta = st.beta;
        let mut restarted = false;
        let mut slope = tangent_inner(&st.grad, &p)?;
        if slope >= -1e-12 * grad_norm * p.norm() {
            restarted = beta != 0.0;
            p = steepest.clone();
            beta = 0.0;
            slope = -grad_norm * grad_norm;
        }
        if !(slope < 0.0) {
            return Err(Error::LineSearchFailure { backtracks: 0 });
        }

        let outcome = match line_search::backtrack(
            &self.objective,
            &st.y,
            &p,
            &st.residuals,
            st.f_value,
            slope,
            cfg,
        ) {
            Ok(o) => o,
            Err(Error::LineSearchFailure { .. }) if beta != 0.0 => {
                log::debug!("iteration {}: conjugate step failed, restarting along -grad", st.iter + 1);
                p = steepest;
                beta = 0.0;
                slope = -grad_norm * grad_norm;
                restarted = true;
                line_search::backtrack(&self.objective, &st.y, &p, &st.residuals, st.f_value, slope, cfg)?
            }
            Err(e) => return Err(e),
        };

        let record = IterationRecord {
            iter: st.iter + 1,
            f_prev: st.f_value,
            f: outcome.f_next,
            grad_norm,
            alpha: outcome.alpha,
            beta,
            slope,
            backtracks: outcome.backtracks,
            restarted,
            armijo_c1: cfg.armijo_c1,
        };
        log::trace!(
            "iter {:4} f {:.6e} |grad| {:.3e} alpha {:.3e} beta {:.3e} backtracks {}",
            record.iter,
            record.f,
            record.grad_norm,
            record.alpha,
            record.beta,
            record.backtracks
        );

        // Advance: new gradient, and the transported direction and β for the
        // next iteration.
        let y_new = outcome.y_next;
        let grad_new = self.objective.riemannian_grad(&y_new, &outcome.residuals_next);
        let (p_next, beta_next) = if cfg.beta_rule == BetaRule::SteepestDescent {
            (grad_new.scale(-1.0), 0.0)
        } else {
            let moved_grad = transport(&st.y, &y_new, &st.grad)?;
            let b = choose_beta(&st.grad, &grad_new, &moved_grad, cfg.beta_rule)?;
            let moved_p = transport(&st.y, &y_new, &p)?;
            (grad_new.scale(-1.0).axpby(1.0, &moved_p, b), b)
        };

        self.state = SolverState {
            y: y_new,
            p: p_next,
            grad: grad_new,
            f_value: outcome.f_next,
            iter: st.iter + 1,
            residuals: outcome.residuals_next,
            beta: beta_next,
        };
        self.trace.push(record);
        Ok(self.trace.last().expect("just pushed"))
    }

    pub fn into_report(self, termination: Termination) -> SolverReport {
        let converged = self.is_converged();
        SolverReport {
            iterations: self.trace.len(),
            initial_residual: self
                .trace
                .first()
                .map(|r| (2.0 * r.f_prev).sqrt())
                .unwrap_or_else(|| self.residual_norm()),
            final_residual: self.residual_norm(),
            epsilon: self.epsilon,
            trace: self.trace,
            converged,
            termination,
            estimate: self.state.y,
        }
    }
}

/// Runs the solver to convergence, the iteration cap, or a line-search
/// breakdown. `observer` sees the start point (iteration 0) and every
/// accepted iterate.
pub fn solve_with_observer(
    obs: &ObservedDistances,
    cfg: &SolverConfig,
    init: Option<ManifoldPoint>,
    mut observer: impl FnMut(usize, &ManifoldPoint),
) -> Result<SolverReport> {
    let mut solver = Solver::new(obs, cfg, init)?;
    observer(0, &solver.state.y);
    let termination = loop {
        if solver.is_converged() {
            break Termination::Converged;
        }
        if solver.state.iter >= cfg.max_iters {
            break Termination::MaxIterations;
        }
        if solver.state.grad.norm() == 0.0 {
            break Termination::Stationary;
        }
        match solver.step() {
            Ok(_) => observer(solver.state.iter, &solver.state.y),
            Err(Error::LineSearchFailure { backtracks }) => {
                log::debug!(
                    "line search failed at iteration {} after {backtracks} backtracks",
                    solver.state.iter + 1
                );
                break Termination::LineSearchFailed;
            }
            Err(e) => return Err(e),
        }
    };
    Ok(solver.into_report(termination))
}

pub fn solve(
    obs: &ObservedDistances,
    cfg: &SolverConfig,
    init: Option<ManifoldPoint>,
) -> Result<SolverReport> {
    solve_with_observer(obs, cfg, init, |_, _| {})
}
