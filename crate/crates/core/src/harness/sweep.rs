//! Seeded multi-trial sweeps over `(n, k, r)`.
//!
//! Every trial draws its scenario, sample and solver seeds from the master
//! seed and its `(n, k, trial)` coordinates alone, so results do not depend
//! on execution order or thread count. The sampling ratio is deliberately not
//! part of the seed: for a given trial, all ratios see the same layout and
//! nested sample sets.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::ManifoldPoint;
use crate::solver::{solve_with_observer, BetaRule, SolverConfig, Termination};

use super::metrics::{evaluate_estimate, EvalResult, Metrics};
use super::{generate_scenario, sample_observations, Generator, SamplingModel, Scenario};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub ns: Vec<usize>,
    pub ks: Vec<usize>,
    pub ratios: Vec<f64>,
    pub trials: usize,
    pub beta_rule: BetaRule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub master_seed: u64,
    /// Worker threads; `None` uses every available core.
    pub jobs: Option<usize>,
    pub noise_sigma: f64,
    /// Also record the per-iteration all-entries MSE (costs `O(n²k)` per
    /// iterate).
    pub record_mse_a_trace: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            master_seed: 0,
            jobs: None,
            noise_sigma: 0.0,
            record_mse_a_trace: false,
        }
    }
}

/// Coordinates and seeds of one trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialSpec {
    pub n: usize,
    pub k: usize,
    pub ratio: f64,
    pub trial: usize,
    pub scenario_seed: u64,
    pub sample_seed: u64,
    pub solver_seed: u64,
}

impl TrialSpec {
    pub fn new(master_seed: u64, n: usize, k: usize, ratio: f64, trial: usize) -> Self {
        let base = [n as u64, k as u64, trial as u64];
        Self {
            n,
            k,
            ratio,
            trial,
            scenario_seed: derive_seed(master_seed, &[base[0], base[1], base[2], 0]),
            sample_seed: derive_seed(master_seed, &[base[0], base[1], base[2], 1]),
            solver_seed: derive_seed(master_seed, &[base[0], base[1], base[2], 2]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub spec: TrialSpec,
    pub result: EvalResult,
    /// Set when the trial could not run to an estimate.
    pub error: Option<String>,
    /// `MSE_s` at the start point and after every accepted step.
    pub mse_s_trace: Vec<f64>,
    /// Same for `MSE_a`; empty unless requested.
    pub mse_a_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellAggregate {
    pub n: usize,
    pub k: usize,
    pub ratio: f64,
    pub trials: usize,
    pub success_rate: f64,
    pub converged_rate: f64,
    pub failures: usize,
    pub mean_mse_s: f64,
    pub median_mse_s: f64,
    pub mean_mse_a: f64,
    pub median_mse_a: f64,
    pub mean_rmse: f64,
    pub median_rmse: f64,
    pub median_rmse_position: f64,
    pub mean_iterations: f64,
    pub mean_wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub aggregate: CellAggregate,
    pub trials: Vec<TrialRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub grid: SweepGrid,
    pub master_seed: u64,
    pub cells: Vec<CellResult>,
}

/// SplitMix64 over the master seed and a list of tags.
pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    tags.iter().fold(mix(master), |acc, &t| mix(acc ^ mix(t)))
}

fn failed_result(wall_time: f64) -> EvalResult {
    EvalResult {
        metrics: Metrics {
            mse_s: f64::NAN,
            mse_a: f64::NAN,
            rmse: f64::NAN,
            rmse_position: f64::NAN,
        },
        iterations: 0,
        converged: false,
        termination: None,
        wall_time,
    }
}

fn iterate_errors(y: &ManifoldPoint, s: &Scenario, pairs: &[(usize, usize)], with_all: bool) -> (f64, Option<f64>) {
    let x = y.factor();
    let dist = |i: usize, j: usize| (x.row(i) - x.row(j)).norm_squared();
    let sampled: f64 = pairs
        .iter()
        .map(|&(i, j)| (dist(i, j) - s.d_true[(i, j)]).powi(2))
        .sum();
    let mse_s = if pairs.is_empty() { 0.0 } else { sampled / pairs.len() as f64 };
    let mse_a = with_all.then(|| {
        let mut total = 0.0;
        for i in 0..s.n {
            for j in (i + 1)..s.n {
                total += (dist(i, j) - s.d_true[(i, j)]).powi(2);
            }
        }
        2.0 * total / (s.n * s.n) as f64
    });
    (mse_s, mse_a)
}

/// Scenario → sample → solve → evaluate for a single trial. Failures are
/// recorded, never returned.
pub fn run_trial(spec: &TrialSpec, cfg: &SolverConfig, opts: &SweepOptions) -> TrialRecord {
    let start = Instant::now();
    let mut mse_s_trace = Vec::new();
    let mut mse_a_trace = Vec::new();
    let outcome = (|| -> Result<EvalResult> {
        let s = generate_scenario(spec.n, spec.k, spec.scenario_seed, &Generator::UniformUnit)?;
        let obs = sample_observations(
            &s,
            &SamplingModel::UniformPairs { ratio: spec.ratio },
            opts.noise_sigma,
            spec.sample_seed,
        )?;
        let mut trial_cfg = cfg.clone();
        trial_cfg.k = spec.k;
        trial_cfg.seed = spec.solver_seed;
        let pairs = obs.sample_set().pairs().to_vec();
        let report = solve_with_observer(&obs, &trial_cfg, None, |_, y| {
            let (s_err, a_err) = iterate_errors(y, &s, &pairs, opts.record_mse_a_trace);
            mse_s_trace.push(s_err);
            if let Some(a) = a_err {
                mse_a_trace.push(a);
            }
        })?;
        let metrics = evaluate_estimate(&report.estimate, &s, &obs)?;
        Ok(EvalResult {
            metrics,
            iterations: report.iterations,
            converged: report.converged,
            termination: Some(report.termination),
            wall_time: start.elapsed().as_secs_f64(),
        })
    })();
    let (result, error) = match outcome {
        Ok(r) => (r, None),
        Err(e) => (failed_result(start.elapsed().as_secs_f64()), Some(e.to_string())),
    };
    TrialRecord {
        spec: *spec,
        result,
        error,
        mse_s_trace,
        mse_a_trace,
    }
}

fn sorted_finite(v: &[f64]) -> Vec<f64> {
    let mut finite: Vec<f64> = v.iter().copied().filter(|x| x.is_finite()).collect();
    finite.sort_by(f64::total_cmp);
    finite
}

/// Sums in sorted order so the result is independent of trial order.
fn mean(v: &[f64]) -> f64 {
    let finite = sorted_finite(v);
    if finite.is_empty() {
        f64::NAN
    } else {
        finite.iter().sum::<f64>() / finite.len() as f64
    }
}

fn median(v: &[f64]) -> f64 {
    let finite = sorted_finite(v);
    if finite.is_empty() {
        return f64::NAN;
    }
    let m = finite.len() / 2;
    if finite.len() % 2 == 1 {
        finite[m]
    } else {
        0.5 * (finite[m - 1] + finite[m])
    }
}

/// Order-independent summary of a cell's trials.
pub fn aggregate(n: usize, k: usize, ratio: f64, trials: &[TrialRecord]) -> CellAggregate {
    let count = trials.len().max(1) as f64;
    let col = |f: &dyn Fn(&TrialRecord) -> f64| trials.iter().map(f).collect::<Vec<f64>>();
    let mse_s = col(&|t| t.result.metrics.mse_s);
    let mse_a = col(&|t| t.result.metrics.mse_a);
    let rmse = col(&|t| t.result.metrics.rmse);
    let pos = col(&|t| t.result.metrics.rmse_position);
    let iters = col(&|t| t.result.iterations as f64);
    let wall = col(&|t| t.result.wall_time);
    CellAggregate {
        n,
        k,
        ratio,
        trials: trials.len(),
        success_rate: trials.iter().filter(|t| t.result.success()).count() as f64 / count,
        converged_rate: trials.iter().filter(|t| t.result.converged).count() as f64 / count,
        failures: trials
            .iter()
            .filter(|t| t.error.is_some() || t.result.termination == Some(Termination::LineSearchFailed))
            .count(),
        mean_mse_s: mean(&mse_s),
        median_mse_s: median(&mse_s),
        mean_mse_a: mean(&mse_a),
        median_mse_a: median(&mse_a),
        mean_rmse: mean(&rmse),
        median_rmse: median(&rmse),
        median_rmse_position: median(&pos),
        mean_iterations: mean(&iters),
        mean_wall_time: mean(&wall),
    }
}

/// Runs every `(n, k, r, trial)` combination of the grid. Cells appear in
/// `n`, `k`, `r` order; trials in index order.
pub fn run_sweep(grid: &SweepGrid, cfg: &SolverConfig, opts: &SweepOptions) -> Result<SweepResult> {
    if grid.ns.is_empty() || grid.ks.is_empty() || grid.ratios.is_empty() || grid.trials == 0 {
        return Err(Error::InvalidConfig("sweep grid is empty".into()));
    }
    let mut cfg = cfg.clone();
    cfg.beta_rule = grid.beta_rule;
    cfg.validate()?;

    let mut cells = Vec::new();
    let mut specs = Vec::new();
    for &n in &grid.ns {
        for &k in &grid.ks {
            for &ratio in &grid.ratios {
                cells.push((n, k, ratio));
                for trial in 0..grid.trials {
                    specs.push(TrialSpec::new(opts.master_seed, n, k, ratio, trial));
                }
            }
        }
    }

    let run = || -> Vec<TrialRecord> { specs.par_iter().map(|s| run_trial(s, &cfg, opts)).collect() };
    let records = match opts.jobs {
        Some(jobs) => rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    };

    let mut it = records.into_iter();
    let cells = cells
        .into_iter()
        .map(|(n, k, ratio)| {
            let trials: Vec<TrialRecord> = it.by_ref().take(grid.trials).collect();
            CellResult {
                aggregate: aggregate(n, k, ratio, &trials),
                trials,
            }
        })
        .collect();
    Ok(SweepResult {
        grid: grid.clone(),
        master_seed: opts.master_seed,
        cells,
    })
}
