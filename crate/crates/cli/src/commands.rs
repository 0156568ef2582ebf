use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use edmc_core::harness::{
    derive_seed, evaluate as evaluate_edm, evaluate_estimate, five_node_coords, generate_scenario, run_sweep,
    sample_observations, CellAggregate, Generator, Metrics, SamplingModel, Scenario, SweepGrid, SweepOptions,
    TrialRecord,
};
use edmc_core::io::{parse_matrix_csv, parse_observations, write_matrix_csv, write_observations};
use edmc_core::localization::{align, extract_coordinates};
use edmc_core::manifold::{riemannian_grad, to_ambient};
use edmc_core::matrix_ops::edm_from_gram;
use edmc_core::solver::{cost, euclidean_gradient, solve_with_observer, BetaRule, InitStrategy, Termination};
use edmc_core::{ManifoldPoint, SymmetricMatrix};

use crate::failure::Failure;
use crate::output::{render_rows, OutputSet};
use crate::{CompleteArgs, EvaluateArgs, FixedLayout, Format, GenerateArgs, SweepArgs};

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::io(format!("{}: {e}", path.display())))
}

fn matrix_bytes(m: &DMatrix<f64>) -> Vec<u8> {
    let mut buf = Vec::new();
    write_matrix_csv(&mut buf, m).expect("writing to memory");
    buf
}

fn read_truth(path: &Path, n: usize, k: usize) -> Result<Scenario, Failure> {
    let coords = parse_matrix_csv(&read(path)?).map_err(|e| Failure::parse(path, e))?;
    if coords.nrows() != n || coords.ncols() != k {
        return Err(Failure::usage(format!(
            "{}: truth is {}x{} but the problem is n = {n}, k = {k}",
            path.display(),
            coords.nrows(),
            coords.ncols()
        )));
    }
    Ok(generate_scenario(n, k, 0, &Generator::Fixed(coords))?)
}

/// `MSE_s` of the iterate's own distances against the truth.
fn sampled_mse(y: &ManifoldPoint, truth: &Scenario, pairs: &[(usize, usize)]) -> f64 {
    let x = y.factor();
    let total: f64 = pairs
        .iter()
        .map(|&(i, j)| ((x.row(i) - x.row(j)).norm_squared() - truth.d_true[(i, j)]).powi(2))
        .sum();
    total / pairs.len() as f64
}

#[derive(Serialize)]
struct ScenarioJson {
    n: usize,
    k: usize,
    seed: u64,
    coords: Vec<Vec<f64>>,
    edm: Vec<Vec<f64>>,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn generate(a: &GenerateArgs) -> Result<(), Failure> {
    let mut out = OutputSet::new(&a.out)?;
    let (generator, n, k) = match a.fixed {
        Some(FixedLayout::FiveNode) => {
            let c = five_node_coords();
            let (n, k) = (c.nrows(), c.ncols());
            if a.n.is_some_and(|v| v != n) || a.k.is_some_and(|v| v != k) {
                return Err(Failure::usage(format!("--fixed fig1 has n = {n}, k = {k}")));
            }
            (Generator::Fixed(c), n, k)
        }
        None => {
            let n = a.n.ok_or_else(|| Failure::usage("--n is required without --fixed"))?;
            (Generator::UniformUnit, n, a.k.unwrap_or(2))
        }
    };
    let model = match (a.ratio, a.radio_range) {
        (_, Some(rho)) => SamplingModel::RadioRange { rho },
        (Some(ratio), None) => SamplingModel::UniformPairs { ratio },
        (None, None) => SamplingModel::UniformPairs { ratio: 1.0 },
    };
    let s = generate_scenario(n, k, derive_seed(a.seed, &[0]), &generator)?;
    let obs = sample_observations(&s, &model, a.noise, derive_seed(a.seed, &[1]))?;
    log::info!("generated n = {n}, k = {k}, {} observed pairs", obs.sample_set().pairs().len());

    match a.format {
        Format::Csv => {
            out.add("coords.csv", matrix_bytes(&s.coords));
            out.add("edm.csv", matrix_bytes(s.d_true.as_matrix()));
        }
        Format::Json => out.add_json(
            "scenario.json",
            &ScenarioJson {
                n,
                k,
                seed: a.seed,
                coords: rows_of(&s.coords),
                edm: rows_of(s.d_true.as_matrix()),
            },
        )?,
    }
    let mut buf = Vec::new();
    write_observations(&mut buf, &obs, k, a.seed).expect("writing to memory");
    out.add("observations.txt", buf);
    out.commit()?;
    Ok(())
}

#[derive(Serialize)]
struct TraceRow {
    iteration: usize,
    f: f64,
    mse_s: Option<f64>,
    grad_norm: f64,
    alpha: Option<f64>,
    beta: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct Report {
    n: usize,
    k: usize,
    observed_pairs: usize,
    sampling_ratio: f64,
    iterations: usize,
    converged: bool,
    termination: Termination,
    initial_residual: f64,
    final_residual: f64,
    epsilon: f64,
    beta_rule: BetaRule,
    init: InitStrategy,
    seed: u64,
    wall_time: f64,
    metrics: Option<Metrics>,
}

pub fn complete(a: &CompleteArgs) -> Result<(), Failure> {
    let mut out = OutputSet::new(&a.out)?;
    let file = parse_observations(&read(&a.obs)?).map_err(|e| Failure::parse(&a.obs, e))?;
    let obs = file.observations;
    let n = obs.n();
    let k = a.k.unwrap_or(file.k);
    let truth = a.truth.as_deref().map(|p| read_truth(p, n, k)).transpose()?;
    let cfg = a.solver.config(k, a.seed.unwrap_or(file.seed))?;

    let start = Instant::now();
    let pairs = obs.sample_set().pairs().to_vec();
    let mut mse_trace = Vec::new();
    let report = solve_with_observer(&obs, &cfg, None, |_, y| {
        if let Some(s) = &truth {
            mse_trace.push(sampled_mse(y, s, &pairs));
        }
    })?;
    let wall_time = start.elapsed().as_secs_f64();
    log::info!(
        "{:?} after {} iterations, residual {:.3e} (tolerance {:.3e})",
        report.termination,
        report.iterations,
        report.final_residual,
        report.epsilon
    );

    let est = &report.estimate;
    let final_grad = riemannian_grad(est, &euclidean_gradient(est, &obs)?)?.norm();
    let mut rows = Vec::with_capacity(report.iterations + 1);
    rows.push(TraceRow {
        iteration: 0,
        f: report.trace.first().map_or(cost(est, &obs)?, |r| r.f_prev),
        mse_s: mse_trace.first().copied(),
        grad_norm: report.trace.first().map_or(final_grad, |r| r.grad_norm),
        alpha: None,
        beta: None,
    });
    for (i, rec) in report.trace.iter().enumerate() {
        rows.push(TraceRow {
            iteration: rec.iter,
            f: rec.f,
            mse_s: mse_trace.get(i + 1).copied(),
            grad_norm: report.trace.get(i + 1).map_or(final_grad, |r| r.grad_norm),
            alpha: Some(rec.alpha),
            beta: Some(rec.beta),
        });
    }

    let coords = extract_coordinates(est);
    out.add("coords.csv", matrix_bytes(&coords.coords));
    out.add("edm.csv", matrix_bytes(edm_from_gram(&to_ambient(est)).as_matrix()));
    let trace_name = match a.format {
        Format::Csv => "trace.csv",
        Format::Json => "trace.json",
    };
    out.add(trace_name, render_rows(&rows, a.format)?);

    let metrics = match &truth {
        Some(s) => {
            let (aligned, _) = align(&coords, &s.location_map())?;
            out.add("coords_aligned.csv", matrix_bytes(&aligned.coords));
            Some(evaluate_estimate(est, s, &obs)?)
        }
        None => None,
    };
    out.add_json(
        "report.json",
        &Report {
            n,
            k,
            observed_pairs: pairs.len(),
            sampling_ratio: obs.sampling_ratio(),
            iterations: report.iterations,
            converged: report.converged,
            termination: report.termination,
            initial_residual: report.initial_residual,
            final_residual: report.final_residual,
            epsilon: report.epsilon,
            beta_rule: cfg.beta_rule,
            init: cfg.init,
            seed: cfg.seed,
            wall_time,
            metrics,
        },
    )?;
    out.commit()?;

    if report.converged {
        Ok(())
    } else {
        Err(Failure::not_converged(format!(
            "not converged ({:?}) after {} iterations: residual {:.3e} > tolerance {:.3e}; outputs written",
            report.termination, report.iterations, report.final_residual, report.epsilon
        )))
    }
}

#[derive(Serialize)]
struct EvalRow {
    mse_s: f64,
    mse_a: f64,
    rmse: f64,
    rmse_position: f64,
    iterations: Option<usize>,
    converged: Option<bool>,
    termination: Option<Termination>,
    wall_time: Option<f64>,
}

pub fn evaluate(a: &EvaluateArgs) -> Result<(), Failure> {
    let d_hat = parse_matrix_csv(&read(&a.estimate)?).map_err(|e| Failure::parse(&a.estimate, e))?;
    if d_hat.nrows() != d_hat.ncols() {
        return Err(Failure::usage(format!("{}: estimate must be a square EDM", a.estimate.display())));
    }
    let file = parse_observations(&read(&a.obs)?).map_err(|e| Failure::parse(&a.obs, e))?;
    let n = file.observations.n();
    let truth_coords = parse_matrix_csv(&read(&a.truth)?).map_err(|e| Failure::parse(&a.truth, e))?;
    let truth = read_truth(&a.truth, n, truth_coords.ncols())?;
    let report: Option<Report> = match &a.report {
        Some(p) => Some(
            serde_json::from_str(&read(p)?)
                .map_err(|e| Failure::parse(p, edmc_core::io::FormatError { line: e.line(), message: e.to_string() }))?,
        ),
        None => None,
    };
    let metrics = evaluate_edm(&SymmetricMatrix::new(d_hat)?, &truth, &file.observations)?;
    let row = EvalRow {
        mse_s: metrics.mse_s,
        mse_a: metrics.mse_a,
        rmse: metrics.rmse,
        rmse_position: metrics.rmse_position,
        iterations: report.as_ref().map(|r| r.iterations),
        converged: report.as_ref().map(|r| r.converged),
        termination: report.as_ref().map(|r| r.termination),
        wall_time: report.as_ref().map(|r| r.wall_time),
    };
    let bytes = render_rows(&[row], a.format)?;
    match &a.out {
        Some(path) => {
            let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
            let name = path
                .file_name()
                .ok_or_else(|| Failure::usage(format!("{} is not a file path", path.display())))?;
            let mut out = OutputSet::new(dir)?;
            out.add(name, bytes);
            out.commit()?;
        }
        None => {
            use std::io::Write;
            std::io::stdout()
                .write_all(&bytes)
                .map_err(|e| Failure::io(format!("stdout: {e}")))?;
        }
    }
    Ok(())
}

/// One line of the long-format sweep table. Trial rows leave the
/// aggregate-only columns empty and vice versa.
#[derive(Serialize)]
struct SweepRow {
    kind: &'static str,
    n: usize,
    k: usize,
    ratio: f64,
    trial: Option<usize>,
    mse_s: f64,
    mse_a: f64,
    rmse: f64,
    rmse_position: Option<f64>,
    iterations: f64,
    wall_time: f64,
    success: Option<bool>,
    converged: Option<bool>,
    termination: Option<Termination>,
    error: Option<String>,
    success_rate: Option<f64>,
    converged_rate: Option<f64>,
    failures: Option<usize>,
    median_mse_s: Option<f64>,
    median_mse_a: Option<f64>,
    median_rmse: Option<f64>,
    median_rmse_position: Option<f64>,
}

impl SweepRow {
    fn trial(t: &TrialRecord) -> Self {
        let m = &t.result.metrics;
        Self {
            kind: "trial",
            n: t.spec.n,
            k: t.spec.k,
            ratio: t.spec.ratio,
            trial: Some(t.spec.trial),
            mse_s: m.mse_s,
            mse_a: m.mse_a,
            rmse: m.rmse,
            rmse_position: Some(m.rmse_position),
            iterations: t.result.iterations as f64,
            wall_time: t.result.wall_time,
            success: Some(t.result.success()),
            converged: Some(t.result.converged),
            termination: t.result.termination,
            error: t.error.clone(),
            success_rate: None,
            converged_rate: None,
            failures: None,
            median_mse_s: None,
            median_mse_a: None,
            median_rmse: None,
            median_rmse_position: None,
        }
    }

    /// Metric columns hold cell means.
    fn aggregate(a: &CellAggregate) -> Self {
        Self {
            kind: "aggregate",
            n: a.n,
            k: a.k,
            ratio: a.ratio,
            trial: None,
            mse_s: a.mean_mse_s,
            mse_a: a.mean_mse_a,
            rmse: a.mean_rmse,
            rmse_position: None,
            iterations: a.mean_iterations,
            wall_time: a.mean_wall_time,
            success: None,
            converged: None,
            termination: None,
            error: None,
            success_rate: Some(a.success_rate),
            converged_rate: Some(a.converged_rate),
            failures: Some(a.failures),
            median_mse_s: Some(a.median_mse_s),
            median_mse_a: Some(a.median_mse_a),
            median_rmse: Some(a.median_rmse),
            median_rmse_position: Some(a.median_rmse_position),
        }
    }
}

#[derive(Serialize)]
struct TracePoint {
    iteration: usize,
    mse_s: f64,
    mse_a: Option<f64>,
}

#[derive(Serialize)]
struct SweepSummary<'a> {
    grid: &'a SweepGrid,
    master_seed: u64,
    solver: &'a edmc_core::solver::SolverConfig,
    noise_sigma: f64,
    cells: Vec<&'a CellAggregate>,
}

pub fn sweep(a: &SweepArgs) -> Result<(), Failure> {
    let mut out = OutputSet::new(&a.out)?;
    if a.jobs == Some(0) {
        return Err(Failure::usage("--jobs must be at least 1"));
    }
    let grid = SweepGrid {
        ns: a.ns.clone(),
        ks: a.ks.clone(),
        ratios: a.ratios.clone(),
        trials: a.trials,
        beta_rule: a.solver.beta,
    };
    let cfg = a.solver.config(a.ks.first().copied().unwrap_or(2), 0)?;
    let opts = SweepOptions {
        master_seed: a.seed,
        jobs: a.jobs,
        noise_sigma: a.noise,
        record_mse_a_trace: a.trace_mse_a,
    };
    log::info!(
        "sweep: {} cells x {} trials",
        grid.ns.len() * grid.ks.len() * grid.ratios.len(),
        grid.trials
    );
    let res = run_sweep(&grid, &cfg, &opts)?;

    let mut rows = Vec::new();
    let ext = match a.format {
        Format::Csv => "csv",
        Format::Json => "json",
    };
    for cell in &res.cells {
        for t in &cell.trials {
            rows.push(SweepRow::trial(t));
            if let Some(e) = &t.error {
                log::warn!("n = {}, k = {}, r = {}, trial {}: {e}", t.spec.n, t.spec.k, t.spec.ratio, t.spec.trial);
            }
            if !a.no_traces {
                let points: Vec<TracePoint> = t
                    .mse_s_trace
                    .iter()
                    .enumerate()
                    .map(|(i, &mse_s)| TracePoint {
                        iteration: i,
                        mse_s,
                        mse_a: t.mse_a_trace.get(i).copied(),
                    })
                    .collect();
                let name = format!("traces/n{}_k{}_r{}_t{}.{ext}", t.spec.n, t.spec.k, t.spec.ratio, t.spec.trial);
                out.add(name, render_rows(&points, a.format)?);
            }
        }
        rows.push(SweepRow::aggregate(&cell.aggregate));
        log::info!(
            "n = {}, k = {}, r = {}: success rate {:.2}",
            cell.aggregate.n,
            cell.aggregate.k,
            cell.aggregate.ratio,
            cell.aggregate.success_rate
        );
    }
    out.add(format!("rows.{ext}"), render_rows(&rows, a.format)?);
    out.add_json(
        "summary.json",
        &SweepSummary {
            grid: &res.grid,
            master_seed: res.master_seed,
            solver: &cfg,
            noise_sigma: a.noise,
            cells: res.cells.iter().map(|c| &c.aggregate).collect(),
        },
    )?;
    out.commit()?;
    Ok(())
}
