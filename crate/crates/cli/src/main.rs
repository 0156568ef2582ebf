//! `edmc`: generate scenarios, complete partially observed EDMs, score
//! estimates and run seeded sweeps.

mod commands;
mod failure;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use edmc_core::solver::{BetaRule, InitStrategy, SolverConfig, Tolerance};

use failure::Failure;

#[derive(Parser, Debug)]
#[command(name = "edmc", version, about = "Euclidean distance matrix completion for sensor localization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw a node layout and sample observed squared distances from it.
    Generate(GenerateArgs),
    /// Complete an observation file and recover node coordinates.
    Complete(CompleteArgs),
    /// Score a completed EDM against ground truth.
    Evaluate(EvaluateArgs),
    /// Run seeded trials over a grid of (n, k, ratio).
    Sweep(SweepArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum FixedLayout {
    /// The five-node example layout.
    #[value(name = "fig1", alias = "five-node")]
    FiveNode,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum InitArg {
    Spectral,
    Random,
}

#[derive(Args, Debug)]
pub struct SolverArgs {
    /// Iteration cap.
    #[arg(long, default_value_t = 500)]
    pub max_iters: usize,
    /// Stopping tolerance relative to the observed-entry norm (`inf` stops at once).
    #[arg(long, default_value_t = 1e-6, conflicts_with = "abs_epsilon")]
    pub epsilon: f64,
    /// Absolute stopping tolerance on the masked residual norm.
    #[arg(long)]
    pub abs_epsilon: Option<f64>,
    /// Conjugate-gradient rule: pr+, fr or sd.
    #[arg(long, default_value = "pr+", value_parser = parse_beta)]
    pub beta: BetaRule,
    #[arg(long, value_enum, default_value_t = InitArg::Spectral)]
    pub init: InitArg,
}

impl SolverArgs {
    pub fn config(&self, k: usize, seed: u64) -> Result<SolverConfig, Failure> {
        let mut cfg = SolverConfig::new(k);
        cfg.max_iters = self.max_iters;
        cfg.epsilon = match self.abs_epsilon {
            Some(eps) => Tolerance::Absolute(eps),
            None => Tolerance::Relative(self.epsilon),
        };
        cfg.beta_rule = self.beta;
        cfg.init = match self.init {
            InitArg::Spectral => InitStrategy::Spectral,
            InitArg::Random => InitStrategy::RandomFactor,
        };
        cfg.seed = seed;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_beta(s: &str) -> Result<BetaRule, String> {
    s.parse().map_err(|e: edmc_core::Error| e.to_string())
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Use a fixed layout instead of uniform random nodes.
    #[arg(long, value_enum)]
    pub fixed: Option<FixedLayout>,
    /// Fraction of node pairs observed, sampled uniformly.
    #[arg(long, conflicts_with = "radio_range")]
    pub ratio: Option<f64>,
    /// Observe exactly the pairs within this distance.
    #[arg(long)]
    pub radio_range: Option<f64>,
    /// Standard deviation of Gaussian noise on observed squared distances.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// `csv` writes coords.csv and edm.csv; `json` writes scenario.json.
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Args, Debug)]
pub struct CompleteArgs {
    /// Observation file.
    #[arg(long = "obs", value_name = "FILE")]
    pub obs: PathBuf,
    /// Embedding dimension; defaults to the file header.
    #[arg(long)]
    pub k: Option<usize>,
    /// True coordinates (CSV), enabling MSE_s in the trace and metrics in the report.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Seed for random initialization; defaults to the file header.
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Format of the per-iteration trace.
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Completed EDM (CSV).
    #[arg(long)]
    pub estimate: PathBuf,
    /// True coordinates (CSV).
    #[arg(long)]
    pub truth: PathBuf,
    /// Observation file defining the sampled entries.
    #[arg(long = "obs", value_name = "FILE")]
    pub obs: PathBuf,
    /// report.json from `complete`, to fill the run columns.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Output file; stdout if omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    /// Node counts.
    #[arg(long = "n", value_delimiter = ',', required = true)]
    pub ns: Vec<usize>,
    /// Embedding dimensions.
    #[arg(long = "k", value_delimiter = ',', default_value = "2")]
    pub ks: Vec<usize>,
    /// Sampling ratios.
    #[arg(long, alias = "ratio", value_delimiter = ',', required = true)]
    pub ratios: Vec<f64>,
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// Also trace MSE over all entries (slower).
    #[arg(long)]
    pub trace_mse_a: bool,
    /// Skip the per-trial trace files.
    #[arg(long)]
    pub no_traces: bool,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; defaults to the number of processors.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

fn init_logging() {
    let level = match std::env::var("EDM_LOG").ok().as_deref() {
        Some("quiet") => log::LevelFilter::Off,
        Some("info") => log::LevelFilter::Info,
        Some("trace") => log::LevelFilter::Trace,
        _ => log::LevelFilter::Warn,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .target(env_logger::Target::Stderr)
        .format_timestamp(None)
        .init();
    if let Ok(v) = std::env::var("EDM_LOG") {
        if !matches!(v.as_str(), "quiet" | "info" | "trace") {
            log::warn!("EDM_LOG={v} not recognized; expected quiet, info or trace");
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap reports usage errors with exit code 2 and help with 0.
            e.exit();
        }
    };
    init_logging();
    let result = match cli.command {
        Command::Generate(a) => commands::generate(&a),
        Command::Complete(a) => commands::complete(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
        Command::Sweep(a) => commands::sweep(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("edmc: {f}");
            ExitCode::from(f.code as u8)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_lists_split_on_commas() {
        let cli = Cli::try_parse_from(["edmc", "sweep", "--n", "50,100", "--ratios", "0.1,0.2", "--beta", "fr"]).unwrap();
        let Command::Sweep(a) = cli.command else { panic!("expected sweep") };
        assert_eq!(a.ns, vec![50, 100]);
        assert_eq!(a.ks, vec![2]);
        assert_eq!(a.ratios, vec![0.1, 0.2]);
        assert_eq!(a.solver.beta, BetaRule::FletcherReeves);
    }

    #[test]
    fn solver_flags_build_a_config() {
        let cli = Cli::try_parse_from([
            "edmc", "complete", "--obs", "o.txt", "--abs-epsilon", "1e-3", "--init", "random", "--max-iters", "7",
        ])
        .unwrap();
        let Command::Complete(a) = cli.command else { panic!("expected complete") };
        let cfg = a.solver.config(3, 9).unwrap();
        assert_eq!(cfg.k, 3);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.max_iters, 7);
        assert_eq!(cfg.epsilon, Tolerance::Absolute(1e-3));
        assert_eq!(cfg.init, InitStrategy::RandomFactor);
    }

    #[test]
    fn infinite_epsilon_is_accepted() {
        let cli = Cli::try_parse_from(["edmc", "complete", "--obs", "o.txt", "--epsilon", "inf"]).unwrap();
        let Command::Complete(a) = cli.command else { panic!("expected complete") };
        assert_eq!(a.solver.config(2, 0).unwrap().epsilon, Tolerance::Relative(f64::INFINITY));
    }

    #[test]
    fn conflicting_sampling_flags_are_rejected() {
        let err = Cli::try_parse_from(["edmc", "generate", "--n", "5", "--ratio", "0.5", "--radio-range", "0.3"]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn command_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
