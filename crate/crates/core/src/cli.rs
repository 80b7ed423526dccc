//! Command-line interface.
//!
//! Exit codes: 0 on success, 2 on usage or configuration errors, 1 on
//! runtime failures.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::gap::{gap_bound_bc, gap_bound_crn, lower_bound, GapSetup};
use crate::harness::{
    emit, run_experiment, write_rows, ConfigFile, ExperimentConfig, Method, Mode, OutputFormat,
};
use crate::oracle::{
    complete_u_statistic, complete_v_statistic, estimate_gk_variance, estimate_wk, example1_program,
};
use crate::programs::{problem_by_key, StochasticProgram};
use crate::rng::RngStream;

/// Environment variable holding the default worker-thread count.
pub const THREADS_ENV: &str = "BAGBOUND_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "bagbound",
    version,
    about = "Confidence bounds for stochastic programs"
)]
struct Cli {
    /// Worker threads (default: $BAGBOUND_THREADS, else all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Lower confidence bound on the optimal value from one dataset.
    Bound(BoundArgs),
    /// Upper confidence bound on the optimality gap of an SAA solution.
    Gap(GapArgs),
    /// Coverage experiment over many replications.
    Experiment(ExperimentArgs),
    /// Reference computations used by the test-suite.
    DevOracle(OracleArgs),
}

#[derive(Debug, Args, Default)]
struct CommonArgs {
    /// JSON configuration; explicit flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    problem: Option<String>,
    /// bagging-u, bagging-v, batching or single (comma-separated for experiments).
    #[arg(long, value_delimiter = ',')]
    method: Option<Vec<String>>,
    /// Resample or batch size (comma-separated for experiments).
    #[arg(long, value_delimiter = ',')]
    k: Option<Vec<usize>>,
    /// Number of bagging resamples or `auto` (5nk).
    #[arg(long = "B", value_name = "B")]
    b: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct BoundArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    n: Option<usize>,
    /// CSV file of observations (one row per observation, no header) used
    /// instead of simulated data.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Print the full report as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Approach {
    Bc,
    Crn,
}

#[derive(Debug, Args)]
struct GapArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, value_enum)]
    approach: Option<Approach>,
    #[arg(long)]
    n1: Option<usize>,
    #[arg(long)]
    n2: Option<usize>,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// lower, gap-bc or gap-crn.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    n1: Option<usize>,
    #[arg(long)]
    n2: Option<usize>,
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// csv or json.
    #[arg(long)]
    format: Option<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum OracleKind {
    /// Complete U-statistic.
    U,
    /// Complete V-statistic.
    V,
    /// Monte Carlo W_k.
    Wk,
    /// Nested Monte Carlo Var(g_k).
    Gk,
}

#[derive(Debug, Args)]
struct OracleArgs {
    #[arg(value_enum)]
    kind: OracleKind,
    /// Problem key, or `example1` for the piecewise-linear example.
    #[arg(long, default_value = "cvar")]
    problem: String,
    /// Dimension of the `example1` problem.
    #[arg(long, default_value_t = 4)]
    d: usize,
    #[arg(long, default_value_t = 8)]
    n: usize,
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, default_value_t = 1000)]
    reps: usize,
    #[arg(long, default_value_t = 200)]
    outer: usize,
    #[arg(long, default_value_t = 200)]
    inner: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn parse_common(c: &CommonArgs) -> Result<ConfigFile> {
    let mut file = match &c.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let methods = c
        .method
        .as_ref()
        .map(|ms| {
            ms.iter()
                .map(|m| m.parse())
                .collect::<Result<Vec<Method>>>()
        })
        .transpose()?;
    file = file.overlay(ConfigFile {
        problem: c.problem.clone(),
        method: methods,
        k: c.k.clone(),
        b: c.b.as_deref().map(str::parse).transpose()?,
        alpha: c.alpha,
        seed: c.seed,
        ..Default::default()
    });
    Ok(file)
}

fn single_method(cfg: &ExperimentConfig) -> Result<(Method, usize)> {
    if cfg.method.len() != 1 || cfg.k.len() > 1 {
        return Err(Error::invalid("give exactly one method and at most one k"));
    }
    Ok((cfg.method[0], cfg.k.first().copied().unwrap_or(0)))
}

fn read_dataset(path: &Path) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| Error::invalid(format!("bad number `{f}` in {}", path.display())))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Dataset::from_rows(rows)
}

fn run_bound(args: BoundArgs) -> Result<()> {
    let mut file = parse_common(&args.common)?;
    let data = match &args.data {
        Some(p) => Some(read_dataset(p)?),
        None => None,
    };
    file.n = args.n.or(data.as_ref().map(Dataset::n)).or(file.n);
    file.mode = Some(Mode::Lower);
    let cfg = ExperimentConfig::try_from(file)?;
    let (method, k) = single_method(&cfg)?;
    let program = problem_by_key(&cfg.problem)?;
    let root = RngStream::new(cfg.seed).child(0);
    let data = match data {
        Some(d) if d.dim() != program.dim() => {
            return Err(Error::DimensionMismatch {
                expected: program.dim(),
                got: d.dim(),
            })
        }
        Some(d) => d,
        None => program.sample_dataset(&root.child(0), cfg.n)?,
    };
    let lm = method.lower_method(k, cfg.b, data.n());
    let report = lower_bound(
        &data,
        program.as_ref(),
        lm,
        cfg.alpha,
        &root.child(1).child(k as u64),
    )?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        println!(
            "problem={} method={} n={} k={} B={} point={} stderr={} quantile={} lower_bound={}",
            cfg.problem,
            method,
            report.n,
            report.k.map_or("-".into(), |k| k.to_string()),
            report.b.map_or("-".into(), |b| b.to_string()),
            report.point,
            report.stderr,
            report.quantile,
            report.bound
        );
    }
    Ok(())
}

fn run_gap(args: GapArgs) -> Result<()> {
    let mut file = parse_common(&args.common)?;
    file.n1 = args.n1.or(file.n1);
    file.n2 = args.n2.or(file.n2);
    let mode = match args.approach {
        Some(Approach::Bc) => Mode::GapBc,
        Some(Approach::Crn) => Mode::GapCrn,
        None => match file.mode {
            Some(m @ (Mode::GapBc | Mode::GapCrn)) => m,
            _ => return Err(Error::invalid("missing `--approach` (bc or crn)")),
        },
    };
    file.mode = Some(mode);
    let cfg = ExperimentConfig::try_from(file)?;
    let (method, k) = single_method(&cfg)?;
    let program: Arc<dyn StochasticProgram> = problem_by_key(&cfg.problem)?;
    let root = RngStream::new(cfg.seed).child(0);
    let train = program.sample_dataset(&root.child(0), cfg.n1.unwrap_or(0))?;
    let eval = program.sample_dataset(&root.child(2), cfg.n2.unwrap_or(0))?;
    let setup = GapSetup::from_training(program.as_ref(), train, eval, cfg.alpha)?;
    let lm = method.lower_method(k, cfg.b, cfg.bound_sample_size());
    let rng = root.child(1).child(k as u64);
    let report = match mode {
        Mode::GapBc => gap_bound_bc(&setup, program.as_ref(), lm, &rng)?,
        _ => gap_bound_crn(&setup, program.clone(), lm, &rng)?,
    };
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        println!(
            "problem={} approach={} method={} n1={} n2={} x_hat={:?} gap_upper_bound={}",
            cfg.problem,
            if mode == Mode::GapBc { "bc" } else { "crn" },
            method,
            setup.train.n(),
            setup.eval.n(),
            setup.x_hat.0,
            report.bound
        );
    }
    Ok(())
}

fn run_experiment_cmd(args: ExperimentArgs) -> Result<()> {
    let mut file = parse_common(&args.common)?;
    file = file.overlay(ConfigFile {
        mode: args.mode.as_deref().map(str::parse).transpose()?,
        n: args.n,
        n1: args.n1,
        n2: args.n2,
        replications: args.replications,
        output: args.output,
        format: args
            .format
            .as_deref()
            .map(str::parse::<OutputFormat>)
            .transpose()?,
        ..Default::default()
    });
    let cfg = ExperimentConfig::try_from(file)?;
    let rows = run_experiment(&cfg)?;
    for r in &rows {
        println!(
            "{} {} n={} k={} coverage={:.1}% mean={:.4} std={:.4} reps={}",
            r.problem,
            r.method,
            r.n,
            r.k.map_or("-".into(), |k| k.to_string()),
            100.0 * r.coverage,
            r.mean,
            r.std,
            r.reps
        );
    }
    match &cfg.output {
        Some(path) => emit(&rows, cfg.format, path)?,
        None if cfg.format == OutputFormat::Json => {
            write_rows(&rows, cfg.format, std::io::stdout().lock())?
        }
        None => {}
    }
    Ok(())
}

fn run_oracle(args: OracleArgs) -> Result<()> {
    let program: Arc<dyn StochasticProgram> = if args.problem == "example1" {
        Arc::new(example1_program(args.d)?)
    } else {
        problem_by_key(&args.problem)?
    };
    let rng = RngStream::new(args.seed);
    let est = match args.kind {
        OracleKind::U | OracleKind::V => {
            let data = program.sample_dataset(&rng.child(0), args.n)?;
            if matches!(args.kind, OracleKind::U) {
                complete_u_statistic(&data, args.k, program.as_ref())?
            } else {
                complete_v_statistic(&data, args.k, program.as_ref())?
            }
        }
        OracleKind::Wk => estimate_wk(program.as_ref(), args.k, args.reps, &rng)?,
        OracleKind::Gk => {
            estimate_gk_variance(program.as_ref(), args.k, args.outer, args.inner, &rng)?
        }
    };
    println!("{}", serde_json::to_string(&est)?);
    Ok(())
}

fn configure_threads(flag: Option<usize>) -> Result<()> {
    let threads = match flag {
        Some(t) => Some(t),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => Some(v.parse().map_err(|_| {
                Error::invalid(format!(
                    "{THREADS_ENV} must be a positive integer, got `{v}`"
                ))
            })?),
            Err(_) => None,
        },
    };
    if let Some(t) = threads {
        if t == 0 {
            return Err(Error::invalid("thread count must be ≥ 1"));
        }
        // a pool may already exist when called repeatedly in-process
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global();
    }
    Ok(())
}

fn is_usage_error(e: &Error) -> bool {
    matches!(
        e,
        Error::InvalidParameter(_)
            | Error::UnknownProblem(_)
            | Error::TooFewBatches { .. }
            | Error::Json(_)
    )
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = configure_threads(cli.threads).and_then(|_| match cli.command {
        Command::Bound(a) => run_bound(a),
        Command::Gap(a) => run_gap(a),
        Command::Experiment(a) => run_experiment_cmd(a),
        Command::DevOracle(a) => run_oracle(a),
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if is_usage_error(&e) {
                2
            } else {
                1
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(main_with_args(["bagbound", "bound", "--bogus"]), 2);
        assert_eq!(main_with_args(["bagbound", "frobnicate"]), 2);
        assert_eq!(
            main_with_args([
                "bagbound",
                "bound",
                "--problem",
                "cvar",
                "--method",
                "nope",
                "--n",
                "10"
            ]),
            2
        );
        assert_eq!(main_with_args(["bagbound", "--help"]), 0);
    }

    #[test]
    fn bound_smoke() {
        let code = main_with_args([
            "bagbound",
            "bound",
            "--problem",
            "cvar",
            "--method",
            "bagging-u",
            "--n",
            "50",
            "--k",
            "25",
            "--B",
            "auto",
            "--alpha",
            "0.05",
            "--seed",
            "7",
        ]);
        assert_eq!(code, 0);
    }

    #[test]
    fn missing_config_file_is_runtime_error() {
        assert_eq!(
            main_with_args([
                "bagbound",
                "experiment",
                "--config",
                "/nonexistent/cfg.json"
            ]),
            1
        );
    }
}
