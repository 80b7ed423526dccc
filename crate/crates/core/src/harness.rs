//! Monte Carlo coverage experiments.
//!
//! Replication `r` draws its data from `RngStream::new(seed).child(r)`:
//! child `0` holds the (training) data, child `1` the bagging resamples and
//! child `2` the evaluation data of gap experiments. Every method and `k`
//! of one configuration therefore sees the same datasets.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize};

use crate::bounds::{default_resamples, ResampleScheme};
use crate::error::{Error, IndexKind, Result};
use crate::gap::{gap_bound_bc, gap_bound_crn, lower_bound, GapSetup, LowerMethod};
use crate::programs::{problem_by_key, truth_tag, StochasticProgram};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Lower,
    GapBc,
    GapCrn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    BaggingU,
    BaggingV,
    Batching,
    Single,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::BaggingU => "bagging-u",
            Method::BaggingV => "bagging-v",
            Method::Batching => "batching",
            Method::Single => "single",
        }
    }

    pub fn uses_k(self) -> bool {
        self != Method::Single
    }

    fn scheme(self) -> Option<ResampleScheme> {
        match self {
            Method::BaggingU => Some(ResampleScheme::WithoutReplacement),
            Method::BaggingV => Some(ResampleScheme::WithReplacement),
            _ => None,
        }
    }

    /// The lower-bound procedure for resample/batch size `k` on `n` observations.
    pub fn lower_method(self, k: usize, resamples: Resamples, n: usize) -> LowerMethod {
        match self.scheme() {
            Some(scheme) => LowerMethod::Bagging {
                k,
                resamples: Some(resamples.resolve(n, k)),
                scheme,
            },
            None if self == Method::Batching => LowerMethod::Batching { k },
            None => LowerMethod::SingleReplication,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bagging-u" => Ok(Method::BaggingU),
            "bagging-v" => Ok(Method::BaggingV),
            "batching" => Ok(Method::Batching),
            "single" => Ok(Method::Single),
            other => Err(Error::invalid(format!(
                "unknown method `{other}` (expected bagging-u, bagging-v, batching or single)"
            ))),
        }
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lower" => Ok(Mode::Lower),
            "gap-bc" => Ok(Mode::GapBc),
            "gap-crn" => Ok(Mode::GapCrn),
            other => Err(Error::invalid(format!(
                "unknown mode `{other}` (expected lower, gap-bc or gap-crn)"
            ))),
        }
    }
}

/// Number of bagging resamples: `auto` is `5nk`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Resamples {
    #[default]
    Auto,
    Fixed(usize),
}

impl Resamples {
    pub fn resolve(self, n: usize, k: usize) -> usize {
        match self {
            Resamples::Auto => default_resamples(n, k),
            Resamples::Fixed(b) => b,
        }
    }
}

impl FromStr for Resamples {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(Resamples::Auto);
        }
        s.parse()
            .map(Resamples::Fixed)
            .map_err(|_| Error::invalid(format!("B must be `auto` or a count, got `{s}`")))
    }
}

impl Serialize for Resamples {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Resamples::Auto => s.serialize_str("auto"),
            Resamples::Fixed(b) => s.serialize_u64(*b as u64),
        }
    }
}

impl<'de> Deserialize<'de> for Resamples {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Count(usize),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Count(b) => Ok(Resamples::Fixed(b)),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::invalid(format!(
                "unknown format `{other}` (expected csv or json)"
            ))),
        }
    }
}

fn one_or_many<'de, D, T>(d: D) -> std::result::Result<Option<Vec<T>>, D::Error>
where
    D: Deserializer<'de>,
    T: Deserialize<'de>,
{
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany<T> {
        One(T),
        Many(Vec<T>),
    }
    Ok(Option::<OneOrMany<T>>::deserialize(d)?.map(|v| match v {
        OneOrMany::One(x) => vec![x],
        OneOrMany::Many(xs) => xs,
    }))
}

/// A configuration file: every field optional, so command-line flags can
/// fill in or override any of them.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub problem: Option<String>,
    pub mode: Option<Mode>,
    #[serde(default, deserialize_with = "one_or_many")]
    pub method: Option<Vec<Method>>,
    pub n: Option<usize>,
    pub n1: Option<usize>,
    pub n2: Option<usize>,
    #[serde(default, deserialize_with = "one_or_many")]
    pub k: Option<Vec<usize>>,
    #[serde(rename = "B")]
    pub b: Option<Resamples>,
    pub alpha: Option<f64>,
    pub replications: Option<usize>,
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    pub format: Option<OutputFormat>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Fields set in `other` replace those in `self`.
    pub fn overlay(mut self, other: ConfigFile) -> Self {
        macro_rules! take {
            ($($f:ident),*) => {$( if other.$f.is_some() { self.$f = other.$f; } )*};
        }
        take!(
            problem,
            mode,
            method,
            n,
            n1,
            n2,
            k,
            b,
            alpha,
            replications,
            seed,
            output,
            format
        );
        self
    }
}

pub const DEFAULT_REPLICATIONS: usize = 500;
pub const DEFAULT_ALPHA: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub problem: String,
    pub mode: Mode,
    pub method: Vec<Method>,
    /// Lower mode: sample size. Gap modes: `n1 + n2`.
    pub n: usize,
    pub n1: Option<usize>,
    pub n2: Option<usize>,
    pub k: Vec<usize>,
    #[serde(rename = "B")]
    pub b: Resamples,
    pub alpha: f64,
    pub replications: usize,
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub format: OutputFormat,
}

impl TryFrom<ConfigFile> for ExperimentConfig {
    type Error = Error;

    fn try_from(c: ConfigFile) -> Result<Self> {
        let missing = |f: &str| Error::invalid(format!("missing `{f}`"));
        let mode = c.mode.unwrap_or_default();
        let (n, n1, n2) = match mode {
            Mode::Lower => (c.n.ok_or_else(|| missing("n"))?, None, None),
            Mode::GapBc | Mode::GapCrn => {
                let n1 = c.n1.ok_or_else(|| missing("n1"))?;
                let n2 = c.n2.ok_or_else(|| missing("n2"))?;
                if let Some(n) = c.n {
                    if n != n1 + n2 {
                        return Err(Error::invalid(format!("n = {n} but n1 + n2 = {}", n1 + n2)));
                    }
                }
                (n1 + n2, Some(n1), Some(n2))
            }
        };
        let cfg = ExperimentConfig {
            problem: c.problem.ok_or_else(|| missing("problem"))?,
            mode,
            method: c.method.ok_or_else(|| missing("method"))?,
            n,
            n1,
            n2,
            k: c.k.unwrap_or_default(),
            b: c.b.unwrap_or_default(),
            alpha: c.alpha.unwrap_or(DEFAULT_ALPHA),
            replications: c.replications.unwrap_or(DEFAULT_REPLICATIONS),
            seed: c.seed.unwrap_or(0),
            output: c.output,
            format: c.format.unwrap_or_default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl ExperimentConfig {
    /// Observations available to the lower-bound procedure.
    pub fn bound_sample_size(&self) -> usize {
        match self.mode {
            Mode::Lower | Mode::GapBc => self.n,
            Mode::GapCrn => self.n2.unwrap_or(self.n),
        }
    }

    /// Level of the lower-bound procedure.
    pub fn bound_alpha(&self) -> f64 {
        match self.mode {
            Mode::GapBc => self.alpha / 2.0,
            _ => self.alpha,
        }
    }

    pub fn validate(&self) -> Result<()> {
        problem_by_key(&self.problem)?;
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid(format!(
                "alpha = {} outside (0, 1)",
                self.alpha
            )));
        }
        if self.replications == 0 {
            return Err(Error::invalid("replications must be ≥ 1"));
        }
        if self.method.is_empty() {
            return Err(Error::invalid("at least one method is required"));
        }
        if self.n < 2 || self.n1 == Some(0) || self.n2.is_some_and(|n2| n2 < 2) {
            return Err(Error::invalid(
                "sample sizes too small (need n ≥ 2, n1 ≥ 1, n2 ≥ 2)",
            ));
        }
        if let Resamples::Fixed(b) = self.b {
            if b < 2 {
                return Err(Error::invalid("B must be ≥ 2"));
            }
        }
        let n = self.bound_sample_size();
        if self.method.iter().any(|m| m.uses_k()) && self.k.is_empty() {
            return Err(Error::invalid("`k` is required for bagging and batching"));
        }
        for &m in &self.method {
            if !m.uses_k() {
                continue;
            }
            for &k in &self.k {
                match m.scheme() {
                    Some(s) => s.check(n, k)?,
                    None if k == 0 || n / k < 2 => {
                        return Err(Error::TooFewBatches { n, k });
                    }
                    None => {}
                }
            }
        }
        Ok(())
    }

    /// `(method, k)` cells in output order; `single` has no `k`.
    pub fn cells(&self) -> Vec<(Method, Option<usize>)> {
        let mut out = Vec::new();
        for &m in &self.method {
            if m.uses_k() {
                out.extend(self.k.iter().map(|&k| (m, Some(k))));
            } else {
                out.push((m, None));
            }
        }
        out
    }
}

/// One aggregated table cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub problem: String,
    pub method: String,
    pub n: usize,
    pub k: Option<usize>,
    pub coverage: f64,
    pub mean: f64,
    pub std: f64,
    pub reps: usize,
    pub truth: f64,
    pub truth_tag: String,
    pub seed: u64,
    pub mode: Mode,
    /// Resolved number of bagging resamples.
    #[serde(rename = "B")]
    pub b: Option<usize>,
    /// False when `reps = 1`, in which case `std` is reported as 0.
    pub std_defined: bool,
    pub covered: usize,
}

/// Per-replication outcome of one cell.
#[derive(Debug, Clone, Copy)]
struct Outcome {
    bound: f64,
    truth: f64,
}

fn replication(
    cfg: &ExperimentConfig,
    program: &Arc<dyn StochasticProgram>,
    z_star: f64,
    cells: &[(Method, Option<usize>)],
    r: usize,
) -> Result<Vec<Outcome>> {
    let root = RngStream::new(cfg.seed).child(r as u64);
    let bag_rng = root.child(1);
    let n_bound = cfg.bound_sample_size();
    let bound_alpha = cfg.bound_alpha();
    let method_of = |m: Method, k: Option<usize>| m.lower_method(k.unwrap_or(0), cfg.b, n_bound);
    match cfg.mode {
        Mode::Lower => {
            let data = program.sample_dataset(&root.child(0), cfg.n)?;
            cells
                .iter()
                .map(|&(m, k)| {
                    let rng = bag_rng.child(k.unwrap_or(0) as u64);
                    let rep =
                        lower_bound(&data, program.as_ref(), method_of(m, k), bound_alpha, &rng)?;
                    Ok(Outcome {
                        bound: rep.bound,
                        truth: z_star,
                    })
                })
                .collect()
        }
        Mode::GapBc | Mode::GapCrn => {
            let train = program.sample_dataset(&root.child(0), cfg.n1.unwrap_or(0))?;
            let eval = program.sample_dataset(&root.child(2), cfg.n2.unwrap_or(0))?;
            let setup = GapSetup::from_training(program.as_ref(), train, eval, cfg.alpha)?;
            let z_hat = program.objective(&setup.x_hat).ok_or_else(|| {
                Error::invalid(format!(
                    "problem `{}` has no closed-form objective",
                    cfg.problem
                ))
            })?;
            let truth = z_hat - z_star;
            cells
                .iter()
                .map(|&(m, k)| {
                    let rng = bag_rng.child(k.unwrap_or(0) as u64);
                    let report = if cfg.mode == Mode::GapBc {
                        gap_bound_bc(&setup, program.as_ref(), method_of(m, k), &rng)?
                    } else {
                        gap_bound_crn(&setup, program.clone(), method_of(m, k), &rng)?
                    };
                    Ok(Outcome {
                        bound: report.bound,
                        truth,
                    })
                })
                .collect()
        }
    }
}

/// Runs every replication and aggregates one row per `(method, k)` cell.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ExperimentRow>> {
    cfg.validate()?;
    let program = problem_by_key(&cfg.problem)?;
    let z_star = program
        .true_optimum()
        .ok_or_else(|| Error::invalid(format!("no known optimum for `{}`", cfg.problem)))?;
    let cells = cfg.cells();
    let outcomes: Vec<Vec<Outcome>> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| {
            replication(cfg, &program, z_star, &cells, r)
                .map_err(|e| e.at(IndexKind::Replication, r))
        })
        .collect::<Result<_>>()?;

    let tag = truth_tag(&cfg.problem);
    let reps = cfg.replications;
    Ok(cells
        .iter()
        .enumerate()
        .map(|(c, &(m, k))| {
            let col: Vec<Outcome> = outcomes.iter().map(|o| o[c]).collect();
            let covered = col
                .iter()
                .filter(|o| match cfg.mode {
                    Mode::Lower => o.bound <= o.truth,
                    _ => o.bound >= o.truth,
                })
                .count();
            let bounds: Vec<f64> = col.iter().map(|o| o.bound).collect();
            let mean = bounds.iter().sum::<f64>() / reps as f64;
            let std = if reps > 1 {
                (bounds.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / (reps - 1) as f64).sqrt()
            } else {
                0.0
            };
            let truth = match cfg.mode {
                Mode::Lower => z_star,
                _ => col.iter().map(|o| o.truth).sum::<f64>() / reps as f64,
            };
            ExperimentRow {
                problem: cfg.problem.clone(),
                method: m.name().to_string(),
                n: cfg.n,
                k,
                coverage: covered as f64 / reps as f64,
                mean,
                std,
                reps,
                truth,
                truth_tag: tag.clone(),
                seed: cfg.seed,
                mode: cfg.mode,
                b: match (m.scheme(), k) {
                    (Some(_), Some(k)) => Some(cfg.b.resolve(cfg.bound_sample_size(), k)),
                    _ => None,
                },
                std_defined: reps > 1,
                covered,
            }
        })
        .collect())
}

pub const CSV_HEADER: [&str; 11] = [
    "problem",
    "method",
    "n",
    "k",
    "coverage",
    "mean",
    "std",
    "reps",
    "truth",
    "truth_tag",
    "seed",
];

/// Writes rows as CSV (fixed header) or as a pretty JSON array.
pub fn write_rows<W: Write>(
    rows: &[ExperimentRow],
    format: OutputFormat,
    mut out: W,
) -> Result<()> {
    match format {
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(CSV_HEADER)?;
            for r in rows {
                w.write_record([
                    r.problem.clone(),
                    r.method.clone(),
                    r.n.to_string(),
                    r.k.map(|k| k.to_string()).unwrap_or_default(),
                    r.coverage.to_string(),
                    r.mean.to_string(),
                    r.std.to_string(),
                    r.reps.to_string(),
                    r.truth.to_string(),
                    r.truth_tag.clone(),
                    r.seed.to_string(),
                ])?;
            }
            w.flush()?;
        }
        OutputFormat::Json => {
            serde_json::to_writer_pretty(&mut out, rows)?;
            out.write_all(b"\n")?;
        }
    }
    Ok(())
}

pub fn emit(rows: &[ExperimentRow], format: OutputFormat, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut buf = std::io::BufWriter::new(file);
    write_rows(rows, format, &mut buf)?;
    buf.flush()?;
    Ok(())
}
