//! Lower confidence bounds on the optimal value `Z*`.
//!
//! [`bag_bound`] averages SAA values over `B` random resamples and estimates
//! the standard error with the infinitesimal jackknife. [`batching_bound`]
//! and [`single_replication_bound`] are the classical baselines.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, IndexKind, Result};
use crate::programs::{Decision, StochasticProgram};
use crate::rng::{RngStream, StreamRng};
use crate::stats::{mean_var, normal_quantile, t_quantile, CompensatedSum};

/// Resamples handled by one parallel work item. Fixed so that the reduction
/// order, and therefore every output bit, does not depend on the thread count.
const CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResampleScheme {
    WithReplacement,
    WithoutReplacement,
}

impl ResampleScheme {
    pub fn check(self, n: usize, k: usize) -> Result<()> {
        if k == 0 {
            return Err(Error::invalid("resample size k must be ≥ 1"));
        }
        if self == ResampleScheme::WithoutReplacement && k >= n {
            return Err(Error::invalid(format!(
                "resampling without replacement needs k ≤ n − 1 (n = {n}, k = {k})"
            )));
        }
        Ok(())
    }
}

/// Reusable state for drawing resample indices.
struct Sampler {
    n: usize,
    k: usize,
    scheme: ResampleScheme,
    perm: Vec<usize>,
    swaps: Vec<usize>,
}

impl Sampler {
    fn new(n: usize, k: usize, scheme: ResampleScheme) -> Self {
        let perm = match scheme {
            ResampleScheme::WithReplacement => Vec::new(),
            ResampleScheme::WithoutReplacement => (0..n).collect(),
        };
        Self {
            n,
            k,
            scheme,
            perm,
            swaps: Vec::with_capacity(k),
        }
    }

    fn draw(&mut self, rng: &mut StreamRng, out: &mut Vec<usize>) {
        out.clear();
        match self.scheme {
            ResampleScheme::WithReplacement => {
                out.extend((0..self.k).map(|_| rng.gen_range(0..self.n)));
            }
            ResampleScheme::WithoutReplacement => {
                // partial Fisher-Yates, undone afterwards so perm stays the identity
                self.swaps.clear();
                for j in 0..self.k {
                    let r = rng.gen_range(j..self.n);
                    self.perm.swap(j, r);
                    self.swaps.push(r);
                }
                out.extend_from_slice(&self.perm[..self.k]);
                for (j, &r) in self.swaps.iter().enumerate().rev() {
                    self.perm.swap(j, r);
                }
            }
        }
    }
}

/// One resample of size `k` from `{0, …, n−1}`: the drawn indices and the
/// inclusion counts `N_i`.
pub fn resample_counts(
    rng: &RngStream,
    n: usize,
    k: usize,
    scheme: ResampleScheme,
) -> Result<(Vec<usize>, Vec<u32>)> {
    if scheme == ResampleScheme::WithoutReplacement && k > n {
        return Err(Error::invalid(format!(
            "cannot draw {k} of {n} observations without replacement"
        )));
    }
    if k == 0 || n == 0 {
        return Err(Error::invalid("resample needs n ≥ 1 and k ≥ 1"));
    }
    let mut idx = Vec::with_capacity(k);
    Sampler::new(n, k, scheme).draw(&mut rng.generator(), &mut idx);
    let mut counts = vec![0u32; n];
    for &i in &idx {
        counts[i] += 1;
    }
    Ok((idx, counts))
}

/// Result of the bagging procedure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BagOutput {
    pub z_bag: f64,
    pub sigma_ij: f64,
    pub lower_bound: f64,
    pub alpha: f64,
    pub quantile: f64,
    pub n: usize,
    pub k: usize,
    #[serde(rename = "B")]
    pub b: usize,
    pub scheme: ResampleScheme,
    /// Sample standard deviation of the resampled SAA values.
    pub resample_std: f64,
    pub per_datum_cov: Vec<f64>,
}

/// IJ variance from per-datum covariances, with the `(n/(n−k))²` factor
/// when resampling without replacement.
pub fn ij_variance(per_datum_cov: &[f64], k: usize, scheme: ResampleScheme) -> f64 {
    let n = per_datum_cov.len();
    let s: f64 = per_datum_cov
        .iter()
        .map(|c| c * c)
        .collect::<CompensatedSum>()
        .value();
    match scheme {
        ResampleScheme::WithReplacement => s,
        ResampleScheme::WithoutReplacement => {
            let f = n as f64 / (n - k) as f64;
            f * f * s
        }
    }
}

/// `5nk`, the default number of resamples.
pub fn default_resamples(n: usize, k: usize) -> usize {
    5 * n * k
}

struct Partial {
    z: CompensatedSum,
    z2: CompensatedSum,
    nz: Vec<CompensatedSum>,
    counts: Vec<u64>,
}

impl Partial {
    fn new(n: usize) -> Self {
        Self {
            z: CompensatedSum::new(),
            z2: CompensatedSum::new(),
            nz: vec![CompensatedSum::new(); n],
            counts: vec![0; n],
        }
    }

    fn merge(&mut self, other: &Partial) {
        self.z.merge(&other.z);
        self.z2.merge(&other.z2);
        for (a, b) in self.nz.iter_mut().zip(&other.nz) {
            a.merge(b);
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }
}

fn resample_stream(rng: &RngStream, b: usize) -> StreamRng {
    rng.child(b as u64).generator()
}

fn solve_resample(
    data: &Dataset,
    program: &dyn StochasticProgram,
    indices: &[usize],
    b: usize,
) -> Result<f64> {
    let view = data.select(indices);
    program
        .solve_saa(&view)
        .map(|s| s.value)
        .map_err(|e| e.at(IndexKind::Resample, b))
}

/// Bagging lower bound `Z̃_bag − z₁₋α σ̃_IJ`.
///
/// Resample `b` (0-based) draws its indices from `rng.child(b)`.
pub fn bag_bound(
    data: &Dataset,
    program: &dyn StochasticProgram,
    k: usize,
    resamples: usize,
    alpha: f64,
    scheme: ResampleScheme,
    rng: &RngStream,
) -> Result<BagOutput> {
    let n = data.n();
    check_alpha(alpha)?;
    if n < 2 {
        return Err(Error::NeedTwoValues);
    }
    if resamples < 2 {
        return Err(Error::invalid("bagging needs B ≥ 2 resamples"));
    }
    scheme.check(n, k)?;
    if resamples < n * k {
        log::warn!(
            "B = {resamples} is below n·k = {}; the IJ variance may be noisy",
            n * k
        );
    }

    // Values are centred on the first resample before accumulation. The
    // covariances are shift-invariant and the centring limits cancellation.
    let shift = {
        let mut idx = Vec::with_capacity(k);
        Sampler::new(n, k, scheme).draw(&mut resample_stream(rng, 0), &mut idx);
        solve_resample(data, program, &idx, 0)?
    };

    let chunks = resamples.div_ceil(CHUNK);
    let partials: Vec<Partial> = (0..chunks)
        .into_par_iter()
        .map(|c| -> Result<Partial> {
            let mut acc = Partial::new(n);
            let mut sampler = Sampler::new(n, k, scheme);
            let mut idx = Vec::with_capacity(k);
            for b in c * CHUNK..((c + 1) * CHUNK).min(resamples) {
                sampler.draw(&mut resample_stream(rng, b), &mut idx);
                let z = solve_resample(data, program, &idx, b)? - shift;
                acc.z.add(z);
                acc.z2.add(z * z);
                for &i in &idx {
                    acc.nz[i].add(z);
                    acc.counts[i] += 1;
                }
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;

    let mut total = Partial::new(n);
    for p in &partials {
        total.merge(p);
    }

    let bf = resamples as f64;
    let z_mean = total.z.value() / bf;
    let per_datum_cov: Vec<f64> = total
        .nz
        .iter()
        .zip(&total.counts)
        .map(|(nz, &cnt)| nz.value() / bf - (cnt as f64 / bf) * z_mean)
        .collect();
    let sigma_ij = ij_variance(&per_datum_cov, k, scheme).sqrt();
    let resample_var = ((total.z2.value() - bf * z_mean * z_mean) / (bf - 1.0)).max(0.0);
    let quantile = normal_quantile(1.0 - alpha)?;
    let z_bag = shift + z_mean;
    Ok(BagOutput {
        z_bag,
        sigma_ij,
        lower_bound: z_bag - quantile * sigma_ij,
        alpha,
        quantile,
        n,
        k,
        b: resamples,
        scheme,
        resample_std: resample_var.sqrt(),
        per_datum_cov,
    })
}

/// The resamples `bag_bound` would draw with the same arguments, as
/// `(indices, Ẑ_k^b)` pairs. Intended for testing and diagnostics.
pub fn bag_trace(
    data: &Dataset,
    program: &dyn StochasticProgram,
    k: usize,
    resamples: usize,
    scheme: ResampleScheme,
    rng: &RngStream,
) -> Result<Vec<(Vec<usize>, f64)>> {
    scheme.check(data.n(), k)?;
    let mut sampler = Sampler::new(data.n(), k, scheme);
    (0..resamples)
        .map(|b| {
            let mut idx = Vec::with_capacity(k);
            sampler.draw(&mut resample_stream(rng, b), &mut idx);
            let z = solve_resample(data, program, &idx, b)?;
            Ok((idx, z))
        })
        .collect()
}

/// Two-pass per-datum covariances `(1/B) Σ_b (N_i^b − k/n)(Ẑ^b − Z̄)`.
pub fn ij_covariances_two_pass(n: usize, trace: &[(Vec<usize>, f64)]) -> Vec<f64> {
    let bf = trace.len() as f64;
    let z_bar = trace.iter().map(|t| t.1).sum::<f64>() / bf;
    let k = trace.first().map_or(0, |t| t.0.len());
    let expected = k as f64 / n as f64;
    let mut cov = vec![0.0; n];
    let mut counts = vec![0u32; n];
    for (idx, z) in trace {
        counts.iter_mut().for_each(|c| *c = 0);
        for &i in idx {
            counts[i] += 1;
        }
        let dz = z - z_bar;
        for (c, &cnt) in cov.iter_mut().zip(&counts) {
            *c += (cnt as f64 - expected) * dz;
        }
    }
    cov.iter_mut().for_each(|c| *c /= bf);
    cov
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundMethod {
    Bagging,
    Batching,
    SingleReplication,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundSide {
    Lower,
    Upper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub method: BoundMethod,
    pub side: BoundSide,
    pub bound: f64,
    pub point: f64,
    pub stderr: f64,
    pub quantile: f64,
    pub n: usize,
    /// Resample or batch size.
    pub k: Option<usize>,
    #[serde(rename = "B")]
    pub b: Option<usize>,
    /// Number of batches.
    pub m: Option<usize>,
    pub alpha: f64,
}

impl From<&BagOutput> for BoundReport {
    fn from(o: &BagOutput) -> Self {
        BoundReport {
            method: BoundMethod::Bagging,
            side: BoundSide::Lower,
            bound: o.lower_bound,
            point: o.z_bag,
            stderr: o.sigma_ij,
            quantile: o.quantile,
            n: o.n,
            k: Some(o.k),
            b: Some(o.b),
            m: None,
            alpha: o.alpha,
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("alpha = {alpha} outside (0, 1)")))
    }
}

/// Batch quantile: Student t with `m − 1` degrees of freedom below 30 batches.
pub fn batch_quantile(alpha: f64, m: usize) -> Result<f64> {
    if m < 30 {
        t_quantile(1.0 - alpha, (m - 1) as u64)
    } else {
        normal_quantile(1.0 - alpha)
    }
}

/// Lower bound from `m = ⌊n/k⌋` disjoint batches taken in dataset order.
pub fn batching_bound(
    data: &Dataset,
    program: &dyn StochasticProgram,
    k: usize,
    alpha: f64,
) -> Result<BoundReport> {
    check_alpha(alpha)?;
    let n = data.n();
    if k == 0 {
        return Err(Error::invalid("batch size k must be ≥ 1"));
    }
    let m = n / k;
    if m < 2 {
        return Err(Error::TooFewBatches { n, k });
    }
    let all = data.all();
    let values = all
        .chunks_exact(k)
        .enumerate()
        .map(|(j, batch)| {
            program
                .solve_saa(batch)
                .map(|s| s.value)
                .map_err(|e| e.at(IndexKind::Batch, j))
        })
        .collect::<Result<Vec<f64>>>()?;
    let s = mean_var(&values)?;
    let stderr = s.std_err();
    let quantile = batch_quantile(alpha, m)?;
    Ok(BoundReport {
        method: BoundMethod::Batching,
        side: BoundSide::Lower,
        bound: s.mean - quantile * stderr,
        point: s.mean,
        stderr,
        quantile,
        n,
        k: Some(k),
        b: None,
        m: Some(m),
        alpha,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum SingleReplicationMode {
    /// Lower bound on `Z*`.
    OptimalValue,
    /// Upper bound on the gap of the given decision.
    Gap(Decision),
}

/// Bound from a single full-sample SAA solve.
pub fn single_replication_bound(
    data: &Dataset,
    program: &dyn StochasticProgram,
    alpha: f64,
    mode: SingleReplicationMode,
) -> Result<BoundReport> {
    check_alpha(alpha)?;
    let n = data.n();
    if n < 2 {
        return Err(Error::NeedTwoValues);
    }
    let all = data.all();
    let saa = program.solve_saa(&all)?;
    let quantile = normal_quantile(1.0 - alpha)?;
    let at_opt: Vec<f64> = all
        .iter()
        .map(|xi| program.cost(&saa.solution, xi))
        .collect();
    let report = |side, bound, point, stderr| BoundReport {
        method: BoundMethod::SingleReplication,
        side,
        bound,
        point,
        stderr,
        quantile,
        n,
        k: None,
        b: None,
        m: None,
        alpha,
    };
    match mode {
        SingleReplicationMode::OptimalValue => {
            let stderr = mean_var(&at_opt)?.std_err();
            Ok(report(
                BoundSide::Lower,
                saa.value - quantile * stderr,
                saa.value,
                stderr,
            ))
        }
        SingleReplicationMode::Gap(x_hat) => {
            if !program.is_feasible(&x_hat) {
                return Err(Error::InfeasibleDecision(format!("{:?}", x_hat.0)));
            }
            let diffs: Vec<f64> = all
                .iter()
                .zip(&at_opt)
                .map(|(xi, h_opt)| program.cost(&x_hat, xi) - h_opt)
                .collect();
            let s = mean_var(&diffs)?;
            // h̄(x̂) − h̄(x̂ₙ*) and h̄(x̂ₙ*) = Ẑₙ
            let point = s.mean;
            let stderr = s.std_err();
            Ok(report(
                BoundSide::Upper,
                point + quantile * stderr,
                point,
                stderr,
            ))
        }
    }
}
