//! Reference computations for testing: complete U- and V-statistics by
//! enumeration, Monte Carlo estimates of `W_k = E[H_k]` and a nested Monte
//! Carlo estimate of `Var(g_k(ξ))` with `g_k(ξ) = E[H_k | ξ₁ = ξ]`.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, IndexKind, Result};
use crate::programs::{Decision, SaaSolution, StochasticProgram};
use crate::rng::{RngStream, StreamRng};
use crate::stats::{mean_var, CompensatedSum};

/// Largest number of kernel evaluations an enumeration may perform.
pub const ENUMERATION_LIMIT: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleEstimate {
    pub value: f64,
    /// Zero for exact enumerations.
    pub mc_stderr: f64,
    pub evaluations: u64,
    pub exact: bool,
}

fn binomial(n: usize, k: usize) -> Option<u64> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        c = c * (n - i) as u128 / (i + 1) as u128;
        if c > u64::MAX as u128 {
            return None;
        }
    }
    Some(c as u64)
}

fn kernel(program: &dyn StochasticProgram, data: &Dataset, idx: &[usize]) -> Result<f64> {
    program.solve_saa(&data.select(idx)).map(|s| s.value)
}

/// Exact `U_{n,k}`: the mean of `H_k` over all `k`-subsets, in lexicographic order.
pub fn complete_u_statistic(
    data: &Dataset,
    k: usize,
    program: &dyn StochasticProgram,
) -> Result<OracleEstimate> {
    let n = data.n();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("need 1 ≤ k ≤ n (n = {n}, k = {k})")));
    }
    let count = binomial(n, k)
        .filter(|&c| c <= ENUMERATION_LIMIT)
        .ok_or_else(|| {
            Error::OracleScale(format!("C({n}, {k}) subsets exceeds {ENUMERATION_LIMIT}"))
        })?;
    let mut idx: Vec<usize> = (0..k).collect();
    let mut sum = CompensatedSum::new();
    loop {
        sum.add(kernel(program, data, &idx)?);
        // next combination
        let mut i = k;
        while i > 0 && idx[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            break;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
    Ok(OracleEstimate {
        value: sum.value() / count as f64,
        mc_stderr: 0.0,
        evaluations: count,
        exact: true,
    })
}

/// Exact `V_{n,k}`: the mean of `H_k` over all `n^k` ordered tuples.
pub fn complete_v_statistic(
    data: &Dataset,
    k: usize,
    program: &dyn StochasticProgram,
) -> Result<OracleEstimate> {
    let n = data.n();
    if k == 0 {
        return Err(Error::invalid("k must be ≥ 1"));
    }
    let count = (n as u64)
        .checked_pow(k as u32)
        .filter(|&c| c <= ENUMERATION_LIMIT)
        .ok_or_else(|| Error::OracleScale(format!("{n}^{k} tuples exceeds {ENUMERATION_LIMIT}")))?;
    let mut idx = vec![0usize; k];
    let mut sum = CompensatedSum::new();
    'outer: loop {
        sum.add(kernel(program, data, &idx)?);
        for j in (0..k).rev() {
            idx[j] += 1;
            if idx[j] < n {
                continue 'outer;
            }
            idx[j] = 0;
        }
        break;
    }
    Ok(OracleEstimate {
        value: sum.value() / count as f64,
        mc_stderr: 0.0,
        evaluations: count,
        exact: true,
    })
}

fn fresh_sample(
    program: &dyn StochasticProgram,
    rng: &mut StreamRng,
    rows: usize,
    out: &mut [f64],
) {
    let d = program.dim();
    for r in 0..rows {
        program.sample_into(rng, &mut out[r * d..(r + 1) * d]);
    }
}

fn solve_flat(program: &dyn StochasticProgram, flat: &[f64]) -> Result<f64> {
    let view: Vec<&[f64]> = flat.chunks_exact(program.dim()).collect();
    program.solve_saa(&view).map(|s| s.value)
}

/// Monte Carlo `W_k`: the mean of `H_k` over `reps` fresh samples of size `k`.
/// Replication `r` draws from `rng.child(r)`.
pub fn estimate_wk(
    program: &dyn StochasticProgram,
    k: usize,
    reps: usize,
    rng: &RngStream,
) -> Result<OracleEstimate> {
    if reps < 100 {
        return Err(Error::invalid("estimate_wk needs reps ≥ 100"));
    }
    if k == 0 {
        return Err(Error::invalid("k must be ≥ 1"));
    }
    let d = program.dim();
    let values: Vec<f64> = (0..reps)
        .into_par_iter()
        .map_init(
            || vec![0.0; k * d],
            |buf, r| {
                fresh_sample(program, &mut rng.child(r as u64).generator(), k, buf);
                solve_flat(program, buf).map_err(|e| e.at(IndexKind::Replication, r))
            },
        )
        .collect::<Result<_>>()?;
    let s = mean_var(&values)?;
    Ok(OracleEstimate {
        value: s.mean,
        mc_stderr: s.std_err(),
        evaluations: reps as u64,
        exact: false,
    })
}

/// Nested Monte Carlo estimate of `Var(g_k(ξ))`.
///
/// Each of `outer` draws fixes `ξ₁` and averages `inner` kernel values with
/// the other `k − 1` points redrawn. The estimate is the variance of the
/// inner means minus the mean within-group variance over `inner`.
pub fn estimate_gk_variance(
    program: &dyn StochasticProgram,
    k: usize,
    outer: usize,
    inner: usize,
    rng: &RngStream,
) -> Result<OracleEstimate> {
    if outer < 100 || inner < 100 {
        return Err(Error::invalid(
            "estimate_gk_variance needs outer, inner ≥ 100",
        ));
    }
    if k == 0 {
        return Err(Error::invalid("k must be ≥ 1"));
    }
    let d = program.dim();
    let groups: Vec<(f64, f64)> = (0..outer)
        .into_par_iter()
        .map_init(
            || vec![0.0; k * d],
            |buf, o| -> Result<(f64, f64)> {
                let node = rng.child(o as u64);
                program.sample_into(&mut node.child(0).generator(), &mut buf[..d]);
                let mut g = node.child(1).generator();
                let mut values = Vec::with_capacity(inner);
                for _ in 0..inner {
                    fresh_sample(program, &mut g, k - 1, &mut buf[d..]);
                    values.push(
                        solve_flat(program, buf).map_err(|e| e.at(IndexKind::Replication, o))?,
                    );
                }
                let s = mean_var(&values)?;
                Ok((s.mean, s.variance))
            },
        )
        .collect::<Result<_>>()?;

    let of = outer as f64;
    let grand = groups.iter().map(|g| g.0).sum::<f64>() / of;
    // per-group contributions whose mean is the debiased estimate
    let q: Vec<f64> = groups
        .iter()
        .map(|&(m, v)| (m - grand).powi(2) * of / (of - 1.0) - v / inner as f64)
        .collect();
    let s = mean_var(&q)?;
    Ok(OracleEstimate {
        value: s.mean,
        mc_stderr: s.std_err(),
        evaluations: (outer * inner) as u64,
        exact: false,
    })
}

/// Piecewise-linear program on `x ∈ [1, d]` interpolating independent
/// standard-normal costs `ξ_1, …, ξ_d` at the integers.
#[derive(Debug, Clone)]
pub struct Example1Program {
    d: usize,
}

pub fn example1_program(d: usize) -> Result<Example1Program> {
    if d < 2 {
        return Err(Error::invalid("example 1 needs d ≥ 2"));
    }
    Ok(Example1Program { d })
}

impl StochasticProgram for Example1Program {
    fn key(&self) -> &str {
        "example1"
    }

    fn dim(&self) -> usize {
        self.d
    }

    fn cost(&self, x: &Decision, xi: &[f64]) -> f64 {
        let x = x.0[0].clamp(1.0, self.d as f64);
        let j = (x.floor() as usize).min(self.d - 1);
        let t = x - j as f64;
        (1.0 - t) * xi[j - 1] + t * xi[j]
    }

    fn solve_saa(&self, sample: &[&[f64]]) -> Result<SaaSolution> {
        if sample.is_empty() {
            return Err(Error::EmptySample);
        }
        let mut means = vec![0.0; self.d];
        for xi in sample {
            for (m, v) in means.iter_mut().zip(xi.iter()) {
                *m += v;
            }
        }
        let k = sample.len() as f64;
        let mut best = 0;
        for j in 1..self.d {
            if means[j] <= means[best] {
                best = j;
            }
        }
        Ok(SaaSolution {
            value: means[best] / k,
            solution: Decision::scalar((best + 1) as f64),
        })
    }

    fn sample_into(&self, rng: &mut StreamRng, out: &mut [f64]) {
        for v in out.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
    }

    fn is_feasible(&self, x: &Decision) -> bool {
        x.0.len() == 1 && (1.0..=self.d as f64).contains(&x.0[0])
    }

    fn random_feasible(&self, rng: &mut StreamRng) -> Decision {
        Decision::scalar(rng.gen_range(1.0..=self.d as f64))
    }

    fn true_optimum(&self) -> Option<f64> {
        Some(0.0)
    }

    fn objective(&self, _x: &Decision) -> Option<f64> {
        Some(0.0)
    }
}
