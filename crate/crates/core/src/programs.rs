//! Stochastic programs `min_x E[h(x, ξ)]` with exact SAA solvers.
//!
//! Four benchmark problems are provided: the 90% CVaR of a standard normal,
//! a CVaR-minimising portfolio with a return target, a binary item-selection
//! integer program and a one-dimensional linear program whose SAA solution
//! jumps between the two endpoints.

use std::sync::{Arc, OnceLock};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::lp::{simplex_solve, LinearProgram, LpStatus};
use crate::rng::{RngStream, StreamRng};
use crate::stats::{cholesky, mvn_fill, normal_cdf, normal_pdf, normal_quantile};

/// A decision vector. Scalar problems use length one, binary problems 0/1 entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Decision(pub Vec<f64>);

impl Decision {
    pub fn scalar(x: f64) -> Self {
        Decision(vec![x])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaaSolution {
    pub value: f64,
    pub solution: Decision,
}

pub trait StochasticProgram: Send + Sync {
    /// Registry key (`cvar`, `portfolio`, `ip`, `toylp`, ...).
    fn key(&self) -> &str;

    /// Dimension of ξ.
    fn dim(&self) -> usize;

    /// `h(x, ξ)`.
    fn cost(&self, x: &Decision, xi: &[f64]) -> f64;

    /// Exact minimiser of `(1/k) Σ h(x, ξᵢ)` over the feasible set.
    fn solve_saa(&self, sample: &[&[f64]]) -> Result<SaaSolution>;

    /// Draws one ξ ~ F into `out`.
    fn sample_into(&self, rng: &mut StreamRng, out: &mut [f64]);

    fn is_feasible(&self, x: &Decision) -> bool;

    /// Some feasible decision, for property tests.
    fn random_feasible(&self, rng: &mut StreamRng) -> Decision;

    /// Z* when known.
    fn true_optimum(&self) -> Option<f64> {
        None
    }

    fn true_solution(&self) -> Option<Decision> {
        None
    }

    /// Closed-form `Z(x) = E[h(x, ξ)]` when available.
    fn objective(&self, _x: &Decision) -> Option<f64> {
        None
    }

    /// `(1/k) Σ h(x, ξᵢ)`.
    fn sample_average(&self, x: &Decision, sample: &[&[f64]]) -> f64 {
        let s: f64 = sample.iter().map(|xi| self.cost(x, xi)).sum();
        s / sample.len() as f64
    }

    /// `n` i.i.d. draws, all from the single stream `rng`.
    fn sample_dataset(&self, rng: &RngStream, n: usize) -> Result<Dataset> {
        let d = self.dim();
        let mut g = rng.generator();
        let mut values = vec![0.0; n * d];
        for row in values.chunks_exact_mut(d) {
            self.sample_into(&mut g, row);
        }
        Dataset::from_flat(values, d)
    }
}

fn require_nonempty(sample: &[&[f64]]) -> Result<()> {
    if sample.is_empty() {
        Err(Error::EmptySample)
    } else {
        Ok(())
    }
}

fn component_means(sample: &[&[f64]], d: usize) -> Vec<f64> {
    let mut m = vec![0.0; d];
    for xi in sample {
        for (acc, v) in m.iter_mut().zip(xi.iter()) {
            *acc += v;
        }
    }
    let k = sample.len() as f64;
    m.iter_mut().for_each(|v| *v /= k);
    m
}

// ---------------------------------------------------------------------------
// Shipped constants

/// Problem data shipped with the crate in `data/problems.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemConstants {
    pub version: u32,
    pub cvar: CvarConstants,
    pub portfolio: PortfolioConstants,
    pub ip: IpConstants,
    pub toylp: ToyLpConstants,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvarConstants {
    pub alpha: f64,
    pub truth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioConstants {
    pub alpha: f64,
    pub mu: Vec<f64>,
    pub target: f64,
    /// Σ = G Gᵀ / d + 0.1·I with G drawn from `RngStream::new(sigma_seed)`.
    pub sigma_seed: u64,
    pub sigma: Vec<Vec<f64>>,
    pub truth: f64,
    pub truth_tag: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IpConstants {
    pub mu: Vec<f64>,
    /// Σ = G Gᵀ with G a d×d matrix of U(0, 1) entries drawn from `RngStream::new(sigma_seed)`.
    pub sigma_seed: u64,
    pub sigma: Vec<Vec<f64>>,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub truth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyLpConstants {
    pub truth: f64,
    pub solution: f64,
}

const PROBLEMS_JSON: &str = include_str!("../data/problems.json");

pub fn constants() -> &'static ProblemConstants {
    static CONSTANTS: OnceLock<ProblemConstants> = OnceLock::new();
    CONSTANTS.get_or_init(|| {
        serde_json::from_str(PROBLEMS_JSON).expect("data/problems.json is malformed")
    })
}

/// `G Gᵀ / d + 0.1·I` with `G` a `d×d` standard-normal matrix drawn row by row
/// from `RngStream::new(seed)`.
pub fn seeded_covariance(seed: u64, d: usize) -> Vec<Vec<f64>> {
    let mut g = RngStream::new(seed).generator();
    let gm: Vec<Vec<f64>> = (0..d)
        .map(|_| (0..d).map(|_| g.sample(StandardNormal)).collect())
        .collect();
    (0..d)
        .map(|i| {
            (0..d)
                .map(|j| {
                    let dot: f64 = (0..d).map(|p| gm[i][p] * gm[j][p]).sum();
                    dot / d as f64 + if i == j { 0.1 } else { 0.0 }
                })
                .collect()
        })
        .collect()
}

/// `G Gᵀ` with `G` a `d×d` matrix of U(0, 1) entries drawn row by row from
/// `RngStream::new(seed)`.
pub fn seeded_uniform_gram(seed: u64, d: usize) -> Vec<Vec<f64>> {
    let mut g = RngStream::new(seed).generator();
    let gm: Vec<Vec<f64>> = (0..d)
        .map(|_| (0..d).map(|_| g.gen::<f64>()).collect())
        .collect();
    (0..d)
        .map(|i| {
            (0..d)
                .map(|j| (0..d).map(|p| gm[i][p] * gm[j][p]).sum())
                .collect()
        })
        .collect()
}

// ---------------------------------------------------------------------------
// CVaR of a standard normal

/// `min_x x + (1/α) E[(ξ − x)₊]`, ξ ~ N(0, 1).
#[derive(Debug, Clone)]
pub struct Cvar1d {
    alpha: f64,
    truth: Option<f64>,
}

pub fn cvar1d(alpha: f64) -> Result<Cvar1d> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha1 = {alpha} outside (0, 1)")));
    }
    let c = &constants().cvar;
    let truth = if alpha == c.alpha {
        Some(c.truth)
    } else {
        Some(Cvar1d::exact_optimum(alpha))
    };
    Ok(Cvar1d { alpha, truth })
}

impl Cvar1d {
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// φ(z₁₋α)/α, the CVaR of a standard normal.
    pub fn exact_optimum(alpha: f64) -> f64 {
        let z = normal_quantile(1.0 - alpha).expect("alpha in (0, 1)");
        normal_pdf(z) / alpha
    }

    /// Breakpoint search on sorted values; ties go to the largest breakpoint.
    pub fn solve_sorted(&self, sorted: &[f64]) -> SaaSolution {
        let k = sorted.len();
        let scale = 1.0 / (self.alpha * k as f64);
        let mut suffix = 0.0;
        let mut best = (f64::INFINITY, sorted[k - 1]);
        for j in (0..k).rev() {
            let x = sorted[j];
            // suffix holds Σ_{i>j} v_i
            let value = x + scale * (suffix - (k - j - 1) as f64 * x);
            if value < best.0 {
                best = (value, x);
            }
            suffix += x;
        }
        SaaSolution {
            value: best.0,
            solution: Decision::scalar(best.1),
        }
    }
}

impl StochasticProgram for Cvar1d {
    fn key(&self) -> &str {
        "cvar"
    }

    fn dim(&self) -> usize {
        1
    }

    fn cost(&self, x: &Decision, xi: &[f64]) -> f64 {
        let x = x.0[0];
        x + (xi[0] - x).max(0.0) / self.alpha
    }

    fn solve_saa(&self, sample: &[&[f64]]) -> Result<SaaSolution> {
        require_nonempty(sample)?;
        let mut v: Vec<f64> = sample.iter().map(|xi| xi[0]).collect();
        v.sort_unstable_by(f64::total_cmp);
        Ok(self.solve_sorted(&v))
    }

    fn sample_into(&self, rng: &mut StreamRng, out: &mut [f64]) {
        out[0] = rng.sample(StandardNormal);
    }

    fn is_feasible(&self, x: &Decision) -> bool {
        x.0.len() == 1 && x.0[0].is_finite()
    }

    fn random_feasible(&self, rng: &mut StreamRng) -> Decision {
        Decision::scalar(2.0 * rng.sample::<f64, _>(StandardNormal))
    }

    fn true_optimum(&self) -> Option<f64> {
        self.truth
    }

    fn true_solution(&self) -> Option<Decision> {
        normal_quantile(1.0 - self.alpha).ok().map(Decision::scalar)
    }

    fn objective(&self, x: &Decision) -> Option<f64> {
        let x = x.0[0];
        // E[(ξ − x)₊] = φ(x) − x(1 − Φ(x))
        Some(x + (normal_pdf(x) - x * normal_cdf(-x)) / self.alpha)
    }
}

// ---------------------------------------------------------------------------
// Portfolio CVaR

/// `min_{c,w} c + (1/α) E[(−ξᵀw − c)₊]` over `w ≥ 0`, `Σw = 1`, `μᵀw ≥ b`,
/// ξ ~ N(μ, Σ). Decisions are `(c, w₁, …, w_d)`.
#[derive(Debug, Clone)]
pub struct PortfolioCvar {
    alpha: f64,
    mu: Vec<f64>,
    sigma: Vec<Vec<f64>>,
    chol: Vec<Vec<f64>>,
    target: f64,
    truth: Option<(f64, Decision)>,
}

pub fn portfolio_cvar(
    alpha: f64,
    mu: Vec<f64>,
    sigma: Vec<Vec<f64>>,
    target: f64,
) -> Result<PortfolioCvar> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::invalid(format!("alpha2 = {alpha} outside (0, 1]")));
    }
    let d = mu.len();
    if sigma.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: sigma.len(),
        });
    }
    if mu.iter().all(|&m| m < target) {
        return Err(Error::TargetReturnInfeasible);
    }
    let chol = cholesky(&sigma)?;
    let mut p = PortfolioCvar {
        alpha,
        mu,
        sigma,
        chol,
        target,
        truth: None,
    };
    p.truth = Some(p.exact_optimum());
    Ok(p)
}

/// The problem with the shipped μ, Σ, α₂ and target.
pub fn default_portfolio() -> PortfolioCvar {
    let c = &constants().portfolio;
    portfolio_cvar(c.alpha, c.mu.clone(), c.sigma.clone(), c.target)
        .expect("shipped portfolio constants are valid")
}

impl PortfolioCvar {
    pub fn assets(&self) -> usize {
        self.mu.len()
    }

    fn weights<'a>(&self, x: &'a Decision) -> &'a [f64] {
        &x.0[1..]
    }

    fn return_moments(&self, w: &[f64]) -> (f64, f64) {
        let mean: f64 = self.mu.iter().zip(w).map(|(m, v)| m * v).sum();
        let mut var = 0.0;
        for i in 0..w.len() {
            for j in 0..w.len() {
                var += w[i] * self.sigma[i][j] * w[j];
            }
        }
        (mean, var.max(0.0).sqrt())
    }

    /// CVaR of the loss −ξᵀw under the normal model: −μᵀw + σ_w φ(z₁₋α)/α.
    pub fn normal_cvar(&self, w: &[f64]) -> f64 {
        let (mean, sd) = self.return_moments(w);
        let z = normal_quantile(1.0 - self.alpha).unwrap_or(f64::INFINITY);
        let tail = if self.alpha >= 1.0 {
            0.0
        } else {
            normal_pdf(z) / self.alpha
        };
        -mean + sd * tail
    }

    /// Vertices of `{w ≥ 0, Σw = 1, μᵀw ≥ b}`.
    pub fn feasible_vertices(&self) -> Vec<Vec<f64>> {
        let d = self.mu.len();
        let unit = |j: usize| {
            let mut e = vec![0.0; d];
            e[j] = 1.0;
            e
        };
        let mut out = Vec::new();
        for j in 0..d {
            if self.mu[j] >= self.target {
                out.push(unit(j));
            }
        }
        for i in 0..d {
            for j in 0..d {
                if self.mu[i] < self.target && self.mu[j] > self.target {
                    let t = (self.mu[j] - self.target) / (self.mu[j] - self.mu[i]);
                    let mut w = vec![0.0; d];
                    w[i] = t;
                    w[j] = 1.0 - t;
                    out.push(w);
                }
            }
        }
        out
    }

    /// Z* and its minimiser for the normal model, by pairwise Frank-Wolfe on
    /// the vertex weights of the feasible polytope.
    pub fn exact_optimum(&self) -> (f64, Decision) {
        let verts = self.feasible_vertices();
        let d = self.mu.len();
        let combine = |lam: &[f64]| -> Vec<f64> {
            let mut w = vec![0.0; d];
            for (l, v) in lam.iter().zip(&verts) {
                for j in 0..d {
                    w[j] += l * v[j];
                }
            }
            w
        };
        let f = |w: &[f64]| self.normal_cvar(w);
        let mut lam = vec![0.0; verts.len()];
        let start = (0..verts.len())
            .min_by(|&a, &b| f(&verts[a]).total_cmp(&f(&verts[b])))
            .expect("at least one feasible vertex");
        lam[start] = 1.0;
        let kappa = if self.alpha >= 1.0 {
            0.0
        } else {
            normal_pdf(normal_quantile(1.0 - self.alpha).unwrap()) / self.alpha
        };
        for _ in 0..20_000 {
            let w = combine(&lam);
            let (_, sd) = self.return_moments(&w);
            let grad: Vec<f64> = (0..d)
                .map(|i| {
                    let sw: f64 = (0..d).map(|j| self.sigma[i][j] * w[j]).sum();
                    -self.mu[i] + if sd > 0.0 { kappa * sw / sd } else { 0.0 }
                })
                .collect();
            let score = |v: &Vec<f64>| -> f64 { v.iter().zip(&grad).map(|(a, g)| a * g).sum() };
            let s = (0..verts.len())
                .min_by(|&a, &b| score(&verts[a]).total_cmp(&score(&verts[b])))
                .unwrap();
            let a = (0..verts.len())
                .filter(|&i| lam[i] > 0.0)
                .max_by(|&a, &b| score(&verts[a]).total_cmp(&score(&verts[b])))
                .unwrap();
            let gap = score(&verts[a]) - score(&verts[s]);
            if gap <= 1e-13 || s == a {
                break;
            }
            let step_max = lam[a];
            let along = |gamma: f64| {
                let mut l2 = lam.clone();
                l2[s] += gamma;
                l2[a] -= gamma;
                f(&combine(&l2))
            };
            let (mut lo, mut hi) = (0.0, step_max);
            for _ in 0..100 {
                let m1 = lo + (hi - lo) / 3.0;
                let m2 = hi - (hi - lo) / 3.0;
                if along(m1) <= along(m2) {
                    hi = m2;
                } else {
                    lo = m1;
                }
            }
            let gamma = if along(step_max) <= along(0.5 * (lo + hi)) {
                step_max
            } else {
                0.5 * (lo + hi)
            };
            lam[s] += gamma;
            lam[a] -= gamma;
            if lam[a] < 1e-15 {
                lam[a] = 0.0;
            }
        }
        let w = combine(&lam);
        let (mean, sd) = self.return_moments(&w);
        let var_level = if self.alpha >= 1.0 {
            f64::NEG_INFINITY
        } else {
            -mean + sd * normal_quantile(1.0 - self.alpha).unwrap()
        };
        let mut x = vec![var_level];
        x.extend_from_slice(&w);
        (f(&w), Decision(x))
    }

    fn build_lp(&self, sample: &[&[f64]]) -> LinearProgram {
        let d = self.mu.len();
        let k = sample.len();
        let nv = 1 + d + k;
        let mut c = vec![0.0; nv];
        c[0] = 1.0;
        let weight = 1.0 / (self.alpha * k as f64);
        c[1 + d..].iter_mut().for_each(|v| *v = weight);
        let mut lp = LinearProgram::new(c);
        lp.set_bounds(0, f64::NEG_INFINITY, f64::INFINITY);
        for (i, xi) in sample.iter().enumerate() {
            // −ξᵢᵀw − c − uᵢ ≤ 0
            let mut row = vec![0.0; nv];
            row[0] = -1.0;
            for j in 0..d {
                row[1 + j] = -xi[j];
            }
            row[1 + d + i] = -1.0;
            lp.add_le(row, 0.0);
        }
        let mut ret = vec![0.0; nv];
        ret[1..1 + d].copy_from_slice(&self.mu);
        lp.add_ge(ret, self.target);
        let mut budget = vec![0.0; nv];
        budget[1..1 + d].iter_mut().for_each(|v| *v = 1.0);
        lp.add_eq(budget, 1.0);
        lp
    }
}

impl StochasticProgram for PortfolioCvar {
    fn key(&self) -> &str {
        "portfolio"
    }

    fn dim(&self) -> usize {
        self.mu.len()
    }

    fn cost(&self, x: &Decision, xi: &[f64]) -> f64 {
        let c = x.0[0];
        let ret: f64 = self.weights(x).iter().zip(xi).map(|(w, r)| w * r).sum();
        c + (-ret - c).max(0.0) / self.alpha
    }

    fn solve_saa(&self, sample: &[&[f64]]) -> Result<SaaSolution> {
        require_nonempty(sample)?;
        let d = self.mu.len();
        let lp = self.build_lp(sample);
        let sol = simplex_solve(&lp)?;
        match sol.status {
            LpStatus::Optimal => {
                let mut x = sol.point[..1 + d].to_vec();
                // clean round-off on the simplex weights
                for w in x[1..].iter_mut() {
                    if *w < 0.0 {
                        *w = 0.0;
                    }
                }
                Ok(SaaSolution {
                    value: sol.value,
                    solution: Decision(x),
                })
            }
            LpStatus::Infeasible => Err(Error::TargetReturnInfeasible),
            LpStatus::Unbounded => Err(Error::invalid("portfolio LP unbounded")),
        }
    }

    fn sample_into(&self, rng: &mut StreamRng, out: &mut [f64]) {
        mvn_fill(rng, &self.mu, &self.chol, out).expect("dimensions fixed at construction");
    }

    fn is_feasible(&self, x: &Decision) -> bool {
        let d = self.mu.len();
        if x.0.len() != 1 + d || !x.0[0].is_finite() {
            return false;
        }
        let w = self.weights(x);
        let ret: f64 = self.mu.iter().zip(w).map(|(m, v)| m * v).sum();
        w.iter().all(|&v| v >= -1e-7)
            && (w.iter().sum::<f64>() - 1.0).abs() <= 1e-7
            && ret >= self.target - 1e-7
    }

    fn random_feasible(&self, rng: &mut StreamRng) -> Decision {
        let d = self.mu.len();
        let mut w: Vec<f64> = (0..d).map(|_| -rng.gen::<f64>().max(1e-300).ln()).collect();
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= s);
        let best = (0..d)
            .max_by(|&a, &b| self.mu[a].total_cmp(&self.mu[b]))
            .unwrap();
        let ret: f64 = self.mu.iter().zip(&w).map(|(m, v)| m * v).sum();
        if ret < self.target {
            // pull towards the highest-return asset until the target holds
            let t = (self.target - ret) / (self.mu[best] - ret);
            let t = (t + rng.gen::<f64>() * (1.0 - t)).min(1.0);
            w.iter_mut().for_each(|v| *v *= 1.0 - t);
            w[best] += t;
        }
        let mut x = vec![rng.gen_range(-6.0..6.0)];
        x.extend(w);
        Decision(x)
    }

    fn true_optimum(&self) -> Option<f64> {
        self.truth.as_ref().map(|t| t.0)
    }

    fn true_solution(&self) -> Option<Decision> {
        self.truth.as_ref().map(|t| t.1.clone())
    }

    fn objective(&self, x: &Decision) -> Option<f64> {
        if self.alpha >= 1.0 {
            let (mean, _) = self.return_moments(self.weights(x));
            return Some(-mean);
        }
        let c = x.0[0];
        let (mean, sd) = self.return_moments(self.weights(x));
        // loss L = −ξᵀw ~ N(−mean, sd²); E[(L − c)₊]
        let m = -mean;
        let excess = if sd > 0.0 {
            let z = (c - m) / sd;
            sd * normal_pdf(z) + (m - c) * normal_cdf(-z)
        } else {
            (m - c).max(0.0)
        };
        Some(c + excess / self.alpha)
    }
}

// ---------------------------------------------------------------------------
// Binary item selection

/// `min E[ξᵀx]` over `x ∈ {0,1}¹⁰` with `Ax ≤ b`, ξ ~ N(μ, Σ).
#[derive(Debug, Clone)]
pub struct ItemSelection {
    mu: Vec<f64>,
    chol: Vec<Vec<f64>>,
    /// Feasible selections as bit masks (bit i = item i+1), ascending.
    feasible: Vec<u32>,
    truth: (f64, Decision),
}

pub fn item_selection_ip(
    mu: Vec<f64>,
    sigma: Vec<Vec<f64>>,
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
) -> Result<ItemSelection> {
    let d = mu.len();
    if d > 20 {
        return Err(Error::OracleScale(format!("{d} items (max 20)")));
    }
    if a.len() != b.len() || a.iter().any(|r| r.len() != d) {
        return Err(Error::invalid("A and b have inconsistent shapes"));
    }
    let chol = cholesky(&sigma)?;
    let feasible: Vec<u32> = (0u32..1 << d)
        .filter(|&mask| {
            a.iter().zip(&b).all(|(row, &rhs)| {
                let lhs: f64 = (0..d).filter(|i| mask >> i & 1 == 1).map(|i| row[i]).sum();
                lhs <= rhs + 1e-12
            })
        })
        .collect();
    if feasible.is_empty() {
        return Err(Error::invalid(
            "item-selection program has no feasible selection",
        ));
    }
    let sums = subset_sums(&mu);
    let best = best_mask(&feasible, &sums);
    let truth = (sums[best as usize], mask_decision(best, d));
    Ok(ItemSelection {
        mu,
        chol,
        feasible,
        truth,
    })
}

/// The problem with the shipped μ, Σ, A and b.
pub fn default_item_selection() -> ItemSelection {
    let c = &constants().ip;
    item_selection_ip(c.mu.clone(), c.sigma.clone(), c.a.clone(), c.b.clone())
        .expect("shipped item-selection constants are valid")
}

fn subset_sums(costs: &[f64]) -> Vec<f64> {
    let d = costs.len();
    let mut sums = vec![0.0; 1 << d];
    for mask in 1usize..1 << d {
        let low = mask.trailing_zeros() as usize;
        sums[mask] = sums[mask & (mask - 1)] + costs[low];
    }
    sums
}

fn best_mask(feasible: &[u32], sums: &[f64]) -> u32 {
    let mut best = feasible[0];
    for &m in &feasible[1..] {
        if sums[m as usize] < sums[best as usize] {
            best = m;
        }
    }
    best
}

fn mask_decision(mask: u32, d: usize) -> Decision {
    Decision((0..d).map(|i| f64::from(mask >> i & 1)).collect())
}

impl ItemSelection {
    pub fn feasible_masks(&self) -> &[u32] {
        &self.feasible
    }

    /// Minimises `cᵀx` over the feasible selections.
    pub fn solve_linear(&self, costs: &[f64]) -> SaaSolution {
        let sums = subset_sums(costs);
        let best = best_mask(&self.feasible, &sums);
        SaaSolution {
            value: sums[best as usize],
            solution: mask_decision(best, self.mu.len()),
        }
    }
}

impl StochasticProgram for ItemSelection {
    fn key(&self) -> &str {
        "ip"
    }

    fn dim(&self) -> usize {
        self.mu.len()
    }

    fn cost(&self, x: &Decision, xi: &[f64]) -> f64 {
        x.0.iter().zip(xi).map(|(a, b)| a * b).sum()
    }

    fn solve_saa(&self, sample: &[&[f64]]) -> Result<SaaSolution> {
        require_nonempty(sample)?;
        Ok(self.solve_linear(&component_means(sample, self.mu.len())))
    }

    fn sample_into(&self, rng: &mut StreamRng, out: &mut [f64]) {
        mvn_fill(rng, &self.mu, &self.chol, out).expect("dimensions fixed at construction");
    }

    fn is_feasible(&self, x: &Decision) -> bool {
        if x.0.len() != self.mu.len() || x.0.iter().any(|&v| v != 0.0 && v != 1.0) {
            return false;
        }
        let mask =
            x.0.iter()
                .enumerate()
                .fold(0u32, |m, (i, &v)| if v == 1.0 { m | 1 << i } else { m });
        self.feasible.binary_search(&mask).is_ok()
    }

    fn random_feasible(&self, rng: &mut StreamRng) -> Decision {
        let m = self.feasible[rng.gen_range(0..self.feasible.len())];
        mask_decision(m, self.mu.len())
    }

    fn true_optimum(&self) -> Option<f64> {
        Some(self.truth.0)
    }

    fn true_solution(&self) -> Option<Decision> {
        Some(self.truth.1.clone())
    }

    fn objective(&self, x: &Decision) -> Option<f64> {
        Some(x.0.iter().zip(&self.mu).map(|(a, b)| a * b).sum())
    }
}

// ---------------------------------------------------------------------------
// Toy linear program

/// `min_{−1 ≤ x ≤ 1} E[−0.05x + (3 − 2x)ξ]`, ξ ~ N(0, 1).
#[derive(Debug, Clone, Default)]
pub struct ToyLp;

pub fn toy_lp() -> ToyLp {
    ToyLp
}

impl ToyLp {
    fn linear_value(x: f64, mean: f64) -> f64 {
        -0.05 * x + (3.0 - 2.0 * x) * mean
    }

    /// Endpoint comparison for a given ξ̄; ties go to x = 1.
    pub fn solve_mean(mean: f64) -> SaaSolution {
        // g(1) − g(−1) = −0.1 − 4ξ̄
        let x = if -0.1 - 4.0 * mean <= 0.0 { 1.0 } else { -1.0 };
        SaaSolution {
            value: Self::linear_value(x, mean),
            solution: Decision::scalar(x),
        }
    }
}

impl StochasticProgram for ToyLp {
    fn key(&self) -> &str {
        "toylp"
    }

    fn dim(&self) -> usize {
        1
    }

    fn cost(&self, x: &Decision, xi: &[f64]) -> f64 {
        Self::linear_value(x.0[0], xi[0])
    }

    fn solve_saa(&self, sample: &[&[f64]]) -> Result<SaaSolution> {
        require_nonempty(sample)?;
        let mean = sample.iter().map(|xi| xi[0]).sum::<f64>() / sample.len() as f64;
        Ok(Self::solve_mean(mean))
    }

    fn sample_into(&self, rng: &mut StreamRng, out: &mut [f64]) {
        out[0] = rng.sample(StandardNormal);
    }

    fn is_feasible(&self, x: &Decision) -> bool {
        x.0.len() == 1 && (-1.0..=1.0).contains(&x.0[0])
    }

    fn random_feasible(&self, rng: &mut StreamRng) -> Decision {
        Decision::scalar(rng.gen_range(-1.0..=1.0))
    }

    fn true_optimum(&self) -> Option<f64> {
        Some(constants().toylp.truth)
    }

    fn true_solution(&self) -> Option<Decision> {
        Some(Decision::scalar(constants().toylp.solution))
    }

    fn objective(&self, x: &Decision) -> Option<f64> {
        Some(-0.05 * x.0[0])
    }
}

// ---------------------------------------------------------------------------
// Gap program

/// `h(x, ξ) − h(x̂, ξ)` for a fixed candidate `x̂`; optimal value `−G(x̂)`.
#[derive(Clone)]
pub struct GapProgram {
    base: Arc<dyn StochasticProgram>,
    x_hat: Decision,
    key: String,
}

pub fn gap_program(base: Arc<dyn StochasticProgram>, x_hat: Decision) -> Result<GapProgram> {
    if !base.is_feasible(&x_hat) {
        return Err(Error::InfeasibleDecision(format!(
            "{:?} is not feasible for `{}`",
            x_hat.0,
            base.key()
        )));
    }
    let key = format!("{}-gap", base.key());
    Ok(GapProgram { base, x_hat, key })
}

impl GapProgram {
    pub fn x_hat(&self) -> &Decision {
        &self.x_hat
    }

    pub fn base(&self) -> &Arc<dyn StochasticProgram> {
        &self.base
    }
}

impl StochasticProgram for GapProgram {
    fn key(&self) -> &str {
        &self.key
    }

    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn cost(&self, x: &Decision, xi: &[f64]) -> f64 {
        self.base.cost(x, xi) - self.base.cost(&self.x_hat, xi)
    }

    fn solve_saa(&self, sample: &[&[f64]]) -> Result<SaaSolution> {
        let base = self.base.solve_saa(sample)?;
        let offset = self.base.sample_average(&self.x_hat, sample);
        Ok(SaaSolution {
            value: base.value - offset,
            solution: base.solution,
        })
    }

    fn sample_into(&self, rng: &mut StreamRng, out: &mut [f64]) {
        self.base.sample_into(rng, out)
    }

    fn is_feasible(&self, x: &Decision) -> bool {
        self.base.is_feasible(x)
    }

    fn random_feasible(&self, rng: &mut StreamRng) -> Decision {
        self.base.random_feasible(rng)
    }

    fn true_optimum(&self) -> Option<f64> {
        let z_hat = self.base.objective(&self.x_hat)?;
        Some(self.base.true_optimum()? - z_hat)
    }

    fn true_solution(&self) -> Option<Decision> {
        self.base.true_solution()
    }

    fn objective(&self, x: &Decision) -> Option<f64> {
        Some(self.base.objective(x)? - self.base.objective(&self.x_hat)?)
    }
}

// ---------------------------------------------------------------------------
// Registry

pub const PROBLEM_KEYS: [&str; 4] = ["cvar", "portfolio", "ip", "toylp"];

/// Benchmark problem with its shipped default parameters.
pub fn problem_by_key(key: &str) -> Result<Arc<dyn StochasticProgram>> {
    Ok(match key {
        "cvar" => Arc::new(cvar1d(constants().cvar.alpha)?),
        "portfolio" => Arc::new(default_portfolio()),
        "ip" => Arc::new(default_item_selection()),
        "toylp" => Arc::new(toy_lp()),
        other => return Err(Error::UnknownProblem(other.to_string())),
    })
}

/// Where a problem's Z* comes from, for result tables.
pub fn truth_tag(key: &str) -> String {
    match key {
        "portfolio" => constants().portfolio.truth_tag.clone(),
        "cvar" => "rounded".to_string(),
        "ip" | "toylp" => "exact".to_string(),
        _ => "unknown".to_string(),
    }
}
