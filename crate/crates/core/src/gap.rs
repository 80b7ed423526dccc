//! Upper confidence bounds on the optimality gap `G(x̂) = Z(x̂) − Z*`.
//!
//! Two strategies are offered. The Bonferroni route combines a 97.5% upper
//! bound on `Z(x̂)` with a 97.5% lower bound on `Z*`. The common-random-numbers
//! route bounds the optimal value of the shifted program
//! `min_x E[h(x, ξ) − h(x̂, ξ)]`, which equals `−G(x̂)`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bounds::{
    bag_bound, batching_bound, default_resamples, single_replication_bound, BoundReport,
    ResampleScheme, SingleReplicationMode,
};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::programs::{gap_program, Decision, StochasticProgram};
use crate::rng::RngStream;
use crate::stats::{mean_var, normal_quantile};

/// Training data, evaluation data and the candidate built from the former.
#[derive(Debug, Clone)]
pub struct GapSetup {
    pub train: Dataset,
    pub eval: Dataset,
    pub x_hat: Decision,
    pub alpha: f64,
}

impl GapSetup {
    /// Solves the SAA on `train` to obtain `x̂`.
    pub fn from_training(
        program: &dyn StochasticProgram,
        train: Dataset,
        eval: Dataset,
        alpha: f64,
    ) -> Result<Self> {
        let x_hat = program.solve_saa(&train.all())?.solution;
        Ok(Self {
            train,
            eval,
            x_hat,
            alpha,
        })
    }

    fn validate(&self) -> Result<()> {
        if self.eval.n() < 2 {
            return Err(Error::invalid("gap bounds need n2 ≥ 2 evaluation points"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid(format!(
                "alpha = {} outside (0, 1)",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// Lower-bound procedure used inside a gap bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LowerMethod {
    /// `resamples = None` means `5nk` for the data the bound is computed on.
    Bagging {
        k: usize,
        resamples: Option<usize>,
        scheme: ResampleScheme,
    },
    Batching {
        k: usize,
    },
    SingleReplication,
}

/// Lower confidence bound on the optimal value of `program` from `data`.
pub fn lower_bound(
    data: &Dataset,
    program: &dyn StochasticProgram,
    method: LowerMethod,
    alpha: f64,
    rng: &RngStream,
) -> Result<BoundReport> {
    match method {
        LowerMethod::Bagging {
            k,
            resamples,
            scheme,
        } => {
            let b = resamples.unwrap_or_else(|| default_resamples(data.n(), k));
            let out = bag_bound(data, program, k, b, alpha, scheme, rng)?;
            Ok(BoundReport::from(&out))
        }
        LowerMethod::Batching { k } => batching_bound(data, program, k, alpha),
        LowerMethod::SingleReplication => {
            single_replication_bound(data, program, alpha, SingleReplicationMode::OptimalValue)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    /// Upper confidence bound on `G(x̂)`.
    pub bound: f64,
    /// Bonferroni only: the upper bound on `Z(x̂)`.
    pub upper: Option<f64>,
    /// Lower bound on `Z*` (Bonferroni) or on `−G(x̂)` (CRN).
    pub lower: BoundReport,
}

/// `U − L` with `U = h̄ + z σ̂/√n₂` on the evaluation data and `L` a lower
/// bound on `Z*` from all `n₁ + n₂` observations, each at level `1 − α/2`.
pub fn gap_bound_bc(
    setup: &GapSetup,
    program: &dyn StochasticProgram,
    method: LowerMethod,
    rng: &RngStream,
) -> Result<GapReport> {
    setup.validate()?;
    let half = setup.alpha / 2.0;
    let costs: Vec<f64> = setup
        .eval
        .rows()
        .map(|xi| program.cost(&setup.x_hat, xi))
        .collect();
    let s = mean_var(&costs)?;
    let upper = s.mean + normal_quantile(1.0 - half)? * s.std_err();
    let pooled = setup.train.concat(&setup.eval)?;
    let lower = lower_bound(&pooled, program, method, half, rng)?;
    Ok(GapReport {
        bound: upper - lower.bound,
        upper: Some(upper),
        lower,
    })
}

/// `−L` where `L` is a lower bound on the optimal value of the shifted
/// program, computed from the evaluation data only.
pub fn gap_bound_crn(
    setup: &GapSetup,
    program: Arc<dyn StochasticProgram>,
    method: LowerMethod,
    rng: &RngStream,
) -> Result<GapReport> {
    setup.validate()?;
    let shifted = gap_program(program, setup.x_hat.clone())?;
    let lower = lower_bound(&setup.eval, &shifted, method, setup.alpha, rng)?;
    Ok(GapReport {
        bound: -lower.bound,
        upper: None,
        lower,
    })
}
