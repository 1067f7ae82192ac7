//! Finite-horizon indirect NRDF for scalar time-varying sources.
//!
//! With `σ²_υ,t = c_t²σ⁴_{x,t|t-1} / (c_t²σ²_{x,t|t-1} + σ²_n,t)` from the
//! filter, the problem becomes
//!
//! ```text
//! min  ½ Σ_t log(σ²_{ξ,t|t-1} / σ²_{ξ,t|t})
//! s.t. 0 < σ²_{ξ,t|t} ≤ σ²_{ξ,t|t-1},  (1/(n+1)) Σ_t σ²_{ξ,t|t} ≤ D − D_min
//!      σ²_{ξ,t+1|t} = α_t² σ²_{ξ,t|t} + σ²_υ,t+1,  σ²_{ξ,0|-1} = σ²_υ,0
//! ```
//!
//! solved by dynamic reverse waterfilling: every stage takes the KKT level
//! set by a shared multiplier θ, clipped at its prior, and θ is bisected
//! until the average allocation meets the budget.

use serde::{Deserialize, Serialize};

use crate::bisect::{self, THETA_MIN};
use crate::error::{NrdfError, Result};
use crate::kf::{d_min_finite, kf_forward, KfStep};
use crate::model::TimeVaryingSystemModel;

pub const DEFAULT_EPS: f64 = 1e-9;

/// Scalar finite-horizon problem with its filter quantities precomputed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteHorizonProblem {
    model: TimeVaryingSystemModel,
    distortion: f64,
    d_min: f64,
    alpha: Vec<f64>,
    sigma_upsilon: Vec<f64>,
    posterior_var: Vec<f64>,
}

impl FiniteHorizonProblem {
    pub fn new(model: TimeVaryingSystemModel, distortion: f64) -> Result<Self> {
        if !model.is_scalar() {
            return Err(NrdfError::InvalidArgument("finite-horizon waterfilling needs a scalar model".into()));
        }
        let steps = kf_forward(&model)?;
        let d_min = d_min_finite(&steps)?;
        if !d_min.is_finite() {
            return Err(NrdfError::InvalidArgument("minimum distortion is not finite".into()));
        }
        if !(distortion > d_min) {
            return Err(NrdfError::BudgetInfeasible { budget: distortion, d_min });
        }
        let alpha = model.stages().iter().map(|s| s.a[(0, 0)]).collect();
        let sigma_upsilon = steps.iter().map(|s| s.gain_innov_cov[(0, 0)].max(0.0)).collect();
        let posterior_var = steps.iter().map(|s: &KfStep| s.posterior_cov[(0, 0)]).collect();
        Ok(Self { model, distortion, d_min, alpha, sigma_upsilon, posterior_var })
    }

    pub fn model(&self) -> &TimeVaryingSystemModel {
        &self.model
    }
    pub fn horizon(&self) -> usize {
        self.alpha.len() - 1
    }
    pub fn distortion(&self) -> f64 {
        self.distortion
    }
    pub fn d_min(&self) -> f64 {
        self.d_min
    }
    /// Excess budget `D − D_min` available to the statistic.
    pub fn excess(&self) -> f64 {
        self.distortion - self.d_min
    }
    /// σ²_υ,t for every stage.
    pub fn sigma_upsilon(&self) -> &[f64] {
        &self.sigma_upsilon
    }
    /// α_t for every stage.
    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }
    /// Filter posterior variances σ²_{x,t|t}.
    pub fn posterior_var(&self) -> &[f64] {
        &self.posterior_var
    }

    /// β_{t,t+1} = 2α_t² / σ²_υ,t+1 for `t < n`.
    pub fn beta(&self, t: usize) -> f64 {
        let ups = self.sigma_upsilon[t + 1];
        if ups > 0.0 {
            2.0 * self.alpha[t] * self.alpha[t] / ups
        } else {
            f64::INFINITY
        }
    }

    /// Clipped allocation for a fixed θ; calls `visit(t, prior, post)` per stage and returns the sum.
    fn sweep(&self, theta: f64, mut visit: impl FnMut(usize, f64, f64)) -> f64 {
        let n = self.horizon();
        let mut prior = self.sigma_upsilon[0];
        let mut total = 0.0;
        for t in 0..=n {
            let terminal = t == n;
            let beta = if terminal { 0.0 } else { self.beta(t) };
            let level = waterfill_stage(theta, beta, terminal);
            let post = if level < prior { level } else { prior };
            visit(t, prior, post);
            total += post;
            if !terminal {
                prior = self.alpha[t] * self.alpha[t] * post + self.sigma_upsilon[t + 1];
            }
        }
        total
    }

    fn average_allocation(&self, theta: f64) -> f64 {
        self.sweep(theta, |_, _, _| {}) / (self.horizon() + 1) as f64
    }

    /// Allocation and rates at a fixed θ.
    pub fn allocate(&self, theta: f64) -> WaterfillSolution {
        let n1 = self.horizon() + 1;
        let mut prior_var = Vec::with_capacity(n1);
        let mut post_var = Vec::with_capacity(n1);
        self.sweep(theta, |_, pr, po| {
            prior_var.push(pr);
            post_var.push(po);
        });
        let stage_rates: Vec<f64> =
            prior_var.iter().zip(&post_var).map(|(pr, po)| (0.5 * (pr / po).log2()).max(0.0)).collect();
        let total_rate = stage_rates.iter().sum();
        WaterfillSolution {
            theta_star: theta,
            post_var,
            prior_var,
            stage_rates,
            total_rate,
            d_min: self.d_min,
            excess: self.excess(),
            budget_active: true,
        }
    }

    /// Algorithm-1 solve with the default tolerance and automatic bracketing.
    pub fn solve(&self) -> Result<WaterfillSolution> {
        reverse_waterfill_finite(self, DEFAULT_EPS, None)
    }
}

/// Output of the dynamic reverse waterfilling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaterfillSolution {
    /// Multiplier θ* at which the allocation was taken.
    pub theta_star: f64,
    /// σ²_{ξ,t|t}
    pub post_var: Vec<f64>,
    /// σ²_{ξ,t|t-1}
    pub prior_var: Vec<f64>,
    /// Per-stage rates in bits.
    pub stage_rates: Vec<f64>,
    /// Sum of the stage rates in bits.
    pub total_rate: f64,
    pub d_min: f64,
    /// `D − D_min`.
    pub excess: f64,
    /// False when even the zero-rate allocation fits inside the budget.
    pub budget_active: bool,
}

impl WaterfillSolution {
    /// Rate per source sample, `total_rate / (n + 1)`.
    pub fn normalized_rate(&self) -> f64 {
        self.total_rate / self.post_var.len() as f64
    }

    pub fn average_allocation(&self) -> f64 {
        self.post_var.iter().sum::<f64>() / self.post_var.len() as f64
    }
}

/// KKT level of one stage: `(1/β)(√(1 + β/θ) − 1)`, or `1/(2θ)` at the
/// terminal stage and in the `β → 0` limit.
pub fn waterfill_stage(theta: f64, beta: f64, terminal: bool) -> f64 {
    if terminal || beta == 0.0 {
        return 0.5 / theta;
    }
    if beta.is_infinite() {
        return 0.0;
    }
    // (1/β)(√(1+β/θ) − 1) = (1/θ) / (√(1+β/θ) + 1)
    (1.0 / theta) / ((1.0 + beta / theta).sqrt() + 1.0)
}

/// Dynamic reverse waterfilling by bisection on θ.
///
/// A stage's level is compared against its prior and clipped as it is
/// computed. The bisection moves `θ_min` up whenever the average
/// allocation exceeds `D − D_min` by at least `eps`, and stops once
/// `θ_max − θ_min < eps/(n+1)`. `bracket = None` starts from
/// `[1e-12, (n+1)/(2(D − D_min))]`; either way `θ_max` is doubled (up to 200
/// times) until it brackets the crossing.
pub fn reverse_waterfill_finite(
    problem: &FiniteHorizonProblem,
    eps: f64,
    bracket: Option<(f64, f64)>,
) -> Result<WaterfillSolution> {
    if !(eps > 0.0) {
        return Err(NrdfError::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    let n1 = (problem.horizon() + 1) as f64;
    let excess = problem.excess();
    let (theta_min, theta_max) = bracket.unwrap_or((THETA_MIN, n1 / (2.0 * excess)));
    if !(theta_min > 0.0 && theta_max > theta_min) {
        return Err(NrdfError::InvalidArgument(format!("bad theta bracket [{theta_min}, {theta_max}]")));
    }
    let exceeds = |theta: f64| problem.average_allocation(theta) - excess >= eps;

    let mut lo = theta_min;
    while !exceeds(lo) && lo > THETA_MIN {
        lo = (lo * 0.5).max(THETA_MIN);
    }
    if !exceeds(lo) {
        // Every stage is clipped at its prior and the budget is slack: zero rate.
        let mut sol = problem.allocate(lo);
        sol.budget_active = false;
        return Ok(sol);
    }
    let hi = bisect::bracket_upper(theta_max, exceeds)?;
    let theta = bisect::bisect(lo, hi, eps / n1, exceeds);
    Ok(problem.allocate(theta))
}

/// Rates under a per-stage distortion constraint `D_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointwiseRates {
    /// σ²_{ξ,t|t-1} = α²_{t-1}(D_{t-1} − D^min_{t-1}) + σ²_υ,t
    pub prior_var: Vec<f64>,
    pub stage_rates: Vec<f64>,
    pub total_rate: f64,
}

/// Closed-form rates for pointwise constraints: stage `t` costs
/// `½[log₂(σ²_{ξ,t|t-1} / (D_t − D^min_t))]⁺`.
///
/// `d_min_t` holds the filter posterior variances σ²_{x,t|t}.
pub fn pointwise_closed_form(
    model: &TimeVaryingSystemModel,
    d_t: &[f64],
    d_min_t: &[f64],
) -> Result<PointwiseRates> {
    if !model.is_scalar() {
        return Err(NrdfError::InvalidArgument("pointwise closed form needs a scalar model".into()));
    }
    let n1 = model.horizon() + 1;
    if d_t.len() != n1 || d_min_t.len() != n1 {
        return Err(NrdfError::DimensionMismatch {
            what: "pointwise distortion sequences".into(),
            expected: (n1, n1),
            found: (d_t.len(), d_min_t.len()),
        });
    }
    for (t, (&d, &dm)) in d_t.iter().zip(d_min_t).enumerate() {
        if !(d > dm) {
            return Err(NrdfError::InfeasibleStage { stage: t, d, d_min: dm });
        }
    }
    let steps = kf_forward(model)?;
    let mut prior_var = Vec::with_capacity(n1);
    let mut stage_rates = Vec::with_capacity(n1);
    for t in 0..n1 {
        let ups = steps[t].gain_innov_cov[(0, 0)].max(0.0);
        let prior = if t == 0 {
            ups
        } else {
            let a = model.stage(t - 1).a[(0, 0)];
            a * a * (d_t[t - 1] - d_min_t[t - 1]) + ups
        };
        prior_var.push(prior);
        stage_rates.push((0.5 * (prior / (d_t[t] - d_min_t[t])).log2()).max(0.0));
    }
    let total_rate = stage_rates.iter().sum();
    Ok(PointwiseRates { prior_var, stage_rates, total_rate })
}
