//! Linear Gaussian test channel achieving the indirect NRDF, and a
//! Monte-Carlo harness that drives it with simulated data.
//!
//! The channel reproduces the filter statistic as
//! `y_t = H_t ξ_t + (I − H_t) A y_{t−1} + v_t`, `v_t ~ N(0, Σ_v,t)`, with
//! `H_t Σ^ξ_{t|t−1} = Σ^ξ_{t|t−1} − Σ^ξ_{t|t}` and `Σ_v,t = Σ^ξ_{t|t} H_tᵀ`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{NrdfError, Result};
use crate::finite::{FiniteHorizonProblem, WaterfillSolution};
use crate::kf::kf_forward;
use crate::linalg;
use crate::model::{Stage, SystemModel, TimeVaryingSystemModel};
use crate::stationary::StationaryTestChannelSpec;

/// Default numerical-rank tolerance for [`reduce_rank`], relative to the largest eigenvalue.
pub const RANK_REL_TOL: f64 = 1e-10;

/// Per-stage channel matrices. A single stage is applied at every time step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestChannel {
    pub h: Vec<DMatrix<f64>>,
    pub sigma_v: Vec<DMatrix<f64>>,
    /// Matrix applied to `y_{t−1}` in the feedback term at stage t.
    pub a: Vec<DMatrix<f64>>,
    /// Σ^ξ_{t|t}
    pub post: Vec<DMatrix<f64>>,
    /// Σ^ξ_{t|t−1}
    pub prior: Vec<DMatrix<f64>>,
    /// Numerical rank of `Σ^ξ_{t|t−1} − Σ^ξ_{t|t}` per stage.
    pub reduced_dim: Vec<usize>,
}

impl TestChannel {
    pub fn stages(&self) -> usize {
        self.h.len()
    }

    pub fn dim(&self) -> usize {
        self.h.first().map_or(0, |h| h.nrows())
    }

    /// Time-invariant channel from a stationary posterior/prior pair.
    pub fn from_stationary(model: &SystemModel, spec: &StationaryTestChannelSpec) -> Result<Self> {
        build_test_channel(
            std::slice::from_ref(&spec.sigma_xi),
            std::slice::from_ref(&spec.pi_xi),
            std::slice::from_ref(model.a()),
        )
    }

    /// Per-stage channel of a scalar finite-horizon allocation.
    pub fn from_finite(problem: &FiniteHorizonProblem, sol: &WaterfillSolution) -> Result<Self> {
        let s = |v: f64| DMatrix::from_element(1, 1, v);
        let alpha = problem.alpha();
        let feedback: Vec<_> = (0..alpha.len()).map(|t| s(if t == 0 { 0.0 } else { alpha[t - 1] })).collect();
        let post: Vec<_> = sol.post_var.iter().map(|&v| s(v)).collect();
        let prior: Vec<_> = sol.prior_var.iter().map(|&v| s(v)).collect();
        build_test_channel(&post, &prior, &feedback)
    }
}

/// Builds `H_t = (Σ^ξ_{t|t−1} − Σ^ξ_{t|t})(Σ^ξ_{t|t−1})⁻¹` and `Σ_v,t = Σ^ξ_{t|t}H_tᵀ`.
///
/// `a[t]` is the matrix multiplying `y_{t−1}` at stage t. H is obtained
/// from a Cholesky solve against the prior rather than an explicit inverse.
pub fn build_test_channel(post: &[DMatrix<f64>], prior: &[DMatrix<f64>], a: &[DMatrix<f64>]) -> Result<TestChannel> {
    if post.len() != prior.len() || post.len() != a.len() || post.is_empty() {
        return Err(NrdfError::DimensionMismatch {
            what: "test channel sequences".into(),
            expected: (post.len(), post.len()),
            found: (prior.len(), a.len()),
        });
    }
    let p = post[0].nrows();
    let mut ch = TestChannel {
        h: Vec::with_capacity(post.len()),
        sigma_v: Vec::with_capacity(post.len()),
        a: a.to_vec(),
        post: post.to_vec(),
        prior: prior.to_vec(),
        reduced_dim: Vec::with_capacity(post.len()),
    };
    for (t, ((s, pi), at)) in post.iter().zip(prior).zip(a).enumerate() {
        if s.shape() != (p, p) || pi.shape() != (p, p) || at.shape() != (p, p) {
            return Err(NrdfError::DimensionMismatch { what: format!("test channel stage {t}"), expected: (p, p), found: s.shape() });
        }
        let innov = linalg::symmetrize(&(pi - s));
        if !linalg::is_psd(s) || !linalg::is_psd(&innov) {
            return Err(NrdfError::ScalingNotPsd { stage: t });
        }
        let chol = linalg::spd_cholesky(pi).ok_or(NrdfError::ScalingNotPsd { stage: t })?;
        // H Π = Π − Σ  ⇔  Π Hᵀ = Π − Σ
        let h = chol.solve(&innov).transpose();
        let sigma_v = linalg::symmetrize(&(s * h.transpose()));
        if !linalg::is_psd(&sigma_v) {
            return Err(NrdfError::ScalingNotPsd { stage: t });
        }
        let rank = match reduce_rank(&innov, RANK_REL_TOL) {
            Ok((basis, _)) => basis.ncols(),
            Err(_) => 0,
        };
        ch.h.push(h);
        ch.sigma_v.push(sigma_v);
        ch.reduced_dim.push(rank);
    }
    Ok(ch)
}

/// Support of a PSD matrix: the eigenvectors with eigenvalue above
/// `tol · λ_max` (columns of `basis`) and the covariance restricted to them.
pub fn reduce_rank(innov_cov: &DMatrix<f64>, tol: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let eig = SymmetricEigen::new(linalg::symmetrize(innov_cov));
    let lmax = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    if !(lmax > 0.0) {
        return Err(NrdfError::ZeroMatrix);
    }
    let keep: Vec<usize> = (0..eig.eigenvalues.len()).filter(|&i| eig.eigenvalues[i] > tol * lmax).collect();
    let cols: Vec<_> = keep.iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect();
    let basis = DMatrix::from_columns(&cols);
    let reduced = linalg::symmetrize(&(basis.transpose() * innov_cov * &basis));
    Ok((basis, reduced))
}

/// Rate `½ log₂(det Π / det Σ)` evaluated on the support of the whitened
/// innovation `Π^{-1/2}(Π − Σ)Π^{-1/2}` only; zero when that support is empty.
pub fn reduced_rate(post: &DMatrix<f64>, prior: &DMatrix<f64>, tol: f64) -> Result<f64> {
    let chol = linalg::spd_cholesky(prior).ok_or(NrdfError::SingularPosterior)?;
    let l = chol.l();
    let innov = prior - post;
    let left = l.solve_lower_triangular(&innov).ok_or(NrdfError::SingularPosterior)?;
    let whitened = l.solve_lower_triangular(&left.transpose()).ok_or(NrdfError::SingularPosterior)?;
    let reduced = match reduce_rank(&whitened, tol) {
        Ok((_, r)) => r,
        Err(NrdfError::ZeroMatrix) => return Ok(0.0),
        Err(e) => return Err(e),
    };
    let k = reduced.nrows();
    let residual = DMatrix::identity(k, k) - reduced;
    let ld = linalg::log_det_spd(&residual).ok_or(NrdfError::SingularPosterior)?;
    Ok((-0.5 * ld / std::f64::consts::LN_2).max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimulationConfig {
    /// Time steps per trial (stages `0..horizon`).
    pub horizon: usize,
    pub trials: usize,
    /// Leading steps of every trial left out of the statistics.
    pub burn_in: usize,
    pub seed: u64,
}

impl SimulationConfig {
    pub fn samples(&self) -> usize {
        self.trials * self.horizon.saturating_sub(self.burn_in)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub samples: usize,
    /// Mean of ‖x_t − y_t‖².
    pub empirical_mse: f64,
    /// Standard error of `empirical_mse` across trials.
    pub mse_std_err: f64,
    /// ½ log₂(det Π̂^ξ / det Σ̂^ξ) from second moments, averaged over stages when time-varying.
    pub empirical_rate: f64,
    /// Expected distortion `trace(Σ^x_{t|t}) + trace(Σ^ξ_{t|t})` over the recorded steps.
    pub target_d: f64,
    pub target_rate: f64,
    /// Pooled second moment of ξ_t − y_t.
    pub posterior_cov_hat: DMatrix<f64>,
    /// Pooled second moment of ξ_t − A y_{t−1}.
    pub prior_cov_hat: DMatrix<f64>,
    /// Largest |correlation| between a component of ξ_t − Aξ_{t−1} and one of y_{t−1}.
    pub max_innovation_corr: f64,
}

/// Source model driven by [`simulate`].
#[derive(Debug, Clone, Copy)]
pub enum SimulationModel<'a> {
    Invariant(&'a SystemModel),
    TimeVarying(&'a TimeVaryingSystemModel),
}

impl<'a> From<&'a SystemModel> for SimulationModel<'a> {
    fn from(m: &'a SystemModel) -> Self {
        Self::Invariant(m)
    }
}

impl<'a> From<&'a TimeVaryingSystemModel> for SimulationModel<'a> {
    fn from(m: &'a TimeVaryingSystemModel) -> Self {
        Self::TimeVarying(m)
    }
}

/// Second-moment accumulators of one recorded stage (or all of them, pooled).
#[derive(Clone)]
struct Moments {
    n: usize,
    post: DMatrix<f64>,
    prior: DMatrix<f64>,
    cross: DMatrix<f64>,
    innov_sq: DVector<f64>,
    y_sq: DVector<f64>,
}

impl Moments {
    fn new(p: usize) -> Self {
        Self {
            n: 0,
            post: DMatrix::zeros(p, p),
            prior: DMatrix::zeros(p, p),
            cross: DMatrix::zeros(p, p),
            innov_sq: DVector::zeros(p),
            y_sq: DVector::zeros(p),
        }
    }

    fn merge(&mut self, o: &Moments) {
        self.n += o.n;
        self.post += &o.post;
        self.prior += &o.prior;
        self.cross += &o.cross;
        self.innov_sq += &o.innov_sq;
        self.y_sq += &o.y_sq;
    }

    fn covariances(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = self.n.max(1) as f64;
        (linalg::symmetrize(&(&self.post / n)), linalg::symmetrize(&(&self.prior / n)))
    }
}

struct TrialOutput {
    mse_sum: f64,
    moments: Vec<Moments>,
}

/// Everything a trial needs that does not depend on the random draws.
struct Plan<'a> {
    stages: Vec<&'a Stage>,
    gains: Vec<DMatrix<f64>>,
    sqrt_w: Vec<DMatrix<f64>>,
    sqrt_n: Vec<DMatrix<f64>>,
    sqrt_v: Vec<DMatrix<f64>>,
    sqrt_x0: DMatrix<f64>,
    channel: &'a TestChannel,
    pooled: bool,
}

impl Plan<'_> {
    fn channel_stage(&self, t: usize) -> usize {
        if self.channel.stages() == 1 {
            0
        } else {
            t
        }
    }

    fn run_trial(&self, cfg: &SimulationConfig, trial: usize) -> TrialOutput {
        let p = self.sqrt_x0.nrows();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(trial as u64);
        let mut normal = |k: usize| DVector::from_fn(k, |_, _| rng.sample::<f64, _>(StandardNormal));

        let slots = if self.pooled { 1 } else { cfg.horizon - cfg.burn_in };
        let mut moments = vec![Moments::new(p); slots];
        let mut mse_sum = 0.0;

        let mut x = &self.sqrt_x0 * normal(p);
        let mut xi_prev = DVector::zeros(p);
        let mut y_prev = DVector::zeros(p);
        for t in 0..cfg.horizon {
            let stage = self.stages[t];
            if t > 0 {
                let prev = self.stages[t - 1];
                x = &prev.a * &x + &self.sqrt_w[t - 1] * normal(p);
            }
            let m = stage.c.nrows();
            let z = &stage.c * &x + &self.sqrt_n[t] * normal(m);
            let xi_pred = if t == 0 { DVector::zeros(p) } else { &self.stages[t - 1].a * &xi_prev };
            let xi = &xi_pred + &self.gains[t] * (z - &stage.c * &xi_pred);

            let k = self.channel_stage(t);
            let fed_back = &self.channel.a[k] * &y_prev;
            let predicted_err = &xi - &fed_back;
            let y = &fed_back + &self.channel.h[k] * &predicted_err + &self.sqrt_v[k] * normal(p);

            if t >= cfg.burn_in {
                let slot = if self.pooled { 0 } else { t - cfg.burn_in };
                let acc = &mut moments[slot];
                let err = &xi - &y;
                let innov = &xi - &xi_pred;
                acc.n += 1;
                acc.post.ger(1.0, &err, &err, 1.0);
                acc.prior.ger(1.0, &predicted_err, &predicted_err, 1.0);
                acc.cross.ger(1.0, &innov, &y_prev, 1.0);
                acc.innov_sq += innov.component_mul(&innov);
                acc.y_sq += y_prev.component_mul(&y_prev);
                mse_sum += (&x - &y).norm_squared();
            }
            xi_prev = xi;
            y_prev = y;
        }
        TrialOutput { mse_sum, moments }
    }
}

fn rate_bits(post: &DMatrix<f64>, prior: &DMatrix<f64>) -> Result<f64> {
    let lp = linalg::log_det_spd(post).ok_or(NrdfError::SingularPosterior)?;
    let lq = linalg::log_det_spd(prior).ok_or(NrdfError::SingularPosterior)?;
    Ok(0.5 * (lq - lp) / std::f64::consts::LN_2)
}

/// Monte-Carlo run of source, observations, Kalman filter and test channel.
///
/// Every trial starts from `x_0 ~ N(0, Σ_x0)` and `y_{−1} = 0` and owns a
/// ChaCha8 stream `(seed, trial)`, so results do not depend on the thread
/// count. A single-stage channel is applied at every step and its
/// statistics are pooled; a per-stage channel needs one stage per step and
/// its rate is averaged over the recorded stages.
pub fn simulate<'a>(
    model: impl Into<SimulationModel<'a>>,
    channel: &TestChannel,
    config: &SimulationConfig,
) -> Result<SimulationReport> {
    let model = model.into();
    if config.trials == 0 || config.horizon <= config.burn_in {
        return Err(NrdfError::InvalidArgument("simulation needs trials > 0 and horizon > burn_in".into()));
    }
    let tv;
    let tv_model: &TimeVaryingSystemModel = match model {
        SimulationModel::Invariant(m) => {
            tv = m.to_time_varying(config.horizon - 1);
            &tv
        }
        SimulationModel::TimeVarying(m) => m,
    };
    let p = tv_model.state_dim();
    if tv_model.horizon() + 1 < config.horizon {
        return Err(NrdfError::DimensionMismatch {
            what: "simulation horizon vs model stages".into(),
            expected: (config.horizon, p),
            found: (tv_model.horizon() + 1, p),
        });
    }
    let pooled = channel.stages() == 1;
    if channel.dim() != p || (!pooled && channel.stages() < config.horizon) {
        return Err(NrdfError::DimensionMismatch {
            what: "test channel vs model".into(),
            expected: (config.horizon, p),
            found: (channel.stages(), channel.dim()),
        });
    }

    let steps = kf_forward(tv_model)?;
    let stages: Vec<&Stage> = tv_model.stages().iter().collect();
    let plan = Plan {
        gains: steps.iter().map(|s| s.gain.clone()).collect(),
        sqrt_w: stages.iter().map(|s| linalg::psd_sqrt(&s.sigma_w)).collect(),
        sqrt_n: stages.iter().map(|s| linalg::psd_sqrt(&s.sigma_n)).collect(),
        sqrt_v: channel.sigma_v.iter().map(linalg::psd_sqrt).collect(),
        sqrt_x0: linalg::psd_sqrt(tv_model.sigma_x0()),
        stages,
        channel,
        pooled,
    };

    let outputs: Vec<TrialOutput> = (0..config.trials).into_par_iter().map(|k| plan.run_trial(config, k)).collect();

    let slots = if pooled { 1 } else { config.horizon - config.burn_in };
    let mut moments = vec![Moments::new(p); slots];
    let mut total = Moments::new(p);
    let mut trial_mse = Vec::with_capacity(outputs.len());
    for out in &outputs {
        for (acc, m) in moments.iter_mut().zip(&out.moments) {
            acc.merge(m);
            total.merge(m);
        }
        trial_mse.push(out.mse_sum);
    }
    let samples = total.n;
    let per_trial = (config.horizon - config.burn_in) as f64;
    let empirical_mse = trial_mse.iter().sum::<f64>() / samples as f64;
    let mse_std_err = {
        let means: Vec<f64> = trial_mse.iter().map(|s| s / per_trial).collect();
        let k = means.len() as f64;
        if means.len() > 1 {
            let var = means.iter().map(|m| (m - empirical_mse).powi(2)).sum::<f64>() / (k - 1.0);
            (var / k).sqrt()
        } else {
            f64::NAN
        }
    };

    let (posterior_cov_hat, prior_cov_hat) = total.covariances();
    let empirical_rate = if pooled {
        rate_bits(&posterior_cov_hat, &prior_cov_hat)?
    } else {
        let mut acc = 0.0;
        for m in &moments {
            let (po, pr) = m.covariances();
            acc += rate_bits(&po, &pr)?;
        }
        acc / slots as f64
    };

    let mut max_innovation_corr: f64 = 0.0;
    for i in 0..p {
        for j in 0..p {
            let denom = (total.innov_sq[i] * total.y_sq[j]).sqrt();
            if denom > 0.0 {
                max_innovation_corr = max_innovation_corr.max((total.cross[(i, j)] / denom).abs());
            }
        }
    }

    let recorded = config.burn_in..config.horizon;
    let target_d = recorded
        .clone()
        .map(|t| steps[t].posterior_cov.trace() + channel.post[plan.channel_stage(t)].trace())
        .sum::<f64>()
        / per_trial;
    let target_rate = if pooled {
        rate_bits(&channel.post[0], &channel.prior[0])?
    } else {
        let mut acc = 0.0;
        for t in recorded {
            acc += rate_bits(&channel.post[t], &channel.prior[t])?;
        }
        acc / per_trial
    };

    Ok(SimulationReport {
        samples,
        empirical_mse,
        mse_std_err,
        empirical_rate,
        target_d,
        target_rate,
        posterior_cov_hat,
        prior_cov_hat,
        max_innovation_corr,
    })
}
