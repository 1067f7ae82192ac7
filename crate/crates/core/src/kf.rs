//! Forward covariance recursions of the classical Kalman filter.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{NrdfError, Result};
use crate::linalg;
use crate::model::{Stage, TimeVaryingSystemModel};

/// Covariances produced at one stage of the filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KfStep {
    /// Σ^x_{t|t-1}
    pub prior_cov: DMatrix<f64>,
    /// Σ^x_{t|t}
    pub posterior_cov: DMatrix<f64>,
    /// k^z_t
    pub gain: DMatrix<f64>,
    /// Σ_{I^z_t}
    pub innov_cov: DMatrix<f64>,
    /// k^z_t Σ_{I^z_t} (k^z_t)ᵀ, which equals `prior_cov - posterior_cov`.
    pub gain_innov_cov: DMatrix<f64>,
}

/// Measurement update from a prior covariance.
///
/// Fails with `SingularInnovation { stage }` when `CΣCᵀ + Σ_n` does not
/// pass the pivot test.
pub(crate) fn measurement_update(prior: &DMatrix<f64>, stage: &Stage, t: usize) -> Result<KfStep> {
    let innov_cov = linalg::symmetrize(&(&stage.c * prior * stage.c.transpose() + &stage.sigma_n));
    let chol = linalg::spd_cholesky(&innov_cov).ok_or(NrdfError::SingularInnovation { stage: t })?;
    // k = Σ Cᵀ S⁻¹  ⇔  S kᵀ = C Σ
    let cp = &stage.c * prior;
    let gain = chol.solve(&cp).transpose();
    let gain_innov_cov = linalg::symmetrize(&(&gain * &cp));
    let posterior_cov = linalg::symmetrize(&(prior - &gain_innov_cov));
    Ok(KfStep { prior_cov: prior.clone(), posterior_cov, gain, innov_cov, gain_innov_cov })
}

/// Time update `AΣAᵀ + Σ_w`.
pub(crate) fn time_update(posterior: &DMatrix<f64>, stage: &Stage) -> DMatrix<f64> {
    linalg::symmetrize(&(&stage.a * posterior * stage.a.transpose() + &stage.sigma_w))
}

/// Runs the covariance recursions over all `n + 1` stages, starting from Σ^x_{0|-1} = Σ_x0.
pub fn kf_forward(model: &TimeVaryingSystemModel) -> Result<Vec<KfStep>> {
    let mut steps = Vec::with_capacity(model.horizon() + 1);
    let mut prior = model.sigma_x0().clone();
    for (t, stage) in model.stages().iter().enumerate() {
        let step = measurement_update(&prior, stage, t)?;
        prior = time_update(&step.posterior_cov, stage);
        steps.push(step);
    }
    Ok(steps)
}

/// D^min over the horizon: the average posterior trace.
pub fn d_min_finite(steps: &[KfStep]) -> Result<f64> {
    if steps.is_empty() {
        return Err(NrdfError::InvalidArgument("empty filter trajectory".into()));
    }
    let total: f64 = steps.iter().map(|s| s.posterior_cov.trace()).sum();
    Ok((total / steps.len() as f64).max(0.0))
}
