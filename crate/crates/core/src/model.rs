//! Partially observed Gauss-Markov source models.
//!
//! The hidden state evolves as `x_{t+1} = A_t x_t + w_t` and is seen through
//! `z_t = C_t x_t + n_t`, with `w_t ~ N(0, Σ_w,t)`, `n_t ~ N(0, Σ_n,t)` and
//! `x_0 ~ N(0, Σ_x0)`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{NrdfError, Result};
use crate::linalg;

const SYMMETRY_TOL: f64 = 1e-9;
const ROW_RANK_TOL: f64 = 1e-10;

/// Matrices of one time step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub a: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub sigma_w: DMatrix<f64>,
    pub sigma_n: DMatrix<f64>,
}

impl Stage {
    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn obs_dim(&self) -> usize {
        self.c.nrows()
    }

    fn validate(&self, prefix: &str) -> Result<()> {
        let p = self.a.nrows();
        check_shape(&format!("{prefix}A"), &self.a, (p, p))?;
        if p == 0 {
            return Err(invalid(format!("{prefix}A"), "state dimension must be positive"));
        }
        let m = self.c.nrows();
        check_shape(&format!("{prefix}C"), &self.c, (m, p))?;
        if m == 0 || m > p {
            return Err(invalid(format!("{prefix}C"), format!("need 1 <= m <= p, got m = {m}, p = {p}")));
        }
        check_shape(&format!("{prefix}Sigma_w"), &self.sigma_w, (p, p))?;
        check_shape(&format!("{prefix}Sigma_n"), &self.sigma_n, (m, m))?;
        check_finite(&format!("{prefix}A"), &self.a)?;
        check_finite(&format!("{prefix}C"), &self.c)?;

        check_symmetric(&format!("{prefix}Sigma_w"), &self.sigma_w)?;
        if !linalg::is_pd(&self.sigma_w) {
            return Err(invalid(format!("{prefix}Sigma_w"), "must be positive definite"));
        }
        check_symmetric(&format!("{prefix}Sigma_n"), &self.sigma_n)?;
        if !linalg::is_psd(&self.sigma_n) {
            return Err(invalid(format!("{prefix}Sigma_n"), "must be positive semidefinite"));
        }
        if linalg::numerical_rank(&self.c, ROW_RANK_TOL) < m {
            return Err(invalid(format!("{prefix}C"), "must have full row rank"));
        }
        Ok(())
    }
}

/// Time-invariant model `(A, C, Σ_w, Σ_n, Σ_x0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemModel {
    stage: Stage,
    sigma_x0: DMatrix<f64>,
}

impl SystemModel {
    pub fn new(
        a: DMatrix<f64>,
        c: DMatrix<f64>,
        sigma_w: DMatrix<f64>,
        sigma_n: DMatrix<f64>,
        sigma_x0: DMatrix<f64>,
    ) -> Result<Self> {
        let stage = Stage { a, c, sigma_w, sigma_n };
        stage.validate("")?;
        validate_initial(&sigma_x0, stage.state_dim())?;
        Ok(Self { stage, sigma_x0 })
    }

    /// Scalar model `x_{t+1} = αx_t + w_t`, `z_t = c x_t + n_t`.
    pub fn scalar(alpha: f64, c: f64, var_w: f64, var_n: f64, var_x0: f64) -> Result<Self> {
        let s = |v: f64| DMatrix::from_element(1, 1, v);
        Self::new(s(alpha), s(c), s(var_w), s(var_n), s(var_x0))
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.stage.a
    }
    pub fn c(&self) -> &DMatrix<f64> {
        &self.stage.c
    }
    pub fn sigma_w(&self) -> &DMatrix<f64> {
        &self.stage.sigma_w
    }
    pub fn sigma_n(&self) -> &DMatrix<f64> {
        &self.stage.sigma_n
    }
    pub fn sigma_x0(&self) -> &DMatrix<f64> {
        &self.sigma_x0
    }
    pub fn stage(&self) -> &Stage {
        &self.stage
    }
    pub fn state_dim(&self) -> usize {
        self.stage.state_dim()
    }
    pub fn obs_dim(&self) -> usize {
        self.stage.obs_dim()
    }

    /// Repeats the model over stages `0..=horizon`.
    pub fn to_time_varying(&self, horizon: usize) -> TimeVaryingSystemModel {
        TimeVaryingSystemModel {
            stages: vec![self.stage.clone(); horizon + 1],
            sigma_x0: self.sigma_x0.clone(),
        }
    }
}

/// Time-varying model over stages `t = 0..=n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeVaryingSystemModel {
    stages: Vec<Stage>,
    sigma_x0: DMatrix<f64>,
}

impl TimeVaryingSystemModel {
    pub fn new(stages: Vec<Stage>, sigma_x0: DMatrix<f64>) -> Result<Self> {
        let first = stages
            .first()
            .ok_or_else(|| invalid("stages", "need at least one stage"))?;
        let (p, m) = (first.state_dim(), first.obs_dim());
        for (t, s) in stages.iter().enumerate() {
            let prefix = format!("stages[{t}].");
            s.validate(&prefix)?;
            if s.state_dim() != p || s.obs_dim() != m {
                return Err(NrdfError::DimensionMismatch {
                    what: format!("stages[{t}]"),
                    expected: (m, p),
                    found: (s.obs_dim(), s.state_dim()),
                });
            }
        }
        validate_initial(&sigma_x0, p)?;
        Ok(Self { stages, sigma_x0 })
    }

    /// Scalar time-varying model from per-stage `(α_t, c_t, σ²_w,t, σ²_n,t)`.
    pub fn scalar(params: &[(f64, f64, f64, f64)], var_x0: f64) -> Result<Self> {
        let s = |v: f64| DMatrix::from_element(1, 1, v);
        let stages = params
            .iter()
            .map(|&(a, c, w, n)| Stage { a: s(a), c: s(c), sigma_w: s(w), sigma_n: s(n) })
            .collect();
        Self::new(stages, s(var_x0))
    }

    /// Horizon `n`; there are `n + 1` stages.
    pub fn horizon(&self) -> usize {
        self.stages.len() - 1
    }
    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }
    pub fn stage(&self, t: usize) -> &Stage {
        &self.stages[t]
    }
    pub fn sigma_x0(&self) -> &DMatrix<f64> {
        &self.sigma_x0
    }
    pub fn state_dim(&self) -> usize {
        self.stages[0].state_dim()
    }
    pub fn obs_dim(&self) -> usize {
        self.stages[0].obs_dim()
    }
    pub fn is_scalar(&self) -> bool {
        self.state_dim() == 1 && self.obs_dim() == 1
    }
}

fn validate_initial(sigma_x0: &DMatrix<f64>, p: usize) -> Result<()> {
    check_shape("Sigma_x0", sigma_x0, (p, p))?;
    check_symmetric("Sigma_x0", sigma_x0)?;
    if !linalg::is_pd(sigma_x0) {
        return Err(invalid("Sigma_x0", "must be positive definite"));
    }
    Ok(())
}

fn check_shape(what: &str, m: &DMatrix<f64>, expected: (usize, usize)) -> Result<()> {
    if m.shape() != expected {
        return Err(NrdfError::DimensionMismatch { what: what.to_string(), expected, found: m.shape() });
    }
    Ok(())
}

fn check_finite(field: &str, m: &DMatrix<f64>) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(invalid(field, "entries must be finite"))
    }
}

fn check_symmetric(field: &str, m: &DMatrix<f64>) -> Result<()> {
    check_finite(field, m)?;
    if !linalg::is_symmetric(m, SYMMETRY_TOL) {
        return Err(invalid(field, "must be symmetric"));
    }
    Ok(())
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> NrdfError {
    NrdfError::InvalidModel { field: field.into(), reason: reason.into() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_singular_process_noise() {
        let err = SystemModel::scalar(1.0, 1.0, 0.0, 1.0, 1.0).unwrap_err();
        assert!(matches!(err, NrdfError::InvalidModel { ref field, .. } if field == "Sigma_w"));
    }

    #[test]
    fn accepts_singular_measurement_noise() {
        assert!(SystemModel::scalar(1.1, 1.0, 1.0, 0.0, 1.0).is_ok());
    }

    #[test]
    fn rejects_rank_deficient_observation() {
        let err = SystemModel::new(
            DMatrix::identity(2, 2),
            DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]),
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
        )
        .unwrap_err();
        assert!(matches!(err, NrdfError::InvalidModel { ref field, .. } if field == "C"));
    }

    #[test]
    fn rejects_wide_observation() {
        let err = SystemModel::new(
            DMatrix::identity(1, 1),
            DMatrix::from_element(2, 1, 1.0),
            DMatrix::identity(1, 1),
            DMatrix::identity(2, 2),
            DMatrix::identity(1, 1),
        )
        .unwrap_err();
        assert!(matches!(err, NrdfError::InvalidModel { .. }));
    }

    #[test]
    fn shape_errors_name_the_matrix() {
        let err = SystemModel::new(
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            DMatrix::identity(3, 3),
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
        )
        .unwrap_err();
        assert!(matches!(err, NrdfError::DimensionMismatch { ref what, .. } if what == "Sigma_w"));
    }

    #[test]
    fn time_varying_stage_errors_carry_index() {
        let err = TimeVaryingSystemModel::scalar(&[(1.0, 1.0, 1.0, 1.0), (1.0, 1.0, -1.0, 1.0)], 1.0)
            .unwrap_err();
        assert!(matches!(err, NrdfError::InvalidModel { ref field, .. } if field == "stages[1].Sigma_w"));
    }
}
