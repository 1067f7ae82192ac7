//! Comparison against an external SDP oracle's result file.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::json;

use nrdf::dare::dare_default;
use nrdf::{kf_forward, d_min_finite, reverse_waterfill_finite, reverse_waterfill_stationary, FiniteHorizonProblem, StationaryProblem};

use crate::commands::rows;
use crate::config::{distortion_grid, MatrixSpec, RunConfig};
use crate::error::{CliError, Result};

pub const RATE_TOL: f64 = 1e-4;
pub const SIGMA_REL_TOL: f64 = 1e-5;
/// Relative tolerance for matching an oracle row to a grid point.
const D_MATCH_TOL: f64 = 1e-9;

/// Posterior covariance reported by the oracle: one matrix, or one per stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SigmaXi {
    Matrix(MatrixSpec),
    Stages(Vec<MatrixSpec>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRow {
    #[serde(rename = "D")]
    pub d: f64,
    pub rate_bits: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_xi: Option<SigmaXi>,
    pub status: String,
    pub wall_time_s: f64,
}

/// `OracleResult` JSON written by the oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub config_hash: String,
    pub variant: String,
    pub rows: Vec<OracleRow>,
}

pub fn load_oracle(path: &Path) -> Result<OracleResult> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io { path: path.display().to_string(), reason: e.to_string() })?;
    serde_json::from_str(&text).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
}

/// Our rate (bits per sample) and posterior covariances at one D.
fn ours(cfg: &RunConfig, d: f64) -> Result<(f64, Vec<DMatrix<f64>>)> {
    if let Some(model) = cfg.time_varying() {
        let problem = FiniteHorizonProblem::new(model, d)?;
        let sol = reverse_waterfill_finite(&problem, cfg.eps, None)?;
        let post = sol.post_var.iter().map(|&v| DMatrix::from_element(1, 1, v)).collect();
        Ok((sol.normalized_rate(), post))
    } else {
        let model = cfg.invariant().expect("non-finite config has an invariant model");
        let problem = StationaryProblem::new(model.clone(), d)?;
        let wf = reverse_waterfill_stationary(&problem, cfg.eps)?;
        let spec = wf.to_spec();
        Ok((wf.rate, vec![spec.sigma_xi]))
    }
}

fn oracle_matrices(s: &SigmaXi) -> Result<Vec<DMatrix<f64>>> {
    let one = |m: &MatrixSpec| -> Result<DMatrix<f64>> {
        let r = m.len();
        let c = m.first().map_or(0, Vec::len);
        if m.iter().any(|row| row.len() != c) {
            return Err(CliError::Parse("oracle sigma_xi has ragged rows".into()));
        }
        Ok(DMatrix::from_row_iterator(r, c, m.iter().flatten().copied()))
    };
    match s {
        SigmaXi::Matrix(m) => Ok(vec![one(m)?]),
        SigmaXi::Stages(v) => v.iter().map(one).collect(),
    }
}

fn sigma_gap(ours: &[DMatrix<f64>], theirs: &[DMatrix<f64>]) -> Option<f64> {
    if ours.len() != theirs.len() {
        return None;
    }
    let mut worst: f64 = 0.0;
    for (a, b) in ours.iter().zip(theirs) {
        if a.shape() != b.shape() {
            return None;
        }
        let scale = a.row_iter().map(|r| r.iter().map(|x| x.abs()).sum::<f64>()).fold(1.0, f64::max);
        worst = worst.max((a - b).abs().max() / scale);
    }
    Some(worst)
}

/// Runs the comparison. The report is always returned; the second element is
/// the failure, if any, to turn into the exit code after the report is written.
pub fn crosscheck(cfg: &RunConfig, oracle: &OracleResult) -> Result<(String, Option<CliError>)> {
    if oracle.config_hash != cfg.hash {
        return Err(CliError::HashMismatch { config: cfg.hash.clone(), oracle: oracle.config_hash.clone() });
    }
    let d_min = match cfg.time_varying() {
        Some(m) => d_min_finite(&kf_forward(&m)?)?,
        None => dare_default(cfg.invariant().expect("invariant"))?.d_min_infty,
    };
    let grid = distortion_grid(cfg, d_min)?;
    let find = |d: f64| oracle.rows.iter().find(|r| (r.d - d).abs() <= D_MATCH_TOL * d.abs().max(1.0));
    let missing: Vec<f64> = grid.iter().copied().filter(|&d| find(d).is_none()).collect();
    if !missing.is_empty() {
        return Err(CliError::MissingRows(missing));
    }

    let mut report_rows = Vec::new();
    let mut failures = Vec::new();
    for &d in &grid {
        let row = find(d).expect("checked above");
        let (rate, post) = ours(cfg, d)?;
        let d_rate = (rate - row.rate_bits).abs();
        let d_sigma = match &row.sigma_xi {
            Some(s) => sigma_gap(&post, &oracle_matrices(s)?),
            None => None,
        };
        let status_ok = matches!(row.status.as_str(), "optimal" | "ok");
        let pass = status_ok && d_rate <= RATE_TOL && d_sigma.is_some_and(|g| g <= SIGMA_REL_TOL);
        if !pass {
            failures.push(d);
        }
        report_rows.push(json!({
            "D": d,
            "rate_bits": rate,
            "oracle_rate_bits": row.rate_bits,
            "rate_gap": d_rate,
            "sigma_xi_rel_gap": d_sigma,
            "Sigma_xi": post.iter().map(rows).collect::<Vec<_>>(),
            "oracle_status": row.status,
            "pass": pass,
        }));
    }
    let report = json!({
        "config_hash": cfg.hash,
        "variant": oracle.variant,
        "rate_tol": RATE_TOL,
        "sigma_rel_tol": SIGMA_REL_TOL,
        "pass": failures.is_empty(),
        "rows": report_rows,
    });
    let mut text = serde_json::to_string_pretty(&report).expect("json value serializes");
    text.push('\n');
    let failure = (!failures.is_empty())
        .then(|| CliError::CrosscheckFailed(format!("{} of {} rows outside tolerance at D = {failures:?}", failures.len(), grid.len())));
    Ok((text, failure))
}
