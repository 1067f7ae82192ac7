//! Subcommand bodies. Each returns the text to write to `--out` or stdout.

use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde_json::{json, Value};

use nrdf::dare::dare_default;
use nrdf::{
    classify_structure, d_min_finite, kf_forward, kh_bound, pointwise_closed_form, reverse_waterfill_finite,
    reverse_waterfill_stationary, scalar_closed_form, simulate, FiniteHorizonProblem, LogBase, SimulationConfig,
    StationaryProblem, SteadyState, SystemModel, TestChannel, TimeVaryingSystemModel,
};

use crate::config::{distortion_grid, RunConfig, Solver};
use crate::error::{CliError, Result};

pub fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json value serializes");
    s.push('\n');
    s
}

fn need_invariant(cfg: &RunConfig) -> Result<&SystemModel> {
    if cfg.is_finite() {
        return Err(CliError::validation("horizon", "this command needs a time-invariant model without a horizon"));
    }
    Ok(cfg.invariant().expect("non-finite config has an invariant model"))
}

fn need_finite(cfg: &RunConfig) -> Result<TimeVaryingSystemModel> {
    cfg.time_varying().ok_or_else(|| CliError::validation("horizon", "this command needs a horizon or per-stage model"))
}

fn need_d(cfg: &RunConfig) -> Result<f64> {
    cfg.file.distortion.ok_or_else(|| CliError::validation("D", "missing"))
}

pub fn dare(cfg: &RunConfig) -> Result<String> {
    let model = need_invariant(cfg)?;
    let s = dare_default(model)?;
    Ok(pretty(&json!({
        "config_hash": cfg.hash,
        "Pi": rows(&s.pi),
        "Sigma": rows(&s.sigma),
        "Sigma_bar": rows(&s.sigma_bar),
        "d_min_infty": s.d_min_infty,
        "iterations": s.iterations,
        "residual": s.residual,
    })))
}

pub fn kf(cfg: &RunConfig) -> Result<String> {
    let model = need_finite(cfg)?;
    let steps = kf_forward(&model)?;
    let stages: Vec<Value> = steps
        .iter()
        .enumerate()
        .map(|(t, s)| {
            json!({
                "t": t,
                "prior": rows(&s.prior_cov),
                "posterior": rows(&s.posterior_cov),
                "gain_innov_cov": rows(&s.gain_innov_cov),
            })
        })
        .collect();
    Ok(pretty(&json!({
        "config_hash": cfg.hash,
        "d_min": d_min_finite(&steps)?,
        "stages": stages,
    })))
}

pub fn finite(cfg: &RunConfig) -> Result<String> {
    let model = need_finite(cfg)?;
    let d = need_d(cfg)?;
    let lb = cfg.log_base;
    let problem = FiniteHorizonProblem::new(model.clone(), d)?;
    let mut results = Vec::new();
    for &solver in &cfg.solvers {
        results.push(match solver {
            Solver::Waterfill => {
                let sol = reverse_waterfill_finite(&problem, cfg.eps, None)?;
                json!({
                    "solver": solver.name(),
                    "theta_star": sol.theta_star,
                    "post_var": sol.post_var,
                    "prior_var": sol.prior_var,
                    "stage_rates": sol.stage_rates.iter().map(|&r| lb.from_bits(r)).collect::<Vec<_>>(),
                    "total_rate": lb.from_bits(sol.total_rate),
                    "normalized_rate": lb.from_bits(sol.normalized_rate()),
                    "budget_active": sol.budget_active,
                })
            }
            Solver::Pointwise => {
                let (d_t, d_min_t) = pointwise_inputs(&model, d)?;
                let r = pointwise_closed_form(&model, &d_t, &d_min_t)?;
                json!({
                    "solver": solver.name(),
                    "prior_var": r.prior_var,
                    "stage_rates": r.stage_rates.iter().map(|&x| lb.from_bits(x)).collect::<Vec<_>>(),
                    "total_rate": lb.from_bits(r.total_rate),
                    "normalized_rate": lb.from_bits(r.total_rate / d_t.len() as f64),
                })
            }
            _ => unreachable!("validated as a finite solver"),
        });
    }
    Ok(pretty(&json!({
        "config_hash": cfg.hash,
        "D": d,
        "d_min": problem.d_min(),
        "log_base": log_base_name(lb),
        "results": results,
    })))
}

fn pointwise_inputs(model: &TimeVaryingSystemModel, d: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let steps = kf_forward(model)?;
    let d_min_t: Vec<f64> = steps.iter().map(|s| s.posterior_cov[(0, 0)]).collect();
    Ok((vec![d; d_min_t.len()], d_min_t))
}

fn log_base_name(lb: LogBase) -> &'static str {
    match lb {
        LogBase::Bits => "2",
        LogBase::Nats => "e",
    }
}

fn stationary_rate_for(problem: &StationaryProblem, solver: Solver, eps: f64) -> nrdf::Result<f64> {
    match solver {
        Solver::Waterfill => reverse_waterfill_stationary(problem, eps).map(|w| w.rate),
        Solver::ClosedForm => scalar_closed_form(problem),
        Solver::Kh => kh_bound(problem),
        Solver::Pointwise => unreachable!("validated as a stationary solver"),
    }
}

pub fn stationary(cfg: &RunConfig) -> Result<String> {
    let model = need_invariant(cfg)?;
    let d = need_d(cfg)?;
    let lb = cfg.log_base;
    let problem = StationaryProblem::new(model.clone(), d)?;
    let class = classify_structure(model.a(), &problem.steady.sigma_bar);
    let mut results = Vec::new();
    for &solver in &cfg.solvers {
        let mut entry = json!({ "solver": solver.name() });
        if solver == Solver::Waterfill {
            let wf = reverse_waterfill_stationary(&problem, cfg.eps)?;
            let spec = wf.to_spec();
            entry["rate"] = json!(lb.from_bits(wf.rate));
            entry["theta_star"] = json!(wf.theta_star);
            entry["mu_post"] = json!(wf.mu_post);
            entry["mu_prior"] = json!(wf.mu_prior);
            entry["Sigma_xi"] = json!(rows(&spec.sigma_xi));
            entry["Pi_xi"] = json!(rows(&spec.pi_xi));
            entry["regularization"] = json!(wf.regularization);
        } else {
            entry["rate"] = json!(lb.from_bits(stationary_rate_for(&problem, solver, cfg.eps)?));
        }
        results.push(entry);
    }
    Ok(pretty(&json!({
        "config_hash": cfg.hash,
        "D": d,
        "d_min_infty": problem.d_min(),
        "structure": format!("{:?}", class.tag),
        "log_base": log_base_name(lb),
        "results": results,
    })))
}

/// One `(D, solver)` cell of a rate-distortion curve.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub d: f64,
    pub d_min: f64,
    pub rate: Option<f64>,
    pub solver: Solver,
    pub wall_time_s: f64,
    pub status: String,
}

fn timed<T>(f: impl FnOnce() -> nrdf::Result<T>) -> (nrdf::Result<T>, f64) {
    let start = Instant::now();
    let r = f();
    (r, start.elapsed().as_secs_f64())
}

fn row(d: f64, d_min: f64, solver: Solver, result: nrdf::Result<f64>, wall: f64, lb: LogBase) -> CurveRow {
    match result {
        Ok(r) => CurveRow { d, d_min, rate: Some(lb.from_bits(r)), solver, wall_time_s: wall, status: "ok".into() },
        Err(e) => CurveRow { d, d_min, rate: None, solver, wall_time_s: wall, status: format!("error: {e}") },
    }
}

/// Rate per source sample for every grid point and solver, sorted by D.
pub fn curve_rows(cfg: &RunConfig) -> Result<Vec<CurveRow>> {
    let lb = cfg.log_base;
    if cfg.is_finite() {
        let model = need_finite(cfg)?;
        let steps = kf_forward(&model)?;
        let d_min = d_min_finite(&steps)?;
        let grid = distortion_grid(cfg, d_min)?;
        let n1 = (model.horizon() + 1) as f64;
        let cells: Vec<Vec<CurveRow>> = grid
            .par_iter()
            .map(|&d| {
                cfg.solvers
                    .iter()
                    .map(|&solver| {
                        let (r, wall) = timed(|| match solver {
                            Solver::Waterfill => {
                                let p = FiniteHorizonProblem::new(model.clone(), d)?;
                                Ok(reverse_waterfill_finite(&p, cfg.eps, None)?.normalized_rate())
                            }
                            Solver::Pointwise => {
                                let d_min_t: Vec<f64> = steps.iter().map(|s| s.posterior_cov[(0, 0)]).collect();
                                let d_t = vec![d; d_min_t.len()];
                                Ok(pointwise_closed_form(&model, &d_t, &d_min_t)?.total_rate / n1)
                            }
                            _ => unreachable!("validated as a finite solver"),
                        });
                        row(d, d_min, solver, r, wall, lb)
                    })
                    .collect()
            })
            .collect();
        Ok(cells.into_iter().flatten().collect())
    } else {
        let model = need_invariant(cfg)?;
        let steady: SteadyState = dare_default(model)?;
        let d_min = steady.d_min_infty;
        let grid = distortion_grid(cfg, d_min)?;
        let cells: Vec<Vec<CurveRow>> = grid
            .par_iter()
            .map(|&d| {
                cfg.solvers
                    .iter()
                    .map(|&solver| {
                        let (r, wall) = timed(|| {
                            let p = StationaryProblem::with_steady(model.clone(), steady.clone(), d)?;
                            stationary_rate_for(&p, solver, cfg.eps)
                        });
                        row(d, d_min, solver, r, wall, lb)
                    })
                    .collect()
            })
            .collect();
        Ok(cells.into_iter().flatten().collect())
    }
}

pub const CSV_HEADER: [&str; 6] = ["D", "d_min", "rate_bits", "solver", "wall_time_s", "status"];

pub fn curve_csv(rows: &[CurveRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Io { path: "<csv>".into(), reason: e.to_string() };
    w.write_record(CSV_HEADER).map_err(io)?;
    for r in rows {
        w.write_record([
            r.d.to_string(),
            r.d_min.to_string(),
            r.rate.map_or_else(String::new, |x| x.to_string()),
            r.solver.name().to_string(),
            format!("{:.6e}", r.wall_time_s),
            r.status.clone(),
        ])
        .map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io { path: "<csv>".into(), reason: e.to_string() })?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn curve(cfg: &RunConfig) -> Result<String> {
    curve_csv(&curve_rows(cfg)?)
}

pub fn simulate_cmd(cfg: &RunConfig) -> Result<String> {
    let d = need_d(cfg)?;
    let sim = cfg.file.simulation.clone();
    let report = if cfg.is_finite() {
        let model = need_finite(cfg)?;
        let problem = FiniteHorizonProblem::new(model.clone(), d)?;
        let sol = reverse_waterfill_finite(&problem, cfg.eps, None)?;
        let channel = TestChannel::from_finite(&problem, &sol)?;
        let trials = sim.map_or(4000, |s| s.trials);
        let sc = SimulationConfig { horizon: model.horizon() + 1, trials, burn_in: 0, seed: cfg.seed };
        simulate(&model, &channel, &sc)?
    } else {
        let model = need_invariant(cfg)?;
        let problem = StationaryProblem::new(model.clone(), d)?;
        let wf = reverse_waterfill_stationary(&problem, cfg.eps)?;
        let channel = TestChannel::from_stationary(model, &wf.to_spec())?;
        let (horizon, trials, burn_in) = sim.map_or((250, 4000, 50), |s| (s.horizon, s.trials, s.burn_in));
        simulate(model, &channel, &SimulationConfig { horizon, trials, burn_in, seed: cfg.seed })?
    };
    let lb = cfg.log_base;
    Ok(pretty(&json!({
        "config_hash": cfg.hash,
        "seed": cfg.seed,
        "samples": report.samples,
        "empirical_mse": report.empirical_mse,
        "mse_std_err": report.mse_std_err,
        "target_D": report.target_d,
        "empirical_rate": lb.from_bits(report.empirical_rate),
        "target_rate": lb.from_bits(report.target_rate),
        "max_innovation_corr": report.max_innovation_corr,
        "posterior_cov_hat": rows(&report.posterior_cov_hat),
        "prior_cov_hat": rows(&report.prior_cov_hat),
        "log_base": log_base_name(lb),
    })))
}
