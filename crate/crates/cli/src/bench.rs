//! Wall-clock timing of both waterfilling algorithms on generated instances.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nrdf::{reverse_waterfill_finite, reverse_waterfill_stationary, FiniteHorizonProblem, StationaryProblem, SystemModel};

use crate::config::RunConfig;
use crate::crosscheck::OracleResult;
use crate::error::{CliError, Result};

pub const DEFAULT_REPS: usize = 5;
pub const DEFAULT_DIMS: [usize; 3] = [10, 50, 100];
pub const DEFAULT_HORIZONS: [usize; 3] = [100, 1000, 10_000];

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub kind: &'static str,
    pub size: usize,
    pub reps: usize,
    pub mean_s: f64,
    pub median_s: f64,
}

fn summarize(kind: &'static str, size: usize, mut times: Vec<f64>) -> BenchRow {
    times.sort_by(f64::total_cmp);
    let n = times.len();
    let median = if n % 2 == 1 { times[n / 2] } else { 0.5 * (times[n / 2 - 1] + times[n / 2]) };
    BenchRow { kind, size, reps: n, mean_s: times.iter().sum::<f64>() / n as f64, median_s: median }
}

/// `A = 0.9 I`, `C = I`, `Σ_n = I` and a random full-rank `Σ_w`: the scalar-A structure.
pub fn structured_instance(p: usize, rng: &mut ChaCha8Rng) -> Result<StationaryProblem> {
    let b = DMatrix::from_fn(p, p, |_, _| rng.random_range(-1.0..1.0));
    let sigma_w = (&b * b.transpose()).scale(1.0 / p as f64) + DMatrix::identity(p, p).scale(0.1);
    let eye = DMatrix::identity(p, p);
    let model = SystemModel::new(eye.scale(0.9), eye.clone(), sigma_w, eye.clone(), eye)?;
    let steady = nrdf::dare::dare_default(&model)?;
    let d = steady.d_min_infty + 0.5 * steady.sigma_bar.trace();
    Ok(StationaryProblem::with_steady(model, steady, d)?)
}

fn time<T>(reps: usize, mut f: impl FnMut() -> nrdf::Result<T>) -> Result<Vec<f64>> {
    (0..reps)
        .map(|_| {
            let start = Instant::now();
            f()?;
            Ok(start.elapsed().as_secs_f64())
        })
        .collect()
}

pub fn bench_rows(cfg: &RunConfig, oracle: Option<&OracleResult>) -> Result<Vec<BenchRow>> {
    let spec = cfg.file.bench.as_ref();
    let reps = spec.map_or(DEFAULT_REPS, |b| b.reps as usize);
    let dims = spec.and_then(|b| b.dims.clone()).unwrap_or_else(|| DEFAULT_DIMS.to_vec());
    let horizons = spec.and_then(|b| b.horizons.clone()).unwrap_or_else(|| DEFAULT_HORIZONS.to_vec());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::new();

    for &p in &dims {
        if p == 0 {
            return Err(CliError::validation("bench.dims", "dimensions must be positive"));
        }
        let problem = structured_instance(p, &mut rng)?;
        out.push(summarize("stationary_waterfill", p, time(reps, || reverse_waterfill_stationary(&problem, cfg.eps))?));
    }

    // scalar params of the config when it has them, otherwise a fixed unstable source
    let scalar = cfg
        .invariant()
        .filter(|m| m.state_dim() == 1 && m.obs_dim() == 1)
        .cloned()
        .map_or_else(|| SystemModel::scalar(1.1, 0.5, 1.0, 1.0, 1.0), Ok)?;
    for &n in &horizons {
        let model = scalar.to_time_varying(n);
        let times = time(reps, || {
            let d_min = nrdf::d_min_finite(&nrdf::kf_forward(&model)?)?;
            let problem = FiniteHorizonProblem::new(model.clone(), d_min + 1.0)?;
            reverse_waterfill_finite(&problem, cfg.eps, None)
        })?;
        out.push(summarize("finite_waterfill", n, times));
    }

    if let Some(o) = oracle {
        if o.rows.is_empty() {
            return Err(CliError::Parse("oracle result has no rows".into()));
        }
        let size = match &cfg.model {
            crate::config::Model::Invariant(m) => m.state_dim(),
            crate::config::Model::TimeVarying(m) => m.horizon(),
        };
        out.push(summarize("sdp_oracle", size, o.rows.iter().map(|r| r.wall_time_s).collect()));
    }
    Ok(out)
}

pub fn bench_csv(rows: &[BenchRow]) -> Result<String> {
    let io = |e: csv::Error| CliError::Io { path: "<csv>".into(), reason: e.to_string() };
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["kind", "size", "reps", "mean_s", "median_s"]).map_err(io)?;
    for r in rows {
        w.write_record([
            r.kind.to_string(),
            r.size.to_string(),
            r.reps.to_string(),
            format!("{:.6e}", r.mean_s),
            format!("{:.6e}", r.median_s),
        ])
        .map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io { path: "<csv>".into(), reason: e.to_string() })?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
