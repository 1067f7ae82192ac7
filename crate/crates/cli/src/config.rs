//! JSON run configuration, its validation, and the config hash.

use std::hash::Hasher;
use std::path::Path;

use fnv::FnvHasher;
use nalgebra::DMatrix;
use nrdf::{LogBase, Stage, SystemModel, TimeVaryingSystemModel};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_EPS: f64 = 1e-9;
const HASH_TAG: &[u8] = b"nrdf-config-v1";

/// Row-major nested arrays.
pub type MatrixSpec = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageSpec {
    #[serde(rename = "A")]
    pub a: MatrixSpec,
    #[serde(rename = "C")]
    pub c: MatrixSpec,
    #[serde(rename = "Sigma_w")]
    pub sigma_w: MatrixSpec,
    #[serde(rename = "Sigma_n")]
    pub sigma_n: MatrixSpec,
}

/// Either the four time-invariant matrices or a list of stages, plus Σ_x0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    #[serde(rename = "A", default, skip_serializing_if = "Option::is_none")]
    pub a: Option<MatrixSpec>,
    #[serde(rename = "C", default, skip_serializing_if = "Option::is_none")]
    pub c: Option<MatrixSpec>,
    #[serde(rename = "Sigma_w", default, skip_serializing_if = "Option::is_none")]
    pub sigma_w: Option<MatrixSpec>,
    #[serde(rename = "Sigma_n", default, skip_serializing_if = "Option::is_none")]
    pub sigma_n: Option<MatrixSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stages: Option<Vec<StageSpec>>,
    #[serde(rename = "Sigma_x0")]
    pub sigma_x0: MatrixSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    #[default]
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub start: f64,
    pub stop: f64,
    /// Signed so that negative counts reach validation instead of failing to parse.
    pub count: i64,
    #[serde(default)]
    pub spacing: Spacing,
    /// When true, `start` and `stop` are excess distortions `D − d_min`.
    #[serde(default)]
    pub excess: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpec {
    pub horizon: usize,
    pub trials: usize,
    #[serde(default)]
    pub burn_in: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSpec {
    pub reps: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dims: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizons: Option<Vec<usize>>,
}

/// The config file exactly as written on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub schema_version: u32,
    pub model: ModelSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(rename = "D", default, skip_serializing_if = "Option::is_none")]
    pub distortion: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solvers: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_base: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bench: Option<BenchSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Solver {
    /// Dynamic (finite) or eigenvalue (stationary) reverse waterfilling.
    Waterfill,
    /// Scalar stationary closed form.
    ClosedForm,
    /// Uniform-allocation bound.
    Kh,
    /// Finite horizon with the per-stage constraint `D_t = D`.
    Pointwise,
}

impl Solver {
    pub fn name(self) -> &'static str {
        match self {
            Solver::Waterfill => "waterfill",
            Solver::ClosedForm => "closed_form",
            Solver::Kh => "kh",
            Solver::Pointwise => "pointwise",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "waterfill" => Solver::Waterfill,
            "closed_form" => Solver::ClosedForm,
            "kh" => Solver::Kh,
            "pointwise" => Solver::Pointwise,
            _ => return None,
        })
    }

    fn finite(self) -> bool {
        matches!(self, Solver::Waterfill | Solver::Pointwise)
    }

    fn stationary(self) -> bool {
        matches!(self, Solver::Waterfill | Solver::ClosedForm | Solver::Kh)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Invariant(SystemModel),
    TimeVarying(TimeVaryingSystemModel),
}

/// A validated configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub file: ConfigFile,
    pub model: Model,
    pub hash: String,
    pub solvers: Vec<Solver>,
    pub eps: f64,
    pub seed: u64,
    pub log_base: LogBase,
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub solvers: Option<Vec<String>>,
    pub eps: Option<f64>,
    pub seed: Option<u64>,
    pub log_base: Option<String>,
}

impl RunConfig {
    /// Finite horizon when a horizon is given or the model is time-varying.
    pub fn is_finite(&self) -> bool {
        matches!(self.model, Model::TimeVarying(_)) || self.file.horizon.is_some()
    }

    /// Finite-horizon view of the model.
    pub fn time_varying(&self) -> Option<TimeVaryingSystemModel> {
        match (&self.model, self.file.horizon) {
            (Model::TimeVarying(m), _) => Some(m.clone()),
            (Model::Invariant(m), Some(n)) => Some(m.to_time_varying(n)),
            (Model::Invariant(_), None) => None,
        }
    }

    pub fn invariant(&self) -> Option<&SystemModel> {
        match &self.model {
            Model::Invariant(m) => Some(m),
            Model::TimeVarying(_) => None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.file).expect("config serializes")
    }
}

pub fn parse_config(path: &Path, overrides: &Overrides) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io { path: path.display().to_string(), reason: e.to_string() })?;
    parse_config_str(&text, overrides)
}

pub fn parse_config_str(text: &str, overrides: &Overrides) -> Result<RunConfig> {
    let mut file: ConfigFile = serde_json::from_str(text).map_err(|e| CliError::Parse(e.to_string()))?;
    if let Some(s) = &overrides.solvers {
        file.solvers = Some(s.clone());
    }
    if let Some(e) = overrides.eps {
        file.eps = Some(e);
    }
    if let Some(s) = overrides.seed {
        file.seed = Some(s);
    }
    if let Some(b) = &overrides.log_base {
        file.log_base = Some(b.clone());
    }
    validate(file)
}

fn validate(file: ConfigFile) -> Result<RunConfig> {
    if file.schema_version != SCHEMA_VERSION {
        return Err(CliError::validation(
            "schema_version",
            format!("unsupported version {}, expected {SCHEMA_VERSION}", file.schema_version),
        ));
    }
    let model = build_model(&file.model)?;
    if let (Model::TimeVarying(m), Some(n)) = (&model, file.horizon) {
        if n != m.horizon() {
            return Err(CliError::validation("horizon", format!("{n} disagrees with {} stages", m.stages().len())));
        }
    }
    let hash = config_hash(&model, file.horizon);

    if let Some(d) = file.distortion {
        if !(d.is_finite() && d > 0.0) {
            return Err(CliError::validation("D", "must be a positive finite number"));
        }
    }
    if let Some(s) = &file.sweep {
        validate_sweep(s)?;
    }
    let eps = file.eps.unwrap_or(DEFAULT_EPS);
    if !(eps.is_finite() && eps > 0.0) {
        return Err(CliError::validation("eps", "must be positive"));
    }
    let log_base = match file.log_base.as_deref() {
        None | Some("2") => LogBase::Bits,
        Some("e") => LogBase::Nats,
        Some(other) => return Err(CliError::validation("log_base", format!("expected \"2\" or \"e\", got {other:?}"))),
    };
    if let Some(sim) = &file.simulation {
        if sim.trials == 0 || sim.horizon <= sim.burn_in {
            return Err(CliError::validation("simulation", "need trials >= 1 and horizon > burn_in"));
        }
    }
    if let Some(b) = &file.bench {
        if b.reps < 1 {
            return Err(CliError::validation("bench.reps", "must be at least 1"));
        }
    }

    let finite = matches!(model, Model::TimeVarying(_)) || file.horizon.is_some();
    let solvers = match &file.solvers {
        None => vec![Solver::Waterfill],
        Some(list) if list.is_empty() => return Err(CliError::validation("solvers", "list is empty")),
        Some(list) => {
            let mut out = Vec::new();
            for (i, name) in list.iter().enumerate() {
                let s = Solver::parse(name)
                    .ok_or_else(|| CliError::validation(format!("solvers[{i}]"), format!("unknown solver {name:?}")))?;
                let ok = if finite { s.finite() } else { s.stationary() };
                if !ok {
                    let mode = if finite { "finite-horizon" } else { "stationary" };
                    return Err(CliError::validation(format!("solvers[{i}]"), format!("{name} is not a {mode} solver")));
                }
                if !out.contains(&s) {
                    out.push(s);
                }
            }
            out
        }
    };
    let seed = file.seed.unwrap_or(0);
    Ok(RunConfig { file, model, hash, solvers, eps, seed, log_base })
}

fn validate_sweep(s: &SweepSpec) -> Result<()> {
    if s.count < 1 {
        return Err(CliError::validation("sweep.count", format!("must be at least 1, got {}", s.count)));
    }
    if !(s.start.is_finite() && s.stop.is_finite()) || s.stop < s.start {
        return Err(CliError::validation("sweep", "need finite start <= stop"));
    }
    if s.start <= 0.0 {
        return Err(CliError::validation("sweep.start", "must be positive"));
    }
    Ok(())
}

fn matrix(field: &str, rows: &MatrixSpec) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 {
        return Err(CliError::validation(field, "matrix is empty"));
    }
    if let Some(i) = rows.iter().position(|row| row.len() != c) {
        return Err(CliError::validation(field, format!("row {i} has {} entries, expected {c}", rows[i].len())));
    }
    Ok(DMatrix::from_row_iterator(r, c, rows.iter().flatten().copied()))
}

fn build_model(spec: &ModelSpec) -> Result<Model> {
    let x0 = matrix("model.Sigma_x0", &spec.sigma_x0)?;
    let invariant = [&spec.a, &spec.c, &spec.sigma_w, &spec.sigma_n];
    match &spec.stages {
        Some(stages) => {
            if invariant.iter().any(|m| m.is_some()) {
                return Err(CliError::validation("model", "give either stages or A/C/Sigma_w/Sigma_n, not both"));
            }
            if stages.is_empty() {
                return Err(CliError::validation("model.stages", "need at least one stage"));
            }
            let built = stages
                .iter()
                .enumerate()
                .map(|(t, s)| {
                    let f = |name: &str| format!("model.stages[{t}].{name}");
                    Ok(Stage {
                        a: matrix(&f("A"), &s.a)?,
                        c: matrix(&f("C"), &s.c)?,
                        sigma_w: matrix(&f("Sigma_w"), &s.sigma_w)?,
                        sigma_n: matrix(&f("Sigma_n"), &s.sigma_n)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Model::TimeVarying(TimeVaryingSystemModel::new(built, x0)?))
        }
        None => {
            let names = ["A", "C", "Sigma_w", "Sigma_n"];
            let mut ms = Vec::with_capacity(4);
            for (name, m) in names.iter().zip(invariant) {
                let m = m.as_ref().ok_or_else(|| CliError::validation(format!("model.{name}"), "missing"))?;
                ms.push(matrix(&format!("model.{name}"), m)?);
            }
            let mut it = ms.into_iter();
            let (a, c, w, n) = (it.next().unwrap(), it.next().unwrap(), it.next().unwrap(), it.next().unwrap());
            Ok(Model::Invariant(SystemModel::new(a, c, w, n, x0)?))
        }
    }
}

fn hash_matrix(h: &mut FnvHasher, m: &DMatrix<f64>) {
    h.write(&(m.nrows() as u64).to_le_bytes());
    h.write(&(m.ncols() as u64).to_le_bytes());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            h.write(&m[(i, j)].to_le_bytes());
        }
    }
}

/// FNV-1a 64 over a canonical little-endian encoding of the model and horizon,
/// as 16 lowercase hex digits.
pub fn config_hash(model: &Model, horizon: Option<usize>) -> String {
    let mut h = FnvHasher::default();
    h.write(HASH_TAG);
    let stage_bytes = |h: &mut FnvHasher, s: &Stage| {
        for m in [&s.a, &s.c, &s.sigma_w, &s.sigma_n] {
            hash_matrix(h, m);
        }
    };
    match model {
        Model::Invariant(m) => {
            h.write(b"I");
            stage_bytes(&mut h, m.stage());
            hash_matrix(&mut h, m.sigma_x0());
        }
        Model::TimeVarying(m) => {
            h.write(b"T");
            h.write(&(m.stages().len() as u64).to_le_bytes());
            for s in m.stages() {
                stage_bytes(&mut h, s);
            }
            hash_matrix(&mut h, m.sigma_x0());
        }
    }
    let n = match (model, horizon) {
        (Model::TimeVarying(m), _) => m.horizon() as u64,
        (_, Some(n)) => n as u64,
        (_, None) => u64::MAX,
    };
    h.write(&n.to_le_bytes());
    format!("{:016x}", h.finish())
}

/// Distortion grid of the config: the sweep, or the single `D`.
pub fn distortion_grid(cfg: &RunConfig, d_min: f64) -> Result<Vec<f64>> {
    if let Some(s) = &cfg.file.sweep {
        let n = s.count as usize;
        let pts: Vec<f64> = (0..n)
            .map(|k| {
                let f = if n == 1 { 0.0 } else { k as f64 / (n - 1) as f64 };
                match s.spacing {
                    Spacing::Linear => s.start + (s.stop - s.start) * f,
                    Spacing::Log => (s.start.ln() + (s.stop.ln() - s.start.ln()) * f).exp(),
                }
            })
            .collect();
        Ok(if s.excess { pts.into_iter().map(|x| d_min + x).collect() } else { pts })
    } else if let Some(d) = cfg.file.distortion {
        Ok(vec![d])
    } else {
        Err(CliError::validation("D", "config needs D or sweep"))
    }
}
