//! Stationary indirect NRDF of time-invariant models.
//!
//! In steady state the rate is `½ log(|Π^ξ| / |Σ^ξ|)` with
//! `Π^ξ = AΣ^ξAᵀ + Σ̄`, minimized over `0 ≺ Σ^ξ ⪯ Π^ξ` and
//! `trace(Σ^ξ) ≤ D − trace(Σ)`. When A and Σ̄ share an eigenbasis (the
//! structural classes below) the problem decouples into scalar eigenvalue
//! problems solved by reverse waterfilling.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::bisect::{self, THETA_MIN};
use crate::dare::{dare_default, SteadyState};
use crate::error::{NrdfError, Result};
use crate::finite::waterfill_stage;
use crate::linalg;
use crate::model::SystemModel;

pub const DEFAULT_EPS: f64 = 1e-9;

/// Relative tolerance of the structural equality and commutation checks.
const STRUCTURE_REL_TOL: f64 = 1e-9;
/// Eigenvalues of Σ̄ at or below this fraction of the largest trigger regularization.
const SINGULAR_REL_TOL: f64 = 1e-12;
/// Size of the regularization, relative to trace(Σ̄)/p.
const REGULARIZATION: f64 = 1e-10;

/// A time-invariant model together with its steady state and distortion level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryProblem {
    pub model: SystemModel,
    pub steady: SteadyState,
    pub distortion: f64,
}

impl StationaryProblem {
    /// Solves the DARE with default settings and checks `D > trace(Σ)`.
    pub fn new(model: SystemModel, distortion: f64) -> Result<Self> {
        let steady = dare_default(&model)?;
        Self::with_steady(model, steady, distortion)
    }

    pub fn with_steady(model: SystemModel, steady: SteadyState, distortion: f64) -> Result<Self> {
        if steady.pi.nrows() != model.state_dim() {
            return Err(NrdfError::DimensionMismatch {
                what: "steady state".into(),
                expected: (model.state_dim(), model.state_dim()),
                found: steady.pi.shape(),
            });
        }
        if !(distortion > steady.d_min_infty) {
            return Err(NrdfError::BudgetInfeasible { budget: distortion, d_min: steady.d_min_infty });
        }
        Ok(Self { model, steady, distortion })
    }

    pub fn dim(&self) -> usize {
        self.model.state_dim()
    }
    pub fn d_min(&self) -> f64 {
        self.steady.d_min_infty
    }
    /// `D − trace(Σ)`.
    pub fn excess(&self) -> f64 {
        self.distortion - self.steady.d_min_infty
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StructureTag {
    /// A = αI
    ScalarA,
    /// A symmetric and Σ̄ = σ²I
    SymmetricAScalarNoise,
    /// A = Σ̄ ≻ 0
    AEqualsNoise,
    None,
}

/// Result of matching (A, Σ̄) against the structural classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuralClass {
    pub tag: StructureTag,
    /// Orthonormal eigenbasis shared by A and Σ̄ (columns); absent for `None`.
    pub common_basis: Option<DMatrix<f64>>,
    /// Eigenvalues of A², one per basis vector.
    pub mu_a2: Vec<f64>,
    /// Eigenvalues of Σ̄ on the same basis vectors.
    pub mu_sigma_bar: Vec<f64>,
}

impl StructuralClass {
    fn unstructured() -> Self {
        Self { tag: StructureTag::None, common_basis: None, mu_a2: Vec::new(), mu_sigma_bar: Vec::new() }
    }
}

fn is_scalar_identity(m: &DMatrix<f64>) -> bool {
    let tol = STRUCTURE_REL_TOL * linalg::inf_norm(m);
    let d = m[(0, 0)];
    m.iter().enumerate().all(|(k, &v)| {
        let (i, j) = (k % m.nrows(), k / m.nrows());
        let target = if i == j { d } else { 0.0 };
        (v - target).abs() <= tol
    })
}

/// Matches (A, Σ̄) against the structural classes, first match wins:
/// `A = αI`, then `A` symmetric with `Σ̄ = σ²I`, then `A = Σ̄ ≻ 0`.
///
/// Eigenvalues are paired through shared eigenvectors, not by sort order:
/// the matrix with the larger eigenvalue spread is diagonalized and both
/// matrices are read off on its eigenvectors.
pub fn classify_structure(a: &DMatrix<f64>, sigma_bar: &DMatrix<f64>) -> StructuralClass {
    let p = a.nrows();
    if p == 0 || !a.is_square() || sigma_bar.shape() != (p, p) {
        return StructuralClass::unstructured();
    }
    if !linalg::is_symmetric(sigma_bar, STRUCTURE_REL_TOL) {
        return StructuralClass::unstructured();
    }
    let tag = if is_scalar_identity(a) {
        StructureTag::ScalarA
    } else if linalg::is_symmetric(a, STRUCTURE_REL_TOL) && is_scalar_identity(sigma_bar) {
        StructureTag::SymmetricAScalarNoise
    } else if linalg::max_abs_diff(a, sigma_bar) <= STRUCTURE_REL_TOL * linalg::inf_norm(a) && linalg::is_pd(sigma_bar)
    {
        StructureTag::AEqualsNoise
    } else {
        return StructuralClass::unstructured();
    };

    let commutator = (a * sigma_bar - sigma_bar * a).amax();
    let scale = linalg::inf_norm(a) * linalg::inf_norm(sigma_bar);
    if commutator > STRUCTURE_REL_TOL * scale.max(f64::MIN_POSITIVE) {
        return StructuralClass::unstructured();
    }

    let a_sym = linalg::symmetrize(a);
    let s_sym = linalg::symmetrize(sigma_bar);
    // In every class one of the two matrices is a multiple of I (zero spread) or
    // both are equal, so the larger-spread matrix is known from the tag.
    let pivot = match tag {
        StructureTag::ScalarA => &s_sym,
        _ => &a_sym,
    };
    let basis = SymmetricEigen::new(pivot.clone()).eigenvectors;
    let rayleigh = |m: &DMatrix<f64>| -> Vec<f64> {
        basis.column_iter().map(|v| v.dot(&(m * v))).collect()
    };
    let mu_a2 = rayleigh(&a_sym).into_iter().map(|l| l * l).collect();
    let mu_sigma_bar = rayleigh(&s_sym);
    StructuralClass { tag, common_basis: Some(basis), mu_a2, mu_sigma_bar }
}

/// Eigenvalue reverse waterfilling output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenWaterfill {
    pub theta_star: f64,
    /// μ_{Σ^ξ,i}
    pub mu_post: Vec<f64>,
    /// μ_{Π^ξ,i} = μ_{A²,i} μ_{Σ^ξ,i} + μ_{Σ̄,i}
    pub mu_prior: Vec<f64>,
    pub mu_a2: Vec<f64>,
    /// Eigenvalues of Σ̄ actually used, after regularization.
    pub mu_sigma_bar: Vec<f64>,
    /// Shared eigenbasis (columns).
    pub basis: DMatrix<f64>,
    /// ½ Σ_i log₂(μ_{Π^ξ,i} / μ_{Σ^ξ,i})
    pub rate: f64,
    /// The ε added to Σ̄ when it was singular (0 otherwise).
    pub regularization: f64,
    pub tag: StructureTag,
    /// False when the whole allocation sits at its clipping ceiling inside the budget.
    pub budget_active: bool,
}

impl EigenWaterfill {
    /// Σ^ξ and Π^ξ rebuilt on the shared eigenbasis.
    pub fn to_spec(&self) -> StationaryTestChannelSpec {
        let rebuild = |mu: &[f64]| {
            let d = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(mu));
            linalg::symmetrize(&(&self.basis * d * self.basis.transpose()))
        };
        StationaryTestChannelSpec { sigma_xi: rebuild(&self.mu_post), pi_xi: rebuild(&self.mu_prior), rate: self.rate }
    }
}

struct EigenLevels {
    mu_a2: Vec<f64>,
    mu_sb: Vec<f64>,
    beta: Vec<f64>,
    /// Largest μ with μ ≤ μ_{A²}μ + μ_{Σ̄}.
    cap: Vec<f64>,
}

impl EigenLevels {
    fn new(mu_a2: Vec<f64>, mu_sb: Vec<f64>) -> Self {
        let beta = mu_a2.iter().zip(&mu_sb).map(|(a2, sb)| 2.0 * a2 / sb).collect();
        let cap = mu_a2
            .iter()
            .zip(&mu_sb)
            .map(|(&a2, &sb)| if a2 < 1.0 { sb / (1.0 - a2) } else { f64::INFINITY })
            .collect();
        Self { mu_a2, mu_sb, beta, cap }
    }

    fn post(&self, theta: f64, i: usize) -> f64 {
        waterfill_stage(theta, self.beta[i], false).min(self.cap[i])
    }

    fn total(&self, theta: f64) -> f64 {
        (0..self.beta.len()).map(|i| self.post(theta, i)).sum()
    }
}

/// Reverse waterfilling over the shared eigenvalues of A² and Σ̄.
///
/// Each eigenvalue gets `μ* = (1/μ_Υ)(√(1 + μ_Υ/θ) − 1)` with
/// `μ_Υ = 2μ_{A²}/μ_{Σ̄}`, clipped where it would exceed its own prior. θ is
/// bisected from `[1e-12, p/(2(D − trace Σ))]` (upper end doubled as needed)
/// until the bracket is narrower than `eps`. A singular Σ̄ is replaced by
/// `Σ̄ + εI` with `ε = 1e-10·trace(Σ̄)/p`.
pub fn reverse_waterfill_stationary(problem: &StationaryProblem, eps: f64) -> Result<EigenWaterfill> {
    if !(eps > 0.0) {
        return Err(NrdfError::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    let class = classify_structure(problem.model.a(), &problem.steady.sigma_bar);
    let Some(basis) = class.common_basis else {
        return Err(NrdfError::StructureNotSatisfied);
    };
    let p = problem.dim();
    let excess = problem.excess();

    let mut mu_sb = class.mu_sigma_bar;
    let max_sb = mu_sb.iter().copied().fold(0.0, f64::max);
    if max_sb <= 0.0 {
        return Err(NrdfError::ZeroMatrix);
    }
    let mut regularization = 0.0;
    if mu_sb.iter().any(|&s| s <= SINGULAR_REL_TOL * max_sb) {
        let trace: f64 = mu_sb.iter().map(|s| s.max(0.0)).sum();
        regularization = REGULARIZATION * trace / p as f64;
        for s in &mut mu_sb {
            *s = s.max(0.0) + regularization;
        }
    }
    let levels = EigenLevels::new(class.mu_a2, mu_sb);

    let exceeds = |theta: f64| levels.total(theta) > excess;
    let (theta, budget_active) = if exceeds(THETA_MIN) {
        let hi = bisect::bracket_upper(p as f64 / (2.0 * excess), exceeds)?;
        (bisect::bisect(THETA_MIN, hi, eps, exceeds), true)
    } else {
        (THETA_MIN, false)
    };

    let mu_post: Vec<f64> = (0..p).map(|i| levels.post(theta, i)).collect();
    let mu_prior: Vec<f64> = (0..p).map(|i| levels.mu_a2[i] * mu_post[i] + levels.mu_sb[i]).collect();
    let rate = mu_prior.iter().zip(&mu_post).map(|(pr, po)| (0.5 * (pr / po).log2()).max(0.0)).sum();
    Ok(EigenWaterfill {
        theta_star: theta,
        mu_post,
        mu_prior,
        mu_a2: levels.mu_a2,
        mu_sigma_bar: levels.mu_sb,
        basis,
        rate,
        regularization,
        tag: class.tag,
        budget_active,
    })
}

fn excess_checked(problem: &StationaryProblem) -> Result<f64> {
    let excess = problem.excess();
    if excess > 0.0 {
        Ok(excess)
    } else {
        Err(NrdfError::BudgetInfeasible { budget: problem.distortion, d_min: problem.d_min() })
    }
}

/// `½ log₂(α² + Σ̄/(D − Σ))` for a scalar model, clamped at 0.
pub fn scalar_closed_form(problem: &StationaryProblem) -> Result<f64> {
    if problem.model.state_dim() != 1 || problem.model.obs_dim() != 1 {
        return Err(NrdfError::InvalidArgument("scalar closed form needs p = m = 1".into()));
    }
    let excess = excess_checked(problem)?;
    let alpha = problem.model.a()[(0, 0)];
    let sigma_bar = problem.steady.sigma_bar[(0, 0)];
    Ok((0.5 * (alpha * alpha + sigma_bar / excess).log2()).max(0.0))
}

/// Uniform-allocation bound `(p/2) log₂(ā² + |Σ̄|^{1/p}·p/(D − trace Σ))`
/// with `ā = |det A|^{1/p}`, clamped at 0.
pub fn kh_bound(problem: &StationaryProblem) -> Result<f64> {
    let excess = excess_checked(problem)?;
    let p = problem.dim() as f64;
    let a = problem.model.a();
    let det_a = a.determinant().abs();
    let a_scale = linalg::inf_norm(a);
    if !(det_a > f64::EPSILON * a_scale.powf(p)) {
        return Err(NrdfError::SingularA);
    }
    let a_bar = det_a.powf(1.0 / p);
    let ev = linalg::sym_eigenvalues(&problem.steady.sigma_bar);
    let geo_mean = if ev.iter().any(|&l| l <= 0.0) {
        0.0
    } else {
        (ev.iter().map(|l| l.ln()).sum::<f64>() / p).exp()
    };
    Ok((0.5 * p * (a_bar * a_bar + geo_mean * p / excess).log2()).max(0.0))
}

/// Time-invariant posterior/prior pair of the statistic and its rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryTestChannelSpec {
    /// Σ^ξ
    pub sigma_xi: DMatrix<f64>,
    /// Π^ξ = AΣ^ξAᵀ + Σ̄
    pub pi_xi: DMatrix<f64>,
    pub rate: f64,
}

impl StationaryTestChannelSpec {
    /// Builds Π^ξ from a posterior and computes the rate.
    pub fn from_posterior(a: &DMatrix<f64>, sigma_bar: &DMatrix<f64>, sigma_xi: DMatrix<f64>) -> Result<Self> {
        let pi_xi = linalg::symmetrize(&(a * &sigma_xi * a.transpose() + sigma_bar));
        let mut spec = Self { sigma_xi, pi_xi, rate: 0.0 };
        spec.rate = stationary_rate(&spec)?;
        Ok(spec)
    }
}

/// `½ log₂(det Π^ξ / det Σ^ξ)`.
pub fn stationary_rate(spec: &StationaryTestChannelSpec) -> Result<f64> {
    let ld_post = linalg::log_det_spd(&spec.sigma_xi).ok_or(NrdfError::SingularPosterior)?;
    let ld_prior = linalg::log_det_spd(&spec.pi_xi).ok_or(NrdfError::SingularPosterior)?;
    Ok(0.5 * (ld_prior - ld_post) / std::f64::consts::LN_2)
}
