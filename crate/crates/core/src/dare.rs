//! Steady-state filter covariances: the DARE and its scalar closed form.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{NrdfError, Result};
use crate::kf::{measurement_update, time_update};
use crate::linalg;
use crate::model::SystemModel;

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 1_000_000;

/// Rank tolerance for the PBH tests, relative to the largest singular value.
const PBH_RANK_TOL: f64 = 1e-8;
/// Eigenvalues with modulus at least `1 - UNIT_CIRCLE_SLACK` count as unstable.
const UNIT_CIRCLE_SLACK: f64 = 1e-12;

/// Limits of the prior/posterior/gain covariances of a time-invariant filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyState {
    /// Π, the limiting prior covariance.
    pub pi: DMatrix<f64>,
    /// Σ, the limiting posterior covariance.
    pub sigma: DMatrix<f64>,
    /// Σ̄ = Π − Σ.
    pub sigma_bar: DMatrix<f64>,
    /// trace(Σ)
    pub d_min_infty: f64,
    /// Riccati iterations used (0 for closed forms).
    pub iterations: usize,
    /// ‖RHS(Π) − Π‖∞ of the DARE at the returned Π.
    pub residual: f64,
}

impl SteadyState {
    fn from_prior(model: &SystemModel, pi: DMatrix<f64>, iterations: usize) -> Result<Self> {
        let step = measurement_update(&pi, model.stage(), 0)?;
        let next = time_update(&step.posterior_cov, model.stage());
        let residual = (&next - &pi).amax();
        let d_min_infty = step.posterior_cov.trace().max(0.0);
        Ok(Self {
            pi,
            sigma: step.posterior_cov,
            sigma_bar: step.gain_innov_cov,
            d_min_infty,
            iterations,
            residual,
        })
    }
}

/// Solves the DARE by iterating the Riccati difference equation from Π_0 = Σ_x0.
///
/// Stops when successive iterates differ by at most `tol` in the sup norm.
pub fn dare_solve(model: &SystemModel, tol: f64, max_iter: usize) -> Result<SteadyState> {
    if !(tol > 0.0) {
        return Err(NrdfError::InvalidArgument(format!("tol must be positive, got {tol}")));
    }
    if !check_detectable(model.a(), model.c()) {
        return Err(NrdfError::NotDetectable);
    }
    if !check_stabilizable(model.a(), model.sigma_w()) {
        return Err(NrdfError::NotStabilizable);
    }
    let stage = model.stage();
    let mut pi = model.sigma_x0().clone();
    let mut delta = f64::INFINITY;
    for it in 1..=max_iter {
        let step = measurement_update(&pi, stage, it - 1)?;
        let next = time_update(&step.posterior_cov, stage);
        delta = (&next - &pi).amax();
        pi = next;
        if delta <= tol {
            return SteadyState::from_prior(model, pi, it);
        }
    }
    Err(NrdfError::NoConvergence { iterations: max_iter, residual: delta })
}

/// Convenience wrapper with the default tolerance and iteration cap.
pub fn dare_default(model: &SystemModel) -> Result<SteadyState> {
    dare_solve(model, DEFAULT_TOL, DEFAULT_MAX_ITER)
}

/// Closed-form steady state of a scalar model.
///
/// Π is the positive root of `c²Π² + γΠ − σ_w²σ_n² = 0` with
/// `γ = (1 − α²)σ_n² − c²σ_w²`; Σ is the non-negative root of
/// `α²c²Σ² + γ̄Σ − σ_w²σ_n² = 0` with `γ̄ = (1 − α²)σ_n² + c²σ_w²`.
pub fn dare_scalar_closed_form(model: &SystemModel) -> Result<SteadyState> {
    if model.state_dim() != 1 || model.obs_dim() != 1 {
        return Err(NrdfError::InvalidArgument("closed form needs a scalar model".into()));
    }
    let alpha = model.a()[(0, 0)];
    let c = model.c()[(0, 0)];
    let var_w = model.sigma_w()[(0, 0)];
    let var_n = model.sigma_n()[(0, 0)];
    if c == 0.0 {
        return Err(NrdfError::InvalidArgument("observation gain c must be nonzero".into()));
    }
    let (a2, c2) = (alpha * alpha, c * c);
    let q = var_w * var_n;

    let gamma = (1.0 - a2) * var_n - c2 * var_w;
    let pi = positive_root(c2, gamma, q);

    let gamma_bar = (1.0 - a2) * var_n + c2 * var_w;
    let sigma = positive_root(a2 * c2, gamma_bar, q);

    let sigma_bar = c2 * pi * pi / (c2 * pi + var_n);
    let residual = {
        let rhs = a2 * pi + var_w - a2 * c2 * pi * pi / (c2 * pi + var_n);
        (rhs - pi).abs()
    };
    let s = |v: f64| DMatrix::from_element(1, 1, v);
    Ok(SteadyState {
        pi: s(pi),
        sigma: s(sigma),
        sigma_bar: s(sigma_bar),
        d_min_infty: sigma,
        iterations: 0,
        residual,
    })
}

/// Non-negative root of `a x² + b x − q = 0` for `a, q ≥ 0`, avoiding cancellation.
fn positive_root(a: f64, b: f64, q: f64) -> f64 {
    if a == 0.0 {
        return if b > 0.0 { q / b } else { 0.0 };
    }
    let disc = (b * b + 4.0 * a * q).sqrt();
    if b >= 0.0 {
        if disc + b == 0.0 {
            0.0
        } else {
            2.0 * q / (b + disc)
        }
    } else {
        (disc - b) / (2.0 * a)
    }
}

/// PBH detectability: `rank [A − λI; C] = p` for every eigenvalue with |λ| ≥ 1.
pub fn check_detectable(a: &DMatrix<f64>, c: &DMatrix<f64>) -> bool {
    let p = a.nrows();
    if c.ncols() != p {
        return false;
    }
    unstable_eigenvalues(a).into_iter().all(|lambda| {
        let mut stacked = DMatrix::<Complex64>::zeros(p + c.nrows(), p);
        for i in 0..p {
            for j in 0..p {
                stacked[(i, j)] = Complex64::new(a[(i, j)], 0.0) - if i == j { lambda } else { Complex64::new(0.0, 0.0) };
            }
        }
        for i in 0..c.nrows() {
            for j in 0..p {
                stacked[(p + i, j)] = Complex64::new(c[(i, j)], 0.0);
            }
        }
        complex_rank(stacked) == p
    })
}

/// PBH stabilizability: `rank [A − λI, Σ_w^{1/2}] = p` for every eigenvalue with |λ| ≥ 1.
pub fn check_stabilizable(a: &DMatrix<f64>, sigma_w: &DMatrix<f64>) -> bool {
    let p = a.nrows();
    if sigma_w.shape() != (p, p) {
        return false;
    }
    let root = linalg::psd_sqrt(sigma_w);
    unstable_eigenvalues(a).into_iter().all(|lambda| {
        let mut stacked = DMatrix::<Complex64>::zeros(p, 2 * p);
        for i in 0..p {
            for j in 0..p {
                stacked[(i, j)] = Complex64::new(a[(i, j)], 0.0) - if i == j { lambda } else { Complex64::new(0.0, 0.0) };
                stacked[(i, p + j)] = Complex64::new(root[(i, j)], 0.0);
            }
        }
        complex_rank(stacked) == p
    })
}

fn unstable_eigenvalues(a: &DMatrix<f64>) -> Vec<Complex64> {
    let mut out: Vec<Complex64> = Vec::new();
    for l in a.complex_eigenvalues().iter() {
        if l.norm() >= 1.0 - UNIT_CIRCLE_SLACK && !out.iter().any(|o| (o - l).norm() < 1e-12) {
            out.push(*l);
        }
    }
    out
}

fn complex_rank(m: DMatrix<Complex64>) -> usize {
    let sv = m.svd(false, false).singular_values;
    let smax = sv.iter().copied().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > PBH_RANK_TOL * smax.max(1.0)).count()
}
