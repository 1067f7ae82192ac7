//! Small dense linear-algebra helpers shared by the solvers.
//!
//! Everything here works on `DMatrix<f64>`; the matrices involved are
//! covariance-sized (p up to a few hundred), so clarity wins over blocking.

use nalgebra::{Cholesky, DMatrix, Dyn, SymmetricEigen};

/// Relative pivot floor used when deciding whether an SPD factorization is usable.
pub const PIVOT_REL_TOL: f64 = 1e-12;

/// Relative eigenvalue floor for "⪰ 0" checks.
pub const PSD_REL_TOL: f64 = 1e-9;

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Maximum absolute row sum.
pub fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax()
}

pub fn is_symmetric(m: &DMatrix<f64>, rel_tol: f64) -> bool {
    m.is_square() && max_abs_diff(m, &m.transpose()) <= rel_tol * inf_norm(m).max(1.0)
}

/// Eigenvalues of the symmetric part of `m`, ascending.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(symmetrize(m)).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// `m ⪰ 0` up to an eigenvalue floor of `-PSD_REL_TOL·‖m‖∞`.
pub fn is_psd(m: &DMatrix<f64>) -> bool {
    if m.nrows() == 0 {
        return true;
    }
    let floor = -PSD_REL_TOL * inf_norm(m);
    sym_eigenvalues(m).first().is_some_and(|&l| l >= floor)
}

/// `m ≻ 0`: a Cholesky factor exists and its pivots clear the relative floor.
pub fn is_pd(m: &DMatrix<f64>) -> bool {
    spd_cholesky(m).is_some()
}

/// Cholesky factorization with the pivot test `L_ii² ≥ PIVOT_REL_TOL·max_i m_ii`.
pub fn spd_cholesky(m: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    if !m.is_square() || m.nrows() == 0 {
        return None;
    }
    let max_diag = m.diagonal().iter().copied().fold(0.0, f64::max);
    if max_diag <= 0.0 {
        return None;
    }
    let chol = Cholesky::new(symmetrize(m))?;
    let min_pivot = chol.l_dirty().diagonal().iter().map(|d| d * d).fold(f64::INFINITY, f64::min);
    (min_pivot >= PIVOT_REL_TOL * max_diag).then_some(chol)
}

/// log det of an SPD matrix (natural log).
pub fn log_det_spd(m: &DMatrix<f64>) -> Option<f64> {
    let chol = spd_cholesky(m)?;
    Some(2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

/// Symmetric PSD square root via eigendecomposition; negative eigenvalues are clamped to zero.
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
    symmetrize(&(&eig.eigenvectors * d * eig.eigenvectors.transpose()))
}

/// Numerical rank from singular values above `rel_tol · σ_max`.
pub fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.iter().copied().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * smax).count()
}

/// Spread (max − min) of the eigenvalues of a symmetric matrix.
pub fn eigen_spread(m: &DMatrix<f64>) -> f64 {
    let ev = sym_eigenvalues(m);
    match (ev.first(), ev.last()) {
        (Some(lo), Some(hi)) => hi - lo,
        _ => 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psd_and_pd_checks() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]);
        assert!(is_psd(&m));
        assert!(!is_pd(&m));
        let neg = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1e-3]);
        assert!(!is_psd(&neg));
        assert!(is_pd(&DMatrix::identity(3, 3)));
        assert!(!is_pd(&DMatrix::zeros(2, 2)));
    }

    #[test]
    fn sqrt_squares_back() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let s = psd_sqrt(&m);
        assert!(max_abs_diff(&(&s * &s), &m) < 1e-12);
    }

    #[test]
    fn log_det_matches_product() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 3.0]);
        assert!((log_det_spd(&m).unwrap() - 6f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn rank_of_outer_product() {
        let v = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
        assert_eq!(numerical_rank(&(&v * v.transpose()), 1e-10), 1);
    }
}
