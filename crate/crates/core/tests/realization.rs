mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use nrdf::dare::dare_default;
use nrdf::linalg;
use nrdf::realization::RANK_REL_TOL;
use nrdf::{
    build_test_channel, reduced_rate, reverse_waterfill_finite, reverse_waterfill_stationary, simulate,
    stationary_rate, FiniteHorizonProblem, SimulationConfig, StationaryProblem, StationaryTestChannelSpec,
    SystemModel, TestChannel,
};
use proptest::prelude::*;

fn scalar(v: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, v)
}

#[test]
fn example3_channel_gain() {
    let model = example3();
    let problem = StationaryProblem::new(model.clone(), EX3_D).unwrap();
    let spec = reverse_waterfill_stationary(&problem, 1e-13).unwrap().to_spec();
    let ch = TestChannel::from_stationary(&model, &spec).unwrap();
    let s = &problem.steady;
    let excess = EX3_D - s.sigma[(0, 0)];
    let pi_xi = 1.21 * excess + s.sigma_bar[(0, 0)];
    assert!((pi_xi - 2.5783).abs() < 1e-3);
    assert!((ch.h[0][(0, 0)] - (1.0 - excess / pi_xi)).abs() < 1e-9);
}

#[test]
fn zero_rate_channel_keeps_prediction_error() {
    let (alpha, var_w, var_n) = (0.8, 1.0, 0.5);
    let model = SystemModel::scalar(alpha, 1.0, var_w, var_n, 1.0).unwrap();
    let steady = dare_default(&model).unwrap();
    // stationary variance of e_t = α e_{t−1} + (Kalman innovation)
    let p = steady.sigma_bar[(0, 0)] / (1.0 - alpha * alpha);
    let ch = build_test_channel(&[scalar(p)], &[scalar(p)], &[scalar(alpha)]).unwrap();
    assert_eq!(ch.h[0][(0, 0)], 0.0);
    let cfg = SimulationConfig { horizon: 200, trials: 2000, burn_in: 100, seed: 11 };
    let rep = simulate(&model, &ch, &cfg).unwrap();
    let want = steady.sigma[(0, 0)] + p;
    assert!((rep.empirical_mse - want).abs() < 3.0 * rep.mse_std_err + 1e-3, "{} vs {want}", rep.empirical_mse);
}

#[test]
fn fully_observable_channel_hits_distortion() {
    let model = SystemModel::scalar(0.9, 1.0, 1.0, 0.0, 1.0).unwrap();
    let d = 0.5;
    let problem = StationaryProblem::new(model.clone(), d).unwrap();
    assert!(problem.d_min().abs() < 1e-12);
    let spec = reverse_waterfill_stationary(&problem, 1e-13).unwrap().to_spec();
    let ch = TestChannel::from_stationary(&model, &spec).unwrap();
    let cfg = SimulationConfig { horizon: 150, trials: 2000, burn_in: 50, seed: 3 };
    let rep = simulate(&model, &ch, &cfg).unwrap();
    assert!((rep.empirical_mse - d).abs() / d < 0.02);
}

#[test]
fn sample_statistics_match_channel() {
    let model = SystemModel::scalar(0.95, 0.8, 1.0, 0.6, 1.0).unwrap();
    let problem = StationaryProblem::new(model.clone(), 1.5).unwrap();
    let spec = reverse_waterfill_stationary(&problem, 1e-13).unwrap().to_spec();
    let ch = TestChannel::from_stationary(&model, &spec).unwrap();
    let cfg = SimulationConfig { horizon: 150, trials: 2000, burn_in: 50, seed: 99 };
    let rep = simulate(&model, &ch, &cfg).unwrap();
    let n = rep.samples as f64;

    // ξ − y follows e_t = (1 − H)(α e_{t−1} + innovation) − v_t, an AR(1) with ρ = (1 − H)α
    let post = spec.sigma_xi[(0, 0)];
    let rho = (1.0 - ch.h[0][(0, 0)]) * 0.95;
    let se = post * (2.0 / n * (1.0 + rho * rho) / (1.0 - rho * rho)).sqrt();
    assert!((rep.posterior_cov_hat[(0, 0)] - post).abs() < 3.0 * se, "{} vs {post} (se {se})", rep.posterior_cov_hat[(0, 0)]);

    assert!(rep.max_innovation_corr <= 3.0 / n.sqrt(), "corr {}", rep.max_innovation_corr);
    assert!((rep.empirical_rate - rep.target_rate).abs() < 0.02);
}

#[test]
fn finite_horizon_channel_meets_average_distortion() {
    let n = 30;
    let model = example3().to_time_varying(n);
    let problem = FiniteHorizonProblem::new(model.clone(), 2.9).unwrap();
    let sol = reverse_waterfill_finite(&problem, 1e-12, None).unwrap();
    let ch = TestChannel::from_finite(&problem, &sol).unwrap();
    assert_eq!(ch.stages(), n + 1);
    let cfg = SimulationConfig { horizon: n + 1, trials: 20_000, burn_in: 0, seed: 5 };
    let rep = simulate(&model, &ch, &cfg).unwrap();
    assert!((rep.target_d - 2.9).abs() < 1e-8);
    assert!((rep.empirical_mse - 2.9).abs() < 3.0 * rep.mse_std_err + 1e-3, "{} ± {}", rep.empirical_mse, rep.mse_std_err);
    assert!((rep.target_rate - sol.normalized_rate()).abs() < 1e-10);
    assert!((rep.empirical_rate - rep.target_rate).abs() < 0.02);
}

#[test]
fn multivariate_channel_scalings() {
    let model = example2();
    let problem = StationaryProblem::new(model.clone(), 10.0).unwrap();
    let spec = reverse_waterfill_stationary(&problem, 1e-13).unwrap().to_spec();
    let ch = TestChannel::from_stationary(&model, &spec).unwrap();
    let h = &ch.h[0];
    let expected = DMatrix::identity(3, 3) - &spec.sigma_xi * spec.pi_xi.clone().try_inverse().unwrap();
    assert!(linalg::max_abs_diff(h, &expected) < 1e-9);
    assert!(linalg::is_psd(&(h * &spec.pi_xi)));
    assert!(linalg::is_psd(&ch.sigma_v[0]));
}

/// Prior `Π = BBᵀ + I` and posterior `Π − L Q diag(λ) Qᵀ Lᵀ`, L the Cholesky factor of Π.
fn pair(p: usize, b: &[f64], q: &[f64], lambda: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
    let bm = DMatrix::from_row_slice(p, p, &b[..p * p]);
    let prior = &bm * bm.transpose() + DMatrix::identity(p, p);
    let qr = DMatrix::from_row_slice(p, p, &q[..p * p]).qr();
    let qm = qr.q();
    let l = prior.clone().cholesky().unwrap().l();
    let shrink = &qm * DMatrix::from_diagonal(&DVector::from_column_slice(&lambda[..p])) * qm.transpose();
    let innov = &l * shrink * l.transpose();
    (linalg::symmetrize(&(&prior - innov)), prior)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn reduced_rate_equals_full_rate(
        p in 1usize..=4,
        b in prop::collection::vec(-1.0f64..1.0, 16),
        q in prop::collection::vec(-1.0f64..1.0, 16),
        lambda in prop::collection::vec(prop_oneof![Just(0.0), 0.05f64..0.9], 4),
    ) {
        let (post, prior) = pair(p, &b, &q, &lambda);
        let full = stationary_rate(&StationaryTestChannelSpec { sigma_xi: post.clone(), pi_xi: prior.clone(), rate: 0.0 }).unwrap();
        let reduced = reduced_rate(&post, &prior, RANK_REL_TOL).unwrap();
        prop_assert!((reduced - full.max(0.0)).abs() < 1e-9, "{reduced} vs {full}");
        let want: f64 = lambda[..p].iter().map(|l| -0.5 * (1.0 - l).log2()).sum();
        prop_assert!((reduced - want).abs() < 1e-9);
    }

    #[test]
    fn built_channels_satisfy_scalings(
        p in 1usize..=4,
        b in prop::collection::vec(-1.0f64..1.0, 16),
        q in prop::collection::vec(-1.0f64..1.0, 16),
        lambda in prop::collection::vec(prop_oneof![Just(0.0), 0.05f64..0.9], 4),
    ) {
        let (post, prior) = pair(p, &b, &q, &lambda);
        let ch = build_test_channel(std::slice::from_ref(&post), std::slice::from_ref(&prior), &[DMatrix::identity(p, p)]).unwrap();
        let scale = linalg::inf_norm(&prior);
        prop_assert!(linalg::max_abs_diff(&(&ch.h[0] * &prior), &(&prior - &post)) <= 1e-10 * scale);
        prop_assert!(linalg::is_psd(&ch.sigma_v[0]));
        let rank = lambda[..p].iter().filter(|&&l| l > 0.0).count();
        prop_assert_eq!(ch.reduced_dim[0], rank);
    }
}
