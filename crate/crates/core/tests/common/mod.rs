#![allow(dead_code)]

use nalgebra::DMatrix;
use nrdf::SystemModel;

pub fn dm(r: usize, c: usize, v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(r, c, v)
}

/// Three-dimensional model with A = 1.2 I and a singular observation noise.
pub fn example2() -> SystemModel {
    SystemModel::new(
        DMatrix::identity(3, 3).scale(1.2),
        dm(3, 3, &[0.8147, 0.9134, 0.2785, 0.9058, 0.6324, 0.5469, 0.1270, 0.0975, 0.9575]),
        dm(3, 3, &[0.8895, 1.1744, 0.2309, 1.1744, 1.8616, 0.2953, 0.2309, 0.2953, 0.0614]),
        DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 1.0, 0.0])),
        DMatrix::identity(3, 3),
    )
    .unwrap()
}

pub const EX2_SIGMA_BAR: [f64; 9] = [2.6928, -0.7211, 0.1847, -0.7211, 4.0349, 0.3254, 0.1847, 0.3254, 0.0645];
pub const EX2_PI: [f64; 9] = [6.7910, -5.0291, 0.0798, -5.0291, 8.9742, 0.3939, 0.0798, 0.3939, 0.0714];
pub const EX2_SIGMA: [f64; 9] = [4.0983, -4.3080, -0.1049, -4.3080, 4.9393, 0.0684, -0.1049, 0.0684, 0.0069];

/// Unstable scalar model observed through a weak sensor.
pub fn example3() -> SystemModel {
    SystemModel::scalar(1.1, 0.5, 1.0, 1.0, 1.0).unwrap()
}

pub const EX3_PI: f64 = 3.1215;
pub const EX3_SIGMA: f64 = 1.7532;
pub const EX3_D: f64 = 2.7532;
pub const EX3_RATE: f64 = 0.6832;

/// `n` points from `lo` to `hi`, evenly spaced in log.
pub fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp()).collect()
}

/// Minimizes `f` over `[lo, hi]` by a uniform grid followed by repeated zooms.
pub fn grid_min_1d(lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> (f64, f64) {
    let (mut a, mut b) = (lo, hi);
    let mut best = (f64::NAN, f64::INFINITY);
    for _ in 0..8 {
        let n = 400;
        for k in 0..=n {
            let x = a + (b - a) * k as f64 / n as f64;
            let v = f(x);
            if v < best.1 {
                best = (x, v);
            }
        }
        let h = 2.0 * (b - a) / n as f64;
        a = (best.0 - h).max(lo);
        b = (best.0 + h).min(hi);
    }
    best
}
