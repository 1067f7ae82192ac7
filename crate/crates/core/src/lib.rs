//! Indirect nonanticipative rate-distortion (NRDF) for partially observed
//! Gauss-Markov sources under mean-squared error.
//!
//! The encoder sees `z_t = C x_t + n_t` rather than the state `x_t`. A
//! Kalman filter turns the observations into the sufficient statistic
//! `ξ_t = E[x_t | z^t]`, which splits the distortion into an unavoidable
//! floor `D_min = trace(Σ^x_{t|t})` and an excess that the rate pays for.
//!
//! | module | what it computes |
//! |--------|------------------|
//! | [`kf`], [`dare`] | filter covariances, Riccati steady state, `D_min` |
//! | [`finite`] | dynamic reverse waterfilling over a finite horizon (scalar) |
//! | [`stationary`] | eigenvalue reverse waterfilling, scalar closed form, KH bound |
//! | [`realization`] | optimal linear test channel and its Monte-Carlo check |
//!
//! All rates are in bits unless converted with [`LogBase`].

// `!(x > 0.0)` guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dare;
pub mod error;
pub mod finite;
pub mod kf;
pub mod linalg;
pub mod model;
pub mod realization;
pub mod stationary;

mod bisect;

pub use dare::{check_detectable, check_stabilizable, dare_scalar_closed_form, dare_solve, SteadyState};
pub use error::{NrdfError, Result};
pub use finite::{
    pointwise_closed_form, reverse_waterfill_finite, waterfill_stage, FiniteHorizonProblem, PointwiseRates,
    WaterfillSolution,
};
pub use kf::{d_min_finite, kf_forward, KfStep};
pub use model::{Stage, SystemModel, TimeVaryingSystemModel};
pub use realization::{
    build_test_channel, reduce_rank, reduced_rate, simulate, SimulationConfig, SimulationModel, SimulationReport, TestChannel,
};
pub use stationary::{
    classify_structure, kh_bound, reverse_waterfill_stationary, scalar_closed_form, stationary_rate, EigenWaterfill,
    StationaryProblem, StationaryTestChannelSpec, StructuralClass, StructureTag,
};

/// Unit for reported rates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub enum LogBase {
    #[default]
    Bits,
    Nats,
}

impl LogBase {
    /// Converts a rate expressed in bits into this unit.
    pub fn from_bits(self, bits: f64) -> f64 {
        match self {
            LogBase::Bits => bits,
            LogBase::Nats => bits * std::f64::consts::LN_2,
        }
    }
}
