// SPDX-License-Identifier: MIT OR Apache-2.0

//! Exact conditional and asymptotic changepoint tests for binary and count
//! time series, multichannel local and global testing with FDR control, and a
//! simulation laboratory for power studies.
//!
//! The numerical core is generic over the floating-point type through
//! [`num::Real`] (implemented for `f32` and `f64`); the aliases at the crate
//! root fix it to one or the other.
//!
//! ```
//! use exactcp::{ChannelSeries, ExactEngineF64, StatisticId};
//!
//! let series = ChannelSeries::binary(&[0, 0, 0, 0, 0, 1, 1, 1, 1, 1]).unwrap();
//! let engine = ExactEngineF64::new(2000, 7).unwrap();
//! let out = engine.test(&series, StatisticId::Lr, 0.1).unwrap();
//! assert!(out.reject);
//! assert_eq!(out.changepoint_estimate, 5);
//! ```

pub mod asymptotic;
pub mod error;
pub mod exact;
pub mod ingest;
pub mod multichannel;
pub mod multitest;
pub mod num;
mod persist;
pub mod pmf;
pub mod seed;
pub mod series;
pub mod simlab;
pub mod statistics;

#[cfg(test)]
mod testutil;

pub use asymptotic::{asymptotic_cusum_test, bridge_null_cached, simulate_bridge_null, BridgeNull};
pub use error::{Error, Result};
pub use exact::{
    exact_test, minp_multiplicity_test, CalibrationCache, ExactEngine, NullCalibration, StatisticId, TestOutcome,
};
pub use ingest::{ChannelFilter, EdgeMode, NetworkSeries};
pub use multichannel::{
    evaluate_metrics, global_cusum_statistic, global_permutation_test, local_test, ChannelMatrix, GlobalResult,
    LocalResult, Metrics, TruthSpec,
};
pub use multitest::{FdrMethod, PValueSet, RejectionSet};
pub use num::Real;
pub use series::{ChannelSeries, SeriesKind};
pub use simlab::{run_scenario, Baseline, Method, PowerReport, ScenarioConfig};
pub use statistics::{CusumConfig, Estimator, StatisticValue};

pub type ExactEngineF64 = ExactEngine<f64>;
pub type ExactEngineF32 = ExactEngine<f32>;
pub type TestOutcomeF64 = TestOutcome<f64>;
pub type TestOutcomeF32 = TestOutcome<f32>;
pub type BridgeNullF64 = BridgeNull<f64>;
pub type BridgeNullF32 = BridgeNull<f32>;
pub type LocalResultF64 = LocalResult<f64>;
pub type LocalResultF32 = LocalResult<f32>;
pub type GlobalResultF64 = GlobalResult<f64>;
pub type GlobalResultF32 = GlobalResult<f32>;
