//! Statistical enrichment of hourly transformer load data into 1-second
//! series, trained on transformers that do have high-resolution meters.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix it to `f64`.

// `!(x > 0)` style checks are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod enrich;
pub mod error;
pub mod gpr;
pub mod linalg;
pub mod markov;
pub mod powerflow;
pub mod rng;
pub mod scalar;
pub mod series;
pub mod synthgen;
pub mod teachers;
pub mod validate;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type HighResSeries = series::HighResSeries<f64>;
pub type LowResSeries = series::LowResSeries<f64>;
pub type CustomerSeries = series::CustomerSeries<f64>;
pub type IntervalStats = series::IntervalStats<f64>;
pub type GprModel = gpr::GprModel<f64>;
pub type KernelParams = gpr::KernelParams<f64>;
pub type TransitionTensor = markov::TransitionTensor<f64>;
pub type LevelPartition = markov::LevelPartition<f64>;
pub type DailyLoadPattern = teachers::DailyLoadPattern<f64>;
pub type TeacherModel = teachers::TeacherModel<f64>;
pub type TeacherRepository = teachers::TeacherRepository<f64>;
pub type TeacherWeights = teachers::TeacherWeights<f64>;
pub type EnrichedSeries = enrich::EnrichedSeries<f64>;
pub type ValidationReport = validate::ValidationReport<f64>;
pub type VoltageTimeSeries = powerflow::VoltageTimeSeries<f64>;
pub type Scenario = synthgen::Scenario<f64>;
