//! Neuro-fuzzy supply-chain decision pipeline.
//!
//! Fuzzy C-means clustering seeds a first-order TSK inference system trained
//! with hybrid least-squares/gradient learning; Croston-style forecasts feed a
//! reorder contract whose proposals are committed through an M-of-N
//! multi-signature hash-chained ledger; a four-node day-stepped simulator
//! compares a fixed-review baseline against the forecast-driven policy.
//!
//! The numeric modules are generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the common `f64` instantiations.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0)` also rejects NaN

pub mod anfis;
pub mod dataset;
pub mod economics;
pub mod fcm;
pub mod forecast;
pub mod ledger;
pub mod linalg;
pub mod scalar;
pub mod simulator;

pub use scalar::Scalar;

pub type DataPointF64 = fcm::DataPoint<f64>;
pub type MembershipMatrixF64 = fcm::MembershipMatrix<f64>;
pub type ClusterSetF64 = fcm::ClusterSet<f64>;
pub type FcmConfigF64 = fcm::FcmConfig<f64>;
pub type SmoothingStateF64 = forecast::SmoothingState<f64>;
pub type DemandForecastStateF64 = forecast::DemandForecastState<f64>;
pub type FuzzyInferenceModelF64 = anfis::FuzzyInferenceModel<f64>;
pub type FuzzyInferenceModelF32 = anfis::FuzzyInferenceModel<f32>;
pub type LabeledDatasetF64 = anfis::LabeledDataset<f64>;
pub type TrainingConfigF64 = anfis::TrainingConfig<f64>;
pub type EconomicParamsF64 = economics::EconomicParams<f64>;
