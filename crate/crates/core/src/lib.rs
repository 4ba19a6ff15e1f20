//! Dual low-rank adapters (a short-term and a long-term LoRA) on a frozen
//! recommender base, with the periodized streaming evaluation protocol.
//!
//! Layers, bottom up:
//!
//! * [`math`]: dense matrices, seeded RNG, Adam, finite differences.
//! * [`adapter`]: LoRA pairs, task-arithmetic fusion, checkpoints.
//! * [`model`]: the frozen-base scorer, adapter training, an MF baseline.
//! * [`stream`]: ingestion, filters, periodization, synthetic drift data.
//! * [`strategy`]: incremental-update strategies and the schedule runner.
//! * [`eval`]: AUC, warm/cold breakdowns, result and report files.
//!
//! The first three are generic over [`Scalar`] (`f32` or `f64`); the
//! pipeline layers run in `f64`.

pub mod adapter;
pub mod codec;
pub mod error;
pub mod eval;
pub mod math;
pub mod model;
pub mod scalar;
pub mod strategy;
pub mod stream;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Matrix64 = math::Matrix<f64>;
pub type Matrix32 = math::Matrix<f32>;
pub type Adapter64 = adapter::LoraAdapter<f64>;
pub type Adapter32 = adapter::LoraAdapter<f32>;
pub type AdapterSet64 = adapter::AdapterSet<f64>;
pub type AdapterSet32 = adapter::AdapterSet<f32>;
pub type BaseParams64 = model::BaseParams<f64>;
pub type BaseParams32 = model::BaseParams<f32>;
pub type MfParams64 = model::MfParams<f64>;
