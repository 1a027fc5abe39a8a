//! Channel balance interpolation for payment channel networks.
//!
//! Numeric core types are generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the precision used by the rest of the crate.

pub mod datagen;
pub mod eval;
pub mod features;
pub mod forest;
pub mod graph;
pub mod linalg;
pub mod models;
pub mod routing;
pub mod scalar;
pub mod seed;
pub mod spectral;

pub use graph::{ChannelGraph, DirectedEdge, NodeId};
pub use models::{Estimator, EstimatorKind};
pub use scalar::Scalar;

pub type Encodings = spectral::PositionalTable<f64>;
pub type Encodings32 = spectral::PositionalTable<f32>;
pub type RandomForestModel = forest::RandomForest<f64>;
pub type RandomForestModel32 = forest::RandomForest<f32>;
pub type EvalMetrics = eval::Metrics<f64>;
pub type EvalMetrics32 = eval::Metrics<f32>;
