//! Diagnosis-driven hyperparameter optimization.
//!
//! Trials are traced epoch by epoch into ten-number summaries of their
//! gradients, weights and activations. A checker evaluates seven quality
//! indicators over those traces and early-terminates trials that show
//! training pathologies, while a replay simulator re-runs the checker over
//! recorded experiments for calibration.

pub mod error;
pub mod indicators;
pub mod runner;
pub mod scalar;
pub mod metrics;
pub mod scheduler;
pub mod simulator;
pub mod space;
pub mod stats;
pub mod toytrainer;
pub mod trace;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Double-precision summary, the type stored in trace files.
pub type StatVector = stats::StatVector<f64>;
/// Single-precision summary.
pub type StatVector32 = stats::StatVector<f32>;
