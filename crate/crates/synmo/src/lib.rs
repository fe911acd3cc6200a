//! Desk-scale pipeline for acceleration-aware motion diffusion and virtual
//! IMU synthesis.
//!
//! The crate trains a small conditional diffusion model over joint-position
//! motion clips, refines it with a second-order (acceleration) loss term,
//! converts generated motion into synthetic accelerometer and gyroscope
//! streams via joint-anchored virtual sensors, and evaluates the synthetic
//! signals in a human-activity-recognition harness.
//!
//! Modules:
//! - [`motion`] — motion sequences, forward kinematics, finite differences,
//!   foot-contact masks, motion file I/O.
//! - [`loss`] — the five training loss terms, their weighted total, analytic
//!   gradients, and a finite-difference gradient checker.
//! - [`diffusion`] — noise schedules, forward diffusion, a residual-MLP
//!   denoiser, the sampling loop, and train/finetune procedures.
//! - [`imu`] — virtual sensor attachment and accelerometer/gyroscope
//!   synthesis, resampling, and signal file I/O.
//! - [`eval`] — category assignment, windowing, feature extraction, a 2-D
//!   projection, a baseline classifier, balanced accuracy, and the
//!   per-category acceleration-loss delta report.
//! - [`pipeline`] — configuration, synthetic corpus generation, dataset
//!   ingestion, and the command-level orchestration behind the CLI.
//!
//! Runnable demonstrations of each capability live in `examples/`.

pub mod error;
pub mod quat;

pub mod diffusion;
pub mod eval;
pub mod imu;
pub mod loss;
pub mod motion;
pub mod pipeline;

pub use error::{Result, SynmoError};
