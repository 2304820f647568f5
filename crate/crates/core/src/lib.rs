//! Breathing rate and minute ventilation from wearable ECG, conditioned on
//! physical-activity context recognised from a wrist IMU.
//!
//! Data flows `data_io` → `dsp` → (`ecg`, `imu`) → (`classifier`,
//! `regression`) → `pipeline` → `biomarker`. `synth` generates sessions with
//! planted ground truth in the on-disk formats `data_io` reads.

pub mod biomarker;
pub mod classifier;
pub mod data_io;
pub mod dsp;
pub mod ecg;
mod error;
pub mod imu;
pub mod optim;
pub mod pipeline;
pub mod regression;
pub mod rng;
pub mod stats;
pub mod synth;

pub use error::Error;

pub type Result<T> = std::result::Result<T, Error>;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
