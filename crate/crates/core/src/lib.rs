//! Metric scale recovery for monocular structure-from-motion reconstructions.
//!
//! A monocular SfM reconstruction is only determined up to an unknown scale
//! factor. This crate recovers that scale from inertial measurements recorded
//! alongside the video, without requiring the camera-IMU rig calibration or
//! clock offset to be known in advance. The pipeline:
//!
//! 1. parses the camera trajectory and raw IMU log and resamples both onto a
//!    common uniform time base ([`ingest`]),
//! 2. differentiates camera orientations into visual angular velocities
//!    ([`kinematics`]) and jointly estimates the IMU-to-camera rotation,
//!    gyroscope bias and clock offset by comparing them with the gyroscope
//!    ([`alignment`]),
//! 3. smooths the camera positions with a Kalman/RTS smoother whose process
//!    noise is selected by marginal maximum likelihood, yielding visual
//!    accelerations ([`smoother`]),
//! 4. solves for scale, accelerometer bias and the gravity vector, first in
//!    closed form in the time domain and then refined against amplitude
//!    spectra in the frequency domain ([`scale`], [`spectrum`]).
//!
//! [`pipeline::estimate`] runs the whole chain. [`sim`] generates synthetic
//! datasets with known ground truth, and [`eval`] provides rigid-fit and
//! convergence-curve evaluation utilities.

pub mod alignment;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod kabsch;
pub mod kinematics;
pub mod optim;
pub mod pipeline;
pub mod scale;
pub mod series;
pub mod sim;
pub mod smoother;
pub mod spectrum;

pub use alignment::AlignmentResult;
pub use error::{Error, Result, Stage};
pub use eval::{ConvergenceCurve, ConvergencePoint, FitResult};
pub use ingest::{ImuSample, PoseSample};
pub use pipeline::{PipelineConfig, PipelineOutput, StageTimings};
pub use scale::{ScaleSolution, TimeDomainMode};
pub use series::UniformSeries;
pub use sim::{ScenarioSpec, Truth};
pub use smoother::{SmootherConfig, StateTrajectory};
pub use spectrum::{SpectrumSet, Window};
