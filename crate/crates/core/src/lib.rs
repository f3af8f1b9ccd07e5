//! Simulation and estimation core for sonar-disturbance characterization and
//! setpoint-shift cancellation on a quadrotor with an inaccessible onboard
//! altitude loop.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod characterize;
pub mod config;
pub mod control;
pub mod error;
pub mod estimation;
pub mod formats;
pub mod rng;
pub mod sim;
pub mod telemetry;
pub mod vehicle;
pub mod world;

pub use control::{corrected_setpoint, pd_command, ControlCommand, PdConfig, PdState};
pub use error::ConfigError;
pub use estimation::EstimationError;
pub use telemetry::{EpisodeLog, TelemetryRecord};
pub use vehicle::{DynamicsConfig, InnerLoopConfig, VehicleState};
pub use world::{Building, SonarConfig, SonarReading, Terrain, TrackedPose, TrackerConfig};
pub use sim::{
    compare, hover_window, metrics, run_batch, run_episode, ControllerMode, EpisodeConfig, Metrics, Plant, RecordWindow,
    Report, SimError,
};
