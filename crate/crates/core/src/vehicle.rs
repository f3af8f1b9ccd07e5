//! Quadrotor kinematics behind a velocity-command interface, and the onboard
//! sonar altitude hold that injects its own climb command.

use nalgebra::Vector3;

use crate::error::ConfigError;
use crate::world::{SonarReading, Terrain};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VehicleState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
}

impl VehicleState {
    pub fn at_rest(position: Vector3<f64>) -> Self {
        Self {
            position,
            velocity: Vector3::zeros(),
        }
    }
}

/// Onboard sonar altitude hold. Its law and signals are not observable from
/// outside the vehicle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InnerLoopConfig {
    /// Range the onboard loop tries to hold (1 m).
    pub sonar_setpoint: f64,
    /// 1/s
    pub gain: f64,
    /// m/s
    pub v_max: f64,
    pub enabled: bool,
}

impl Default for InnerLoopConfig {
    fn default() -> Self {
        Self {
            sonar_setpoint: 1.0,
            gain: 1.5,
            v_max: 1.5,
            enabled: true,
        }
    }
}

impl InnerLoopConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !self.sonar_setpoint.is_finite() {
            return Err(ConfigError::invalid("sonar_setpoint", "must be finite"));
        }
        if !(self.gain > 0.0) {
            return Err(ConfigError::invalid("inner_gain", "must be > 0"));
        }
        if !(self.v_max > 0.0) {
            return Err(ConfigError::invalid("inner_v_max", "must be > 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DynamicsConfig {
    pub dt: f64,
    /// Velocity-tracking time constant.
    pub tau: f64,
    /// Per-axis clamp on the externally commanded velocity.
    pub command_limits: Vector3<f64>,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        Self {
            dt: 0.02,
            tau: 0.3,
            command_limits: Vector3::new(2.0, 2.0, 2.0),
        }
    }
}

impl DynamicsConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.dt > 0.0) {
            return Err(ConfigError::invalid("dt", "must be > 0"));
        }
        if !(self.tau > 0.0) {
            return Err(ConfigError::invalid("tau", "must be > 0"));
        }
        if self.dt >= self.tau {
            return Err(ConfigError::invalid("dt", "must be smaller than tau"));
        }
        if !self.command_limits.iter().all(|l| *l > 0.0) {
            return Err(ConfigError::invalid("command_limit", "must be > 0 on every axis"));
        }
        Ok(())
    }
}

/// Saturated proportional climb command of the onboard loop.
pub fn inner_altitude_command(reading: &SonarReading, cfg: &InnerLoopConfig) -> f64 {
    if !cfg.enabled || !reading.valid {
        return 0.0;
    }
    (cfg.gain * (cfg.sonar_setpoint - reading.range)).clamp(-cfg.v_max, cfg.v_max)
}

/// Advances the vehicle by one step.
///
/// The outer command is clamped per axis first and the inner climb command is
/// added to z afterwards, so the onboard loop can always override. Velocity
/// relaxes toward the command with an exact first-order discretization and the
/// position is the exact integral of that velocity over the step.
pub fn step_dynamics(
    state: &VehicleState,
    outer_cmd: &Vector3<f64>,
    inner_vz: f64,
    terrain: &Terrain,
    cfg: &DynamicsConfig,
) -> VehicleState {
    step_dynamics_with_contact(state, outer_cmd, inner_vz, terrain, cfg).0
}

/// Like [`step_dynamics`], also reporting whether the ground clamp engaged.
pub fn step_dynamics_with_contact(
    state: &VehicleState,
    outer_cmd: &Vector3<f64>,
    inner_vz: f64,
    terrain: &Terrain,
    cfg: &DynamicsConfig,
) -> (VehicleState, bool) {
    let mut command = outer_cmd.zip_map(&cfg.command_limits, |c, l| c.clamp(-l, l));
    command.z += inner_vz;

    let decay = (-cfg.dt / cfg.tau).exp();
    let lag = state.velocity - command;
    let velocity = command + lag * decay;
    let mut position = state.position + command * cfg.dt + lag * (cfg.tau * (1.0 - decay));

    let mut next = VehicleState { position, velocity };
    let ground = terrain.height(position.x, position.y);
    let contact = position.z < ground;
    if contact {
        position.z = ground;
        next.position = position;
        next.velocity.z = 0.0;
    }
    (next, contact)
}
