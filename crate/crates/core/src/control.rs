//! External position controller and the setpoint-shifting correction layer.

use nalgebra::Vector3;

use crate::error::ConfigError;
use crate::estimation::NoiseMap;

/// Velocity command sent to the vehicle, m/s per axis.
pub type ControlCommand = Vector3<f64>;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PdConfig {
    pub kp: Vector3<f64>,
    pub kd: Vector3<f64>,
    pub setpoint: Vector3<f64>,
    pub command_limit: f64,
    /// Constant velocity bias added before the clamp. On z this is the hover
    /// trim that makes the composite flat-ground hover settle at the setpoint;
    /// see [`crate::sim::calibrate_hover_trim`].
    pub feedforward: Vector3<f64>,
    /// A disabled controller commands zero velocity.
    pub enabled: bool,
}

impl Default for PdConfig {
    fn default() -> Self {
        Self {
            kp: Vector3::new(1.0, 1.0, 3.0),
            kd: Vector3::new(0.1, 0.1, 0.1),
            setpoint: Vector3::new(0.0, 0.0, 0.5),
            command_limit: 2.0,
            feedforward: Vector3::zeros(),
            enabled: true,
        }
    }
}

impl PdConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !self.kp.iter().all(|k| *k >= 0.0) {
            return Err(ConfigError::invalid("kp", "must be >= 0"));
        }
        if !self.kd.iter().all(|k| *k >= 0.0) {
            return Err(ConfigError::invalid("kd", "must be >= 0"));
        }
        if !(self.command_limit > 0.0) {
            return Err(ConfigError::invalid("pd_limit", "must be > 0"));
        }
        if !self.feedforward.iter().all(|f| f.is_finite()) {
            return Err(ConfigError::invalid("hover_trim", "must be finite"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PdState {
    pub prev_error: Vector3<f64>,
    pub initialized: bool,
}

/// One PD step on the measured position.
///
/// Per axis: `clamp(ff + kp*e + kd*(e - e_prev)/dt, +-limit)` with
/// `e = setpoint - measured`. The derivative term is zero on the first call.
pub fn pd_command(
    measured: &Vector3<f64>,
    state: &PdState,
    cfg: &PdConfig,
    dt: f64,
) -> (ControlCommand, PdState) {
    debug_assert!(dt > 0.0);
    let error = cfg.setpoint - measured;
    let next = PdState {
        prev_error: error,
        initialized: true,
    };
    if !cfg.enabled {
        return (Vector3::zeros(), next);
    }
    let rate = if state.initialized {
        (error - state.prev_error) / dt
    } else {
        Vector3::zeros()
    };
    let limit = cfg.command_limit;
    let raw = cfg.feedforward + cfg.kp.component_mul(&error) + cfg.kd.component_mul(&rate);
    (raw.map(|c| c.clamp(-limit, limit)), next)
}

/// Shifts the desired altitude by the expected sonar-induced deviation at
/// `(x, y)`. Apply to the raw desired altitude only: the shift is not
/// idempotent.
pub fn corrected_setpoint(map: &NoiseMap, x: f64, y: f64, z_des: f64) -> f64 {
    z_des - map.noise_at(x, y)
}
