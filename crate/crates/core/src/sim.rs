//! Episode orchestration, metrics and paired comparison.
//!
//! Per step, in this order: tracker read, waypoint bookkeeping, outer PD on the
//! tracked pose (with the shifted altitude setpoint in corrected mode), sonar
//! read, inner altitude command, dynamics. Only tracker-side values are logged.

use std::sync::Arc;

use nalgebra::Vector3;
use rayon::prelude::*;
use thiserror::Error;

use crate::control::{corrected_setpoint, pd_command, PdConfig, PdState};
use crate::error::ConfigError;
use crate::estimation::NoiseMap;
use crate::rng::{episode_stream, SONAR_STREAM, TRACKER_STREAM};
use crate::telemetry::{quantize, EpisodeLog, TelemetryRecord};
use crate::vehicle::{inner_altitude_command, step_dynamics, DynamicsConfig, InnerLoopConfig, VehicleState};
use crate::world::{sonar_read, tracker_read, Building, SonarConfig, Terrain, TrackerConfig};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("no valid records to evaluate")]
    EmptyLog,
    #[error("{baseline} baseline episodes cannot be paired with {corrected} corrected episodes")]
    Unpaired { baseline: usize, corrected: usize },
}

/// Building of the default stepped scenario: 1 m square, 0.3 m tall.
pub const DEFAULT_BUILDING: Building = Building {
    x_min: 1.9,
    x_max: 2.9,
    y_min: 1.3,
    y_max: 2.3,
    height: 0.3,
};

/// Outer z velocity bias that makes the default composite hover settle at
/// 0.5 m on flat ground: `-(inner gain) * (1.0 - 0.5)`.
pub const DEFAULT_HOVER_TRIM: f64 = -0.75;

/// Everything about the world and the vehicle that stays fixed across episodes.
#[derive(Clone, Debug, PartialEq)]
pub struct Plant {
    pub terrain: Terrain,
    pub sonar: SonarConfig,
    pub tracker: TrackerConfig,
    pub inner: InnerLoopConfig,
    pub dynamics: DynamicsConfig,
    pub pd: PdConfig,
}

impl Plant {
    /// Default scenario over flat ground, with sensor noise.
    pub fn flat() -> Self {
        Self {
            terrain: Terrain::flat(0.0),
            sonar: SonarConfig {
                noise_std: 0.005,
                ..SonarConfig::default()
            },
            tracker: TrackerConfig {
                noise_std: 0.002,
                ..TrackerConfig::default()
            },
            inner: InnerLoopConfig::default(),
            dynamics: DynamicsConfig::default(),
            pd: PdConfig {
                feedforward: Vector3::new(0.0, 0.0, DEFAULT_HOVER_TRIM),
                ..PdConfig::default()
            },
        }
    }

    /// Default scenario with the building.
    pub fn stepped() -> Self {
        Self {
            terrain: Terrain::stepped(0.0, DEFAULT_BUILDING).expect("default building is valid"),
            ..Self::flat()
        }
    }

    pub fn without_noise(mut self) -> Self {
        self.sonar.noise_std = 0.0;
        self.tracker.noise_std = 0.0;
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.sonar.validate()?;
        self.tracker.validate()?;
        self.inner.validate()?;
        self.dynamics.validate()?;
        self.pd.validate()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ControllerMode {
    Baseline,
    Corrected(Arc<NoiseMap>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RecordWindow {
    Full,
    /// From the first step the tracked pose is inside the final waypoint's
    /// capture radius.
    HoverOnly,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeConfig {
    /// s
    pub duration: f64,
    pub start: Vector3<f64>,
    /// Flown in order; the last one is held.
    pub waypoints: Vec<(f64, f64)>,
    pub capture_radius: f64,
    pub mode: ControllerMode,
    pub seed: u64,
    pub record_window: RecordWindow,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            duration: 60.0,
            start: Vector3::new(0.5, 1.85, 0.0),
            waypoints: vec![(1.2, 1.85), (1.9, 1.85)],
            capture_radius: 0.15,
            mode: ControllerMode::Baseline,
            seed: 0,
            record_window: RecordWindow::HoverOnly,
        }
    }
}

impl EpisodeConfig {
    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn with_mode(&self, mode: ControllerMode) -> Self {
        Self { mode, ..self.clone() }
    }

    pub fn hover_xy(&self) -> (f64, f64) {
        *self.waypoints.last().expect("validated episode has waypoints")
    }

    pub fn validate(&self, plant: &Plant) -> Result<(), ConfigError> {
        if !(self.duration > 0.0) || !self.duration.is_finite() {
            return Err(ConfigError::invalid("duration", "must be > 0"));
        }
        if self.duration < plant.dynamics.dt {
            return Err(ConfigError::invalid("duration", "shorter than one step"));
        }
        if !(self.capture_radius > 0.0) {
            return Err(ConfigError::invalid("capture_radius", "must be > 0"));
        }
        if self.waypoints.is_empty() {
            return Err(ConfigError::invalid("waypoints", "need at least one"));
        }
        if let Some((x, y)) = self.waypoints.iter().find(|(x, y)| !plant.tracker.in_bounds(*x, *y)) {
            return Err(ConfigError::invalid("waypoints", format!("({x}, {y}) is outside the tracker bounds")));
        }
        if !self.start.iter().all(|v| v.is_finite()) {
            return Err(ConfigError::invalid("start", "must be finite"));
        }
        Ok(())
    }

    pub fn steps(&self, dt: f64) -> usize {
        (self.duration / dt).round() as usize
    }
}

/// Runs one episode. Deterministic in `(cfg, plant)`.
pub fn run_episode(cfg: &EpisodeConfig, plant: &Plant) -> Result<EpisodeLog, SimError> {
    plant.validate()?;
    cfg.validate(plant)?;

    let dt = plant.dynamics.dt;
    let mut tracker_rng = episode_stream(cfg.seed, TRACKER_STREAM);
    let mut sonar_rng = episode_stream(cfg.seed, SONAR_STREAM);
    let mut state = VehicleState::at_rest(cfg.start);
    let mut pd_state = PdState::default();
    let mut pd_cfg = plant.pd;
    let mut command = Vector3::zeros();
    let mut waypoint = 0;
    let mut recording = cfg.record_window == RecordWindow::Full;
    let z_des = plant.pd.setpoint.z;
    let mut log = EpisodeLog::new(cfg.seed);

    for k in 0..cfg.steps(dt) {
        let pose = tracker_read(&state.position, &plant.tracker, &mut tracker_rng);
        let tracked = pose.position.map(quantize);

        if pose.valid {
            let (wx, wy) = cfg.waypoints[waypoint];
            if (tracked.x - wx).hypot(tracked.y - wy) <= cfg.capture_radius {
                if waypoint + 1 < cfg.waypoints.len() {
                    waypoint += 1;
                } else {
                    recording = true;
                }
            }
            let (wx, wy) = cfg.waypoints[waypoint];
            let z_sp = match &cfg.mode {
                ControllerMode::Baseline => z_des,
                ControllerMode::Corrected(map) => corrected_setpoint(map, tracked.x, tracked.y, z_des),
            };
            pd_cfg.setpoint = Vector3::new(wx, wy, z_sp);
            (command, pd_state) = pd_command(&tracked, &pd_state, &pd_cfg, dt);
        }

        let reading = sonar_read(&plant.terrain, &state.position, &plant.sonar, &mut sonar_rng);
        let inner_vz = inner_altitude_command(&reading, &plant.inner);
        state = step_dynamics(&state, &command, inner_vz, &plant.terrain, &plant.dynamics);

        if recording {
            log.records.push(TelemetryRecord {
                t: quantize(k as f64 * dt),
                x: tracked.x,
                y: tracked.y,
                z: tracked.z,
                valid: pose.valid,
                setpoint_z: quantize(pd_cfg.setpoint.z),
                episode: cfg.seed,
            });
        }
    }
    Ok(log)
}

/// Runs `count` episodes with seeds `seed_base, seed_base + 1, ...` in
/// parallel. The result is in seed order and independent of scheduling.
pub fn run_batch(template: &EpisodeConfig, plant: &Plant, seed_base: u64, count: usize) -> Result<Vec<EpisodeLog>, SimError> {
    (0..count as u64)
        .into_par_iter()
        .map(|i| run_episode(&template.with_seed(seed_base + i), plant))
        .collect()
}

/// Suffix of the log starting at the first valid record within `radius` of
/// `hover_xy`. Idempotent.
pub fn hover_window(log: &EpisodeLog, hover_xy: (f64, f64), radius: f64) -> EpisodeLog {
    let start = log
        .records
        .iter()
        .position(|r| r.valid && (r.x - hover_xy.0).hypot(r.y - hover_xy.1) <= radius)
        .unwrap_or(log.records.len());
    EpisodeLog {
        episode: log.episode,
        records: log.records[start..].to_vec(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metrics {
    pub count: usize,
    pub mean_z: f64,
    /// Root mean square of `z - reference`.
    pub rmse: f64,
    /// Population standard deviation of `z`.
    pub std: f64,
    /// Largest `z - reference`.
    pub max_pos_dev: f64,
    /// Smallest `z - reference`.
    pub max_neg_dev: f64,
}

/// Metrics over the valid records of any number of logs, pooled.
pub fn pooled_metrics<'a, I>(logs: I, reference: f64) -> Result<Metrics, SimError>
where
    I: IntoIterator<Item = &'a EpisodeLog>,
{
    let zs: Vec<f64> = logs.into_iter().flat_map(|l| l.valid_records().map(|r| r.z)).collect();
    if zs.is_empty() {
        return Err(SimError::EmptyLog);
    }
    let n = zs.len() as f64;
    let mean_z = zs.iter().sum::<f64>() / n;
    let rmse = (zs.iter().map(|z| (z - reference).powi(2)).sum::<f64>() / n).sqrt();
    let std = (zs.iter().map(|z| (z - mean_z).powi(2)).sum::<f64>() / n).sqrt();
    let max_pos_dev = zs.iter().map(|z| z - reference).fold(f64::NEG_INFINITY, f64::max);
    let max_neg_dev = zs.iter().map(|z| z - reference).fold(f64::INFINITY, f64::min);
    Ok(Metrics {
        count: zs.len(),
        mean_z,
        rmse,
        std,
        max_pos_dev,
        max_neg_dev,
    })
}

pub fn metrics(log: &EpisodeLog, reference: f64) -> Result<Metrics, SimError> {
    pooled_metrics(std::iter::once(log), reference)
}

/// True when some valid record deviates above `reference + threshold` and a
/// later one below `reference - threshold`.
pub fn rise_then_drop(log: &EpisodeLog, reference: f64, threshold: f64) -> bool {
    let mut risen = false;
    for r in log.valid_records() {
        let dev = r.z - reference;
        if risen && dev < -threshold {
            return true;
        }
        risen |= dev > threshold;
    }
    false
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeComparison {
    pub baseline_episode: u64,
    pub corrected_episode: u64,
    pub baseline: Metrics,
    pub corrected: Metrics,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub reference: f64,
    pub baseline: Metrics,
    pub corrected: Metrics,
    /// `1 - rmse_corrected / rmse_baseline` on pooled records.
    pub improvement_ratio: f64,
    pub episodes: Vec<EpisodeComparison>,
}

/// Pairs logs by position and compares pooled and per-episode metrics.
pub fn compare(baseline: &[EpisodeLog], corrected: &[EpisodeLog], reference: f64) -> Result<Report, SimError> {
    if baseline.len() != corrected.len() || baseline.is_empty() {
        return Err(SimError::Unpaired {
            baseline: baseline.len(),
            corrected: corrected.len(),
        });
    }
    let episodes = baseline
        .iter()
        .zip(corrected)
        .map(|(b, c)| {
            Ok(EpisodeComparison {
                baseline_episode: b.episode,
                corrected_episode: c.episode,
                baseline: metrics(b, reference)?,
                corrected: metrics(c, reference)?,
            })
        })
        .collect::<Result<Vec<_>, SimError>>()?;
    let b = pooled_metrics(baseline, reference)?;
    let c = pooled_metrics(corrected, reference)?;
    let improvement_ratio = if b.rmse > 0.0 {
        1.0 - c.rmse / b.rmse
    } else {
        0.0
    };
    Ok(Report {
        reference,
        baseline: b,
        corrected: c,
        improvement_ratio,
        episodes,
    })
}

/// Finds the outer z feedforward that makes the composite hover settle at the
/// PD altitude setpoint, using only tracker data from baseline episodes on
/// `plant` (normally flat ground).
///
/// Each round flies one episode and moves the trim by `-kp_z * (mean - z_des)`
/// over the second half of the hover window. The onboard gain is unknown, so
/// the update undershoots by a constant factor and converges geometrically.
pub fn calibrate_hover_trim(plant: &Plant, template: &EpisodeConfig, rounds: usize, tol: f64) -> Result<f64, SimError> {
    let mut plant = plant.clone();
    let z_des = plant.pd.setpoint.z;
    let cfg = template.with_mode(ControllerMode::Baseline);
    for _ in 0..rounds {
        let log = run_episode(&cfg, &plant)?;
        let settled = EpisodeLog {
            episode: log.episode,
            records: log.records[log.records.len() / 2..].to_vec(),
        };
        let error = metrics(&settled, z_des)?.mean_z - z_des;
        if error.abs() < tol {
            break;
        }
        plant.pd.feedforward.z -= plant.pd.kp.z * error;
    }
    Ok(plant.pd.feedforward.z)
}
