//! Terrain geometry and the two simulated sensors.
//!
//! The downward sonar pair feeds only the onboard altitude hold (see
//! [`crate::vehicle`]); the external tracker feeds the outer controller and
//! every characterization step. Nothing outside the vehicle module reads a
//! [`SonarReading`].

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::ConfigError;

/// One inch in meters.
pub const INCH: f64 = 0.0254;
/// One foot in meters.
pub const FOOT: f64 = 0.3048;

/// Axis-aligned box standing on the floor. The footprint is half-open:
/// `[x_min, x_max) x [y_min, y_max)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Building {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub height: f64,
}

impl Building {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x < self.x_max && y >= self.y_min && y < self.y_max
    }

    fn overlaps(&self, other: &Building) -> bool {
        self.x_min < other.x_max
            && other.x_min < self.x_max
            && self.y_min < other.y_max
            && other.y_min < self.y_max
    }
}

/// Flat floor plus non-overlapping rectangular buildings.
#[derive(Clone, Debug, PartialEq)]
pub struct Terrain {
    floor_height: f64,
    buildings: Vec<Building>,
}

impl Default for Terrain {
    fn default() -> Self {
        Self::flat(0.0)
    }
}

impl Terrain {
    pub fn flat(floor_height: f64) -> Self {
        Self {
            floor_height,
            buildings: Vec::new(),
        }
    }

    /// Validates every building and rejects overlapping footprints.
    pub fn new(floor_height: f64, buildings: Vec<Building>) -> Result<Self, ConfigError> {
        if !floor_height.is_finite() {
            return Err(ConfigError::invalid("floor_height", "must be finite"));
        }
        for (i, b) in buildings.iter().enumerate() {
            let finite = [b.x_min, b.x_max, b.y_min, b.y_max, b.height]
                .iter()
                .all(|v| v.is_finite());
            if !finite {
                return Err(ConfigError::invalid("building", format!("#{i} has non-finite bounds")));
            }
            if b.x_min >= b.x_max || b.y_min >= b.y_max {
                return Err(ConfigError::invalid(
                    "building",
                    format!("#{i} needs x_min < x_max and y_min < y_max"),
                ));
            }
            if b.height <= 0.0 {
                return Err(ConfigError::invalid("building_height", format!("#{i} must be > 0")));
            }
            if let Some(j) = buildings[..i].iter().position(|o| o.overlaps(b)) {
                return Err(ConfigError::invalid(
                    "building",
                    format!("#{i} overlaps building #{j}"),
                ));
            }
        }
        Ok(Self {
            floor_height,
            buildings,
        })
    }

    /// A single building on a floor at `floor_height`.
    pub fn stepped(floor_height: f64, building: Building) -> Result<Self, ConfigError> {
        Self::new(floor_height, vec![building])
    }

    pub fn floor_height(&self) -> f64 {
        self.floor_height
    }

    pub fn buildings(&self) -> &[Building] {
        &self.buildings
    }

    /// Surface height under `(x, y)`: the floor plus at most one building.
    pub fn height(&self, x: f64, y: f64) -> f64 {
        self.floor_height
            + self
                .buildings
                .iter()
                .find(|b| b.contains(x, y))
                .map_or(0.0, |b| b.height)
    }
}

/// Free-function form of [`Terrain::height`].
pub fn terrain_height(terrain: &Terrain, x: f64, y: f64) -> f64 {
    terrain.height(x, y)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SonarConfig {
    /// Distance between the two downward beams along x (1 in).
    pub beam_separation: f64,
    pub noise_std: f64,
    pub max_range: f64,
}

impl Default for SonarConfig {
    fn default() -> Self {
        Self {
            beam_separation: INCH,
            noise_std: 0.0,
            max_range: 6.0,
        }
    }
}

impl SonarConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.beam_separation > 0.0) {
            return Err(ConfigError::invalid("beam_separation", "must be > 0"));
        }
        if !(self.noise_std >= 0.0) {
            return Err(ConfigError::invalid("sonar_noise_std", "must be >= 0"));
        }
        if !(self.max_range > 0.0) {
            return Err(ConfigError::invalid("sonar_max_range", "must be > 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SonarReading {
    pub range: f64,
    pub valid: bool,
}

impl SonarReading {
    pub const INVALID: SonarReading = SonarReading {
        range: 0.0,
        valid: false,
    };
}

/// Casts two vertical rays at `x -/+ beam_separation / 2` and fuses them by
/// taking the shorter range, then adds Gaussian noise.
///
/// A beam longer than `max_range` returns nothing; the reading is invalid only
/// when both beams do. The noisy range is clamped to `[0, max_range]`.
pub fn sonar_read<R: Rng + ?Sized>(
    terrain: &Terrain,
    position: &Vector3<f64>,
    cfg: &SonarConfig,
    rng: &mut R,
) -> SonarReading {
    let half = cfg.beam_separation / 2.0;
    let beam = |x: f64| {
        let r = position.z - terrain.height(x, position.y);
        (r <= cfg.max_range).then_some(r.max(0.0))
    };
    let noise: f64 = rng.sample::<f64, _>(StandardNormal) * cfg.noise_std;
    let fused = match (beam(position.x - half), beam(position.x + half)) {
        (Some(a), Some(b)) => a.min(b),
        (Some(a), None) | (None, Some(a)) => a,
        (None, None) => return SonarReading::INVALID,
    };
    SonarReading {
        range: (fused + noise).clamp(0.0, cfg.max_range),
        valid: true,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrackerConfig {
    /// Per-axis standard deviation.
    pub noise_std: f64,
    /// Poses above this altitude are out of the camera volume.
    pub observable_z_max: f64,
    pub bounds_x: (f64, f64),
    pub bounds_y: (f64, f64),
}

impl Default for TrackerConfig {
    fn default() -> Self {
        // 16 ft x 12 ft testbed, 4 ft tall observable volume.
        Self {
            noise_std: 0.0,
            observable_z_max: 4.0 * FOOT,
            bounds_x: (0.0, 16.0 * FOOT),
            bounds_y: (0.0, 12.0 * FOOT),
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.noise_std >= 0.0) {
            return Err(ConfigError::invalid("tracker_noise_std", "must be >= 0"));
        }
        if !(self.observable_z_max > 0.0) {
            return Err(ConfigError::invalid("observable_z_max", "must be > 0"));
        }
        if !(self.bounds_x.0 < self.bounds_x.1) {
            return Err(ConfigError::invalid("bounds_x", "min must be < max"));
        }
        if !(self.bounds_y.0 < self.bounds_y.1) {
            return Err(ConfigError::invalid("bounds_y", "min must be < max"));
        }
        Ok(())
    }

    pub fn in_bounds(&self, x: f64, y: f64) -> bool {
        x >= self.bounds_x.0 && x <= self.bounds_x.1 && y >= self.bounds_y.0 && y <= self.bounds_y.1
    }
}

/// Externally measured position. `valid == false` mirrors a tracker dropout.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrackedPose {
    pub position: Vector3<f64>,
    pub valid: bool,
}

/// Adds independent Gaussian noise per axis. Validity is judged on the true
/// position: above `observable_z_max` or outside the x-y bounds is a dropout.
pub fn tracker_read<R: Rng + ?Sized>(
    position: &Vector3<f64>,
    cfg: &TrackerConfig,
    rng: &mut R,
) -> TrackedPose {
    let mut noisy = *position;
    for axis in 0..3 {
        noisy[axis] += rng.sample::<f64, _>(StandardNormal) * cfg.noise_std;
    }
    let valid = position.z <= cfg.observable_z_max && cfg.in_bounds(position.x, position.y);
    TrackedPose {
        position: noisy,
        valid,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::episode_stream;
    use proptest::prelude::*;

    fn unit_building() -> Building {
        Building {
            x_min: 0.0,
            x_max: 1.0,
            y_min: 0.0,
            y_max: 1.0,
            height: 0.3,
        }
    }

    #[test]
    fn terrain_height_examples() {
        assert_eq!(terrain_height(&Terrain::flat(0.0), 2.0, 2.0), 0.0);
        let t = Terrain::stepped(0.0, unit_building()).unwrap();
        assert_eq!(terrain_height(&t, 0.5, 0.5), 0.3);
        assert_eq!(terrain_height(&t, 1.0, 0.5), 0.0);
        assert_eq!(terrain_height(&t, 0.0, 0.0), 0.3);
    }

    #[test]
    fn rejects_bad_buildings() {
        let mut b = unit_building();
        b.height = 0.0;
        assert!(Terrain::stepped(0.0, b).is_err());
        let mut b = unit_building();
        b.x_max = b.x_min;
        assert!(Terrain::stepped(0.0, b).is_err());
        let other = Building {
            x_min: 0.5,
            x_max: 1.5,
            ..unit_building()
        };
        assert!(Terrain::new(0.0, vec![unit_building(), other]).is_err());
        // touching edges are fine with half-open footprints
        let adjacent = Building {
            x_min: 1.0,
            x_max: 2.0,
            ..unit_building()
        };
        assert!(Terrain::new(0.0, vec![unit_building(), adjacent]).is_ok());
    }

    #[test]
    fn sonar_examples() {
        let mut rng = episode_stream(1, 0);
        let cfg = SonarConfig::default();
        let r = sonar_read(&Terrain::flat(0.0), &Vector3::new(2.0, 2.0, 1.0), &cfg, &mut rng);
        assert!(r.valid);
        assert_eq!(r.range, 1.0);

        // Edge at x = 1.0: the left beam (x = 0.9873) is over the roof.
        let t = Terrain::stepped(0.0, unit_building()).unwrap();
        let r = sonar_read(&t, &Vector3::new(1.0, 0.5, 1.0), &cfg, &mut rng);
        assert!((r.range - 0.7).abs() < 1e-12);

        let r = sonar_read(&t, &Vector3::new(0.5, 0.5, 1.0), &cfg, &mut rng);
        assert!((r.range - 0.7).abs() < 1e-12);
    }

    #[test]
    fn sonar_out_of_range_is_invalid() {
        let mut rng = episode_stream(1, 0);
        let cfg = SonarConfig {
            max_range: 0.5,
            ..SonarConfig::default()
        };
        let r = sonar_read(&Terrain::flat(0.0), &Vector3::new(2.0, 2.0, 1.0), &cfg, &mut rng);
        assert!(!r.valid);

        // One beam in range is enough.
        let t = Terrain::stepped(0.0, unit_building()).unwrap();
        let r = sonar_read(&t, &Vector3::new(1.0, 0.5, 0.7), &cfg, &mut rng);
        assert!(r.valid);
        assert!((r.range - 0.4).abs() < 1e-12);
    }

    #[test]
    fn tracker_examples() {
        let mut rng = episode_stream(3, 0);
        let cfg = TrackerConfig::default();
        let p = tracker_read(&Vector3::new(1.0, 1.0, 0.5), &cfg, &mut rng);
        assert!(p.valid);
        assert_eq!(p.position, Vector3::new(1.0, 1.0, 0.5));

        let high = Vector3::new(1.0, 1.0, cfg.observable_z_max + 0.01);
        assert!(!tracker_read(&high, &cfg, &mut rng).valid);
        let outside = Vector3::new(-0.1, 1.0, 0.5);
        assert!(!tracker_read(&outside, &cfg, &mut rng).valid);
    }

    #[test]
    fn tracker_noise_statistics() {
        let cfg = TrackerConfig {
            noise_std: 0.01,
            ..TrackerConfig::default()
        };
        let origin = Vector3::new(1.0, 1.0, 0.5);
        let draws: Vec<f64> = {
            let mut rng = episode_stream(11, 0);
            (0..100_000)
                .map(|_| tracker_read(&origin, &cfg, &mut rng).position.x - origin.x)
                .collect()
        };
        let n = draws.len() as f64;
        let mean = draws.iter().sum::<f64>() / n;
        let std = (draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((std - 0.01).abs() / 0.01 < 0.02, "std {std}");

        let mut again = episode_stream(11, 0);
        let first = tracker_read(&origin, &cfg, &mut again).position.x - origin.x;
        assert_eq!(first, draws[0]);
    }

    proptest! {
        #[test]
        fn min_fusion_never_exceeds_either_beam(
            x in -0.5f64..1.5, y in -0.5f64..1.5, z in 0.31f64..3.0, h in 0.01f64..0.3,
        ) {
            let t = Terrain::stepped(0.0, Building { height: h, ..unit_building() }).unwrap();
            let cfg = SonarConfig::default();
            let mut rng = episode_stream(0, 0);
            let r = sonar_read(&t, &Vector3::new(x, y, z), &cfg, &mut rng);
            let left = z - t.height(x - cfg.beam_separation / 2.0, y);
            let right = z - t.height(x + cfg.beam_separation / 2.0, y);
            prop_assert!(r.valid);
            prop_assert!(r.range <= left + 1e-15 && r.range <= right + 1e-15);
        }

        #[test]
        fn height_is_floor_or_one_building(x in -1.0f64..3.0, y in -1.0f64..3.0) {
            let b2 = Building { x_min: 1.0, x_max: 2.0, y_min: 0.0, y_max: 1.0, height: 0.5 };
            let t = Terrain::new(0.1, vec![unit_building(), b2]).unwrap();
            let h = t.height(x, y);
            let hits = t.buildings().iter().filter(|b| b.contains(x, y)).count();
            prop_assert!(hits <= 1);
            prop_assert!(h == 0.1 || h == 0.4 || h == 0.6);
        }
    }
}
