//! Run configuration file.
//!
//! Flat `key = value` lines, `#` comments. Lengths carry an `m` suffix
//! (`1.9m`); every other number is bare. Unknown or repeated keys are errors
//! and omitted keys keep their defaults. [`Config::canonical`] writes every
//! key in a fixed order, so two files describe the same run exactly when their
//! canonical forms are equal.

use std::fmt::Write as _;

use thiserror::Error;

use crate::characterize::CharacterizeConfig;
use crate::control::PdConfig;
use crate::error::ConfigError;
use crate::estimation::{FlatReference, Grid, NoiseMapConfig};
use crate::sim::{EpisodeConfig, Plant, RecordWindow, DEFAULT_BUILDING};
use crate::vehicle::{DynamicsConfig, InnerLoopConfig};
use crate::world::{Building, SonarConfig, Terrain, TrackerConfig};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigFileError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: `{key}`: {message}")]
    Value { line: usize, key: String, message: String },
    #[error("{0}")]
    Invalid(#[from] ConfigError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TerrainKind {
    Flat,
    Stepped,
}

impl TerrainKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TerrainKind::Flat => "flat",
            TerrainKind::Stepped => "stepped",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FallbackKind {
    Gp,
    Poly,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub dynamics: DynamicsConfig,
    pub inner: InnerLoopConfig,
    pub pd: PdConfig,
    pub sonar: SonarConfig,
    pub tracker: TrackerConfig,
    pub floor_height: f64,
    pub building: Building,
    /// Mode and seed are set per run.
    pub episode: EpisodeConfig,
    /// `components_z` is replaced by the per-dataset counts below.
    pub characterize: CharacterizeConfig,
    pub components_z_flat: usize,
    pub components_z_disturbed: usize,
    pub noise_map: NoiseMapConfig,
    pub fallback: FallbackKind,
}

impl Default for Config {
    fn default() -> Self {
        let plant = Plant::stepped();
        Self {
            dynamics: plant.dynamics,
            inner: plant.inner,
            pd: plant.pd,
            sonar: plant.sonar,
            tracker: plant.tracker,
            floor_height: 0.0,
            building: DEFAULT_BUILDING,
            episode: EpisodeConfig::default(),
            characterize: CharacterizeConfig::default(),
            components_z_flat: 1,
            components_z_disturbed: 2,
            noise_map: NoiseMapConfig::default(),
            fallback: FallbackKind::Gp,
        }
    }
}

impl Config {
    pub fn terrain(&self, kind: TerrainKind) -> Result<Terrain, ConfigError> {
        match kind {
            TerrainKind::Flat => Ok(Terrain::flat(self.floor_height)),
            TerrainKind::Stepped => Terrain::stepped(self.floor_height, self.building),
        }
    }

    pub fn plant(&self, kind: TerrainKind) -> Result<Plant, ConfigError> {
        let plant = Plant {
            terrain: self.terrain(kind)?,
            sonar: self.sonar,
            tracker: self.tracker,
            inner: self.inner,
            dynamics: self.dynamics,
            pd: self.pd,
        };
        plant.validate()?;
        Ok(plant)
    }

    pub fn characterize_for(&self, disturbed: bool) -> CharacterizeConfig {
        CharacterizeConfig {
            components_z: if disturbed {
                self.components_z_disturbed
            } else {
                self.components_z_flat
            },
            ..self.characterize
        }
    }

    pub fn reference_z(&self) -> f64 {
        self.pd.setpoint.z
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let plant = self.plant(TerrainKind::Stepped)?;
        self.episode.validate(&plant)?;
        let g = &self.characterize.grid;
        Grid::new(g.origin_x, g.origin_y, g.cell, g.nx, g.ny).map_err(|e| ConfigError::invalid("grid", e.to_string()))?;
        let t = &self.characterize.trim;
        if !(t.head >= 0.0) || !(t.tail >= 0.0) {
            return Err(ConfigError::invalid("trim_head", "trim windows must be >= 0"));
        }
        if !(t.mad_k > 0.0) || !(t.mad_floor > 0.0) {
            return Err(ConfigError::invalid("mad_k", "outlier threshold and floor must be > 0"));
        }
        let m = &self.characterize;
        for (key, v) in [
            ("gmm_components_x", m.components_x),
            ("gmm_components_y", m.components_y),
            ("gmm_components_z_flat", self.components_z_flat),
            ("gmm_components_z_disturbed", self.components_z_disturbed),
            ("gmm_components_cell", m.components_cell),
            ("gmm_max_iter", m.gmm.max_iter),
        ] {
            if v == 0 {
                return Err(ConfigError::invalid(key, "must be >= 1"));
            }
        }
        if !(m.gmm.tol > 0.0) || !(m.gmm.sigma_floor > 0.0) || !(m.gmm.weight_floor > 0.0) {
            return Err(ConfigError::invalid("gmm_tol", "tolerance and floors must be > 0"));
        }
        m.kernel.validate().map_err(|e| ConfigError::invalid("gp", e.to_string()))?;
        if self.noise_map.min_count == 0 {
            return Err(ConfigError::invalid("min_count", "must be >= 1"));
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, ConfigFileError> {
        let mut cfg = Config::default();
        let mut seen: Vec<&'static str> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(ConfigFileError::Syntax {
                    line: line_no,
                    message: format!("expected `key = value`, got `{line}`"),
                });
            };
            let key = k.trim();
            let Some(field) = FIELDS.iter().find(|f| f.key == key) else {
                return Err(ConfigFileError::Value {
                    line: line_no,
                    key: key.to_string(),
                    message: "unknown key".into(),
                });
            };
            if seen.contains(&field.key) {
                return Err(ConfigFileError::Value {
                    line: line_no,
                    key: key.to_string(),
                    message: "given more than once".into(),
                });
            }
            seen.push(field.key);
            let value = field.kind.parse(v.trim()).map_err(|message| ConfigFileError::Value {
                line: line_no,
                key: key.to_string(),
                message,
            })?;
            (field.set)(&mut cfg, value);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Every key in a fixed order; parses back to an equal `Config`.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        for f in FIELDS {
            let _ = writeln!(out, "{} = {}", f.key, f.kind.render(&(f.get)(self)));
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Value {
    F(f64),
    U(usize),
    B(bool),
    W(&'static str),
    P(Vec<(f64, f64)>),
}

impl Value {
    fn f(self) -> f64 {
        match self {
            Value::F(v) => v,
            _ => unreachable!("field kind guarantees a number"),
        }
    }
    fn u(self) -> usize {
        match self {
            Value::U(v) => v,
            _ => unreachable!("field kind guarantees a count"),
        }
    }
    fn b(self) -> bool {
        match self {
            Value::B(v) => v,
            _ => unreachable!("field kind guarantees a flag"),
        }
    }
    fn w(self) -> &'static str {
        match self {
            Value::W(v) => v,
            _ => unreachable!("field kind guarantees a word"),
        }
    }
    fn p(self) -> Vec<(f64, f64)> {
        match self {
            Value::P(v) => v,
            _ => unreachable!("field kind guarantees points"),
        }
    }
}

#[derive(Clone, Copy)]
enum Kind {
    Length,
    Number,
    Count,
    Flag,
    Word(&'static [&'static str]),
    Points,
}

// Folds -0 into 0 so the canonical text does not distinguish them.
fn fmt_f64(v: f64) -> String {
    format!("{}", v + 0.0)
}

fn parse_number(s: &str) -> Result<f64, String> {
    if s.ends_with('m') {
        return Err(format!("`{s}` has a unit suffix but this key is not a length"));
    }
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| format!("expected a finite number, got `{s}`"))
}

fn parse_length(s: &str) -> Result<f64, String> {
    let Some(num) = s.strip_suffix('m') else {
        return Err(format!("length `{s}` needs the `m` suffix"));
    };
    parse_number(num.trim_end())
}

impl Kind {
    fn parse(self, s: &str) -> Result<Value, String> {
        match self {
            Kind::Length => parse_length(s).map(Value::F),
            Kind::Number => parse_number(s).map(Value::F),
            Kind::Count => s
                .parse::<usize>()
                .map(Value::U)
                .map_err(|_| format!("expected a non-negative integer, got `{s}`")),
            Kind::Flag => match s {
                "true" => Ok(Value::B(true)),
                "false" => Ok(Value::B(false)),
                _ => Err(format!("expected true or false, got `{s}`")),
            },
            Kind::Word(options) => options
                .iter()
                .find(|o| **o == s)
                .map(|o| Value::W(o))
                .ok_or_else(|| format!("expected one of {}, got `{s}`", options.join(", "))),
            Kind::Points => {
                let mut points = Vec::new();
                let mut rest = s;
                while let Some(open) = rest.find('(') {
                    if !rest[..open].trim().is_empty() {
                        return Err(format!("unexpected `{}`", rest[..open].trim()));
                    }
                    let close = rest[open..].find(')').ok_or("unclosed `(`")? + open;
                    let inner = &rest[open + 1..close];
                    let (a, b) = inner.split_once(',').ok_or("expected `(x m, y m)`")?;
                    points.push((parse_length(a.trim())?, parse_length(b.trim())?));
                    rest = &rest[close + 1..];
                }
                if !rest.trim().is_empty() {
                    return Err(format!("unexpected `{}`", rest.trim()));
                }
                Ok(Value::P(points))
            }
        }
    }

    fn render(self, v: &Value) -> String {
        match (self, v) {
            (Kind::Length, Value::F(x)) => format!("{}m", fmt_f64(*x)),
            (Kind::Number, Value::F(x)) => fmt_f64(*x),
            (Kind::Count, Value::U(n)) => n.to_string(),
            (Kind::Flag, Value::B(b)) => b.to_string(),
            (Kind::Word(_), Value::W(w)) => w.to_string(),
            (Kind::Points, Value::P(ps)) => ps
                .iter()
                .map(|(x, y)| format!("({}m, {}m)", fmt_f64(*x), fmt_f64(*y)))
                .collect::<Vec<_>>()
                .join(" "),
            _ => unreachable!("getter matches field kind"),
        }
    }
}

struct Field {
    key: &'static str,
    kind: Kind,
    get: fn(&Config) -> Value,
    set: fn(&mut Config, Value),
}

use Kind::{Count, Flag, Length, Number, Points, Word};
use Value::{B, F, P, U, W};

macro_rules! field {
    ($key:literal, $kind:expr, $c:ident => $place:expr, $conv:ident, $wrap:expr) => {
        Field {
            key: $key,
            kind: $kind,
            get: |$c: &Config| $wrap($place),
            set: |$c: &mut Config, v: Value| $place = v.$conv(),
        }
    };
}

const RECORD_WINDOWS: &[&str] = &["hover-only", "full"];
const FLAT_REFERENCES: &[&str] = &["per-cell", "global"];
const FALLBACKS: &[&str] = &["gp", "poly"];

static FIELDS: &[Field] = &[
    field!("dt", Number, c => c.dynamics.dt, f, F),
    field!("tau", Number, c => c.dynamics.tau, f, F),
    field!("command_limit_x", Number, c => c.dynamics.command_limits.x, f, F),
    field!("command_limit_y", Number, c => c.dynamics.command_limits.y, f, F),
    field!("command_limit_z", Number, c => c.dynamics.command_limits.z, f, F),
    field!("inner_enabled", Flag, c => c.inner.enabled, b, B),
    field!("inner_setpoint", Length, c => c.inner.sonar_setpoint, f, F),
    field!("inner_gain", Number, c => c.inner.gain, f, F),
    field!("inner_v_max", Number, c => c.inner.v_max, f, F),
    field!("outer_enabled", Flag, c => c.pd.enabled, b, B),
    field!("kp_x", Number, c => c.pd.kp.x, f, F),
    field!("kp_y", Number, c => c.pd.kp.y, f, F),
    field!("kp_z", Number, c => c.pd.kp.z, f, F),
    field!("kd_x", Number, c => c.pd.kd.x, f, F),
    field!("kd_y", Number, c => c.pd.kd.y, f, F),
    field!("kd_z", Number, c => c.pd.kd.z, f, F),
    field!("pd_limit", Number, c => c.pd.command_limit, f, F),
    field!("hover_trim", Number, c => c.pd.feedforward.z, f, F),
    field!("altitude_setpoint", Length, c => c.pd.setpoint.z, f, F),
    field!("sonar_noise_std", Length, c => c.sonar.noise_std, f, F),
    field!("sonar_max_range", Length, c => c.sonar.max_range, f, F),
    field!("beam_separation", Length, c => c.sonar.beam_separation, f, F),
    field!("tracker_noise_std", Length, c => c.tracker.noise_std, f, F),
    field!("observable_z_max", Length, c => c.tracker.observable_z_max, f, F),
    field!("bounds_x_min", Length, c => c.tracker.bounds_x.0, f, F),
    field!("bounds_x_max", Length, c => c.tracker.bounds_x.1, f, F),
    field!("bounds_y_min", Length, c => c.tracker.bounds_y.0, f, F),
    field!("bounds_y_max", Length, c => c.tracker.bounds_y.1, f, F),
    field!("floor_height", Length, c => c.floor_height, f, F),
    field!("building_x_min", Length, c => c.building.x_min, f, F),
    field!("building_x_max", Length, c => c.building.x_max, f, F),
    field!("building_y_min", Length, c => c.building.y_min, f, F),
    field!("building_y_max", Length, c => c.building.y_max, f, F),
    field!("building_height", Length, c => c.building.height, f, F),
    field!("duration", Number, c => c.episode.duration, f, F),
    field!("start_x", Length, c => c.episode.start.x, f, F),
    field!("start_y", Length, c => c.episode.start.y, f, F),
    field!("start_z", Length, c => c.episode.start.z, f, F),
    Field {
        key: "waypoints",
        kind: Points,
        get: |c| P(c.episode.waypoints.clone()),
        set: |c, v| c.episode.waypoints = v.p(),
    },
    field!("capture_radius", Length, c => c.episode.capture_radius, f, F),
    Field {
        key: "record_window",
        kind: Word(RECORD_WINDOWS),
        get: |c| {
            W(match c.episode.record_window {
                RecordWindow::HoverOnly => "hover-only",
                RecordWindow::Full => "full",
            })
        },
        set: |c, v| {
            c.episode.record_window = match v.w() {
                "full" => RecordWindow::Full,
                _ => RecordWindow::HoverOnly,
            }
        },
    },
    field!("grid_origin_x", Length, c => c.characterize.grid.origin_x, f, F),
    field!("grid_origin_y", Length, c => c.characterize.grid.origin_y, f, F),
    field!("grid_cell", Length, c => c.characterize.grid.cell, f, F),
    field!("grid_nx", Count, c => c.characterize.grid.nx, u, U),
    field!("grid_ny", Count, c => c.characterize.grid.ny, u, U),
    field!("trim_head", Number, c => c.characterize.trim.head, f, F),
    field!("trim_tail", Number, c => c.characterize.trim.tail, f, F),
    field!("mad_k", Number, c => c.characterize.trim.mad_k, f, F),
    field!("mad_floor", Length, c => c.characterize.trim.mad_floor, f, F),
    field!("gmm_components_x", Count, c => c.characterize.components_x, u, U),
    field!("gmm_components_y", Count, c => c.characterize.components_y, u, U),
    field!("gmm_components_z_flat", Count, c => c.components_z_flat, u, U),
    field!("gmm_components_z_disturbed", Count, c => c.components_z_disturbed, u, U),
    field!("gmm_components_cell", Count, c => c.characterize.components_cell, u, U),
    field!("cell_fit_min_count", Count, c => c.characterize.cell_fit_min_count, u, U),
    field!("gmm_tol", Number, c => c.characterize.gmm.tol, f, F),
    field!("gmm_max_iter", Count, c => c.characterize.gmm.max_iter, u, U),
    field!("gmm_sigma_floor", Length, c => c.characterize.gmm.sigma_floor, f, F),
    field!("gmm_weight_floor", Number, c => c.characterize.gmm.weight_floor, f, F),
    Field {
        key: "gmm_seed",
        kind: Count,
        get: |c| U(c.characterize.gmm.seed as usize),
        set: |c, v| c.characterize.gmm.seed = v.u() as u64,
    },
    field!("poly_degree", Count, c => c.characterize.poly_degree, u, U),
    field!("gp_length_scale", Length, c => c.characterize.kernel.length_scale, f, F),
    field!("gp_signal_var", Number, c => c.characterize.kernel.signal_var, f, F),
    field!("gp_noise_var", Number, c => c.characterize.kernel.noise_var, f, F),
    field!("min_count", Count, c => c.noise_map.min_count, u, U),
    Field {
        key: "flat_reference",
        kind: Word(FLAT_REFERENCES),
        get: |c| {
            W(match c.noise_map.flat_reference {
                FlatReference::PerCell => "per-cell",
                FlatReference::Global => "global",
            })
        },
        set: |c, v| {
            c.noise_map.flat_reference = match v.w() {
                "global" => FlatReference::Global,
                _ => FlatReference::PerCell,
            }
        },
    },
    Field {
        key: "fallback",
        kind: Word(FALLBACKS),
        get: |c| {
            W(match c.fallback {
                FallbackKind::Gp => "gp",
                FallbackKind::Poly => "poly",
            })
        },
        set: |c, v| {
            c.fallback = match v.w() {
                "poly" => FallbackKind::Poly,
                _ => FallbackKind::Gp,
            }
        },
    },
];

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_file_is_the_default() {
        assert_eq!(Config::parse("").unwrap(), Config::default());
        assert_eq!(Config::parse("# only a comment\n\n").unwrap(), Config::default());
    }

    #[test]
    fn canonical_round_trip() {
        let cfg = Config::default();
        let text = cfg.canonical();
        assert_eq!(Config::parse(&text).unwrap(), cfg);
        assert!(text.contains("building_x_min = 1.9m\n"));
        assert!(text.contains("waypoints = (1.2m, 1.85m) (1.9m, 1.85m)\n"));
        assert!(text.contains("record_window = hover-only\n"));
    }

    #[test]
    fn overrides_apply() {
        let cfg = Config::parse("kp_z = 4\nbuilding_height = 0.25m\nfallback = poly\nwaypoints = (1m, 1m)\n").unwrap();
        assert_eq!(cfg.pd.kp.z, 4.0);
        assert_eq!(cfg.building.height, 0.25);
        assert_eq!(cfg.fallback, FallbackKind::Poly);
        assert_eq!(cfg.episode.waypoints, vec![(1.0, 1.0)]);
    }

    #[test]
    fn unit_rules() {
        let err = Config::parse("building_height = 0.3\n").unwrap_err();
        assert!(matches!(err, ConfigFileError::Value { line: 1, .. }), "{err}");
        assert!(Config::parse("dt = 0.02m\n").is_err());
        assert!(Config::parse("building_height = 0.3 m\n").is_ok());
    }

    #[test]
    fn syntax_errors_name_the_line() {
        match Config::parse("dt = 0.02\nbogus_key = 1\n").unwrap_err() {
            ConfigFileError::Value { line, key, .. } => assert_eq!((line, key.as_str()), (2, "bogus_key")),
            e => panic!("{e}"),
        }
        assert!(matches!(Config::parse("dt 0.02\n"), Err(ConfigFileError::Syntax { line: 1, .. })));
        assert!(Config::parse("dt = 0.02\ndt = 0.01\n").is_err());
        assert!(Config::parse("waypoints = (1m, 1m\n").is_err());
        assert!(Config::parse("record_window = sometimes\n").is_err());
    }

    #[test]
    fn semantic_validation() {
        assert!(matches!(Config::parse("dt = 0.5\n"), Err(ConfigFileError::Invalid(_))));
        assert!(Config::parse("grid_nx = 0\n").is_err());
        assert!(Config::parse("waypoints = (100m, 1m)\n").is_err());
        assert!(Config::parse("gp_length_scale = 0m\n").is_err());
    }

    #[test]
    fn negative_zero_is_canonicalized() {
        let a = Config::parse("floor_height = 0m\n").unwrap().canonical();
        let b = Config::parse("floor_height = -0m\n").unwrap().canonical();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn canonical_is_a_fixed_point(kp in 0.1f64..10.0, h in 0.01f64..1.0, cell in 0.05f64..0.5) {
            let text = format!("kp_z = {kp}\nbuilding_height = {h}m\ngrid_cell = {cell}m\n");
            let cfg = Config::parse(&text).unwrap();
            let canon = cfg.canonical();
            prop_assert_eq!(Config::parse(&canon).unwrap(), cfg);
            prop_assert_eq!(Config::parse(&canon).unwrap().canonical(), canon);
        }
    }
}
