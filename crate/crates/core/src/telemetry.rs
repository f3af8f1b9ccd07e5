//! Externally observed flight data: the only input characterization may use.
//!
//! There is deliberately no field for sonar data anywhere in these types.

/// Resolution of logged values (1e-9), matching the 9-decimal telemetry format.
pub const RESOLUTION: f64 = 1e-9;

const STEPS_PER_UNIT: f64 = 1e9;

/// Rounds to the logging resolution so values survive a text round trip bit for bit.
///
/// The result is the double nearest to `n / 10^9`, which is exactly what
/// parsing the 9-decimal text of `n` yields. Valid for `|v| < 9e6`.
pub fn quantize(v: f64) -> f64 {
    (v * STEPS_PER_UNIT).round() / STEPS_PER_UNIT
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TelemetryRecord {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub valid: bool,
    /// Altitude setpoint actually commanded this step (after any correction).
    pub setpoint_z: f64,
    pub episode: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EpisodeLog {
    pub episode: u64,
    pub records: Vec<TelemetryRecord>,
}

impl EpisodeLog {
    pub fn new(episode: u64) -> Self {
        Self {
            episode,
            records: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn valid_records(&self) -> impl Iterator<Item = &TelemetryRecord> {
        self.records.iter().filter(|r| r.valid)
    }
}
