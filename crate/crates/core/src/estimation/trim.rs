use super::EstimationError;
use crate::telemetry::TelemetryRecord;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrimConfig {
    /// Seconds dropped from the start (takeoff).
    pub head: f64,
    /// Seconds dropped from the end (landing).
    pub tail: f64,
    /// Outlier threshold in units of the median absolute deviation.
    pub mad_k: f64,
    /// Lower bound on the MAD so constant data still rejects outliers.
    pub mad_floor: f64,
}

impl Default for TrimConfig {
    fn default() -> Self {
        Self {
            head: 3.0,
            tail: 3.0,
            mad_k: 6.0,
            mad_floor: 1e-9,
        }
    }
}

// Slack on the window edges so quantized timestamps like 3.000000000 survive.
const TIME_EPS: f64 = 1e-9;

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Drops takeoff/landing windows, tracker dropouts and gross z outliers.
///
/// Records must be time ordered. The time window is measured from the first
/// and last record; the outlier test compares each `z` against the median of
/// the windowed data.
pub fn trim_episode(records: &[TelemetryRecord], cfg: &TrimConfig) -> Result<Vec<TelemetryRecord>, EstimationError> {
    let (Some(first), Some(last)) = (records.first(), records.last()) else {
        return Err(EstimationError::EmptyAfterTrim);
    };
    let (start, end) = (first.t + cfg.head, last.t - cfg.tail);
    let windowed: Vec<TelemetryRecord> = records
        .iter()
        .filter(|r| r.valid && r.t >= start - TIME_EPS && r.t <= end + TIME_EPS)
        .copied()
        .collect();
    if windowed.is_empty() {
        return Err(EstimationError::EmptyAfterTrim);
    }

    let mut zs: Vec<f64> = windowed.iter().map(|r| r.z).collect();
    let center = median(&mut zs);
    let mut deviations: Vec<f64> = windowed.iter().map(|r| (r.z - center).abs()).collect();
    let mad = median(&mut deviations).max(cfg.mad_floor);
    let kept: Vec<TelemetryRecord> = windowed
        .into_iter()
        .filter(|r| (r.z - center).abs() <= cfg.mad_k * mad)
        .collect();
    if kept.is_empty() {
        Err(EstimationError::EmptyAfterTrim)
    } else {
        Ok(kept)
    }
}
