//! Offline characterization of one dataset (flat or disturbed): trim each
//! episode, pool, bin, and fit the density and surface models.

use crate::estimation::{
    bin_records, fit_polynomial, gmm_fit, gp_fit_with_prior_mean, trim_episode, BinnedStats, EstimationError,
    FitReport, GmmFitConfig, GmmModel, GpModel, Grid, KernelParams, PolySurface, TrimConfig,
};
use crate::telemetry::{EpisodeLog, TelemetryRecord};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CharacterizeConfig {
    pub trim: TrimConfig,
    pub grid: Grid,
    pub gmm: GmmFitConfig,
    pub components_x: usize,
    pub components_y: usize,
    pub components_z: usize,
    /// Components of the per-cell z fits; cells with fewer records than
    /// `cell_fit_min_count` are skipped.
    pub components_cell: usize,
    pub cell_fit_min_count: usize,
    pub poly_degree: usize,
    pub kernel: KernelParams,
}

impl Default for CharacterizeConfig {
    fn default() -> Self {
        Self {
            trim: TrimConfig::default(),
            grid: Grid {
                origin_x: 0.0,
                origin_y: 0.0,
                cell: 0.1,
                nx: 49,
                ny: 37,
            },
            gmm: GmmFitConfig::default(),
            components_x: 1,
            components_y: 1,
            components_z: 1,
            components_cell: 1,
            cell_fit_min_count: 20,
            poly_degree: 3,
            kernel: KernelParams::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AxisFit {
    pub model: GmmModel,
    pub report: FitReport,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellFit {
    pub ix: usize,
    pub iy: usize,
    pub model: GmmModel,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Characterization {
    pub episodes: usize,
    pub records_in: usize,
    pub records_kept: usize,
    pub bins: BinnedStats,
    pub x: AxisFit,
    pub y: AxisFit,
    pub z: AxisFit,
    pub cells: Vec<CellFit>,
    /// Weighted cell-mean surface; the error when the occupied cells cannot
    /// support the requested degree.
    pub poly: Result<PolySurface, EstimationError>,
    /// Trained on occupied cell centers and means, prior mean = pooled mean.
    pub gp: GpModel,
}

fn axis_fit(samples: &[f64], m: usize, cfg: &GmmFitConfig) -> Result<AxisFit, EstimationError> {
    let (model, report) = gmm_fit(samples, m, cfg)?;
    Ok(AxisFit { model, report })
}

/// Episodes that trim to nothing are skipped; the dataset fails only when
/// every episode does.
pub fn characterize(logs: &[EpisodeLog], cfg: &CharacterizeConfig) -> Result<Characterization, EstimationError> {
    let records_in = logs.iter().map(EpisodeLog::len).sum();
    let mut kept: Vec<TelemetryRecord> = Vec::new();
    for log in logs {
        match trim_episode(&log.records, &cfg.trim) {
            Ok(r) => kept.extend(r),
            Err(EstimationError::EmptyAfterTrim) => {}
            Err(e) => return Err(e),
        }
    }
    if kept.is_empty() {
        return Err(EstimationError::EmptyAfterTrim);
    }

    let bins = bin_records(&kept, &cfg.grid);
    if bins.binned_count() == 0 {
        return Err(EstimationError::EmptyData("no record falls inside the grid"));
    }
    let column = |f: fn(&TelemetryRecord) -> f64| kept.iter().map(f).collect::<Vec<f64>>();
    let x = axis_fit(&column(|r| r.x), cfg.components_x, &cfg.gmm)?;
    let y = axis_fit(&column(|r| r.y), cfg.components_y, &cfg.gmm)?;
    let z = axis_fit(&column(|r| r.z), cfg.components_z, &cfg.gmm)?;

    let mut cells = Vec::new();
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for (ix, iy, cell) in bins.occupied() {
        let (cx, cy) = bins.grid.cell_center(ix, iy);
        let mean = cell.mean_z.expect("occupied cell has a mean");
        points.push((cx, cy, mean));
        weights.push(cell.count as f64);
        if cell.count >= cfg.cell_fit_min_count.max(cfg.components_cell) {
            let (model, _) = gmm_fit(&cell.samples, cfg.components_cell, &cfg.gmm)?;
            cells.push(CellFit { ix, iy, model });
        }
    }
    let poly = fit_polynomial(&points, &weights, cfg.poly_degree);
    let prior = bins.global_mean().expect("binned data is non-empty");
    let gp = gp_fit_with_prior_mean(&points, &cfg.kernel, prior)?;

    Ok(Characterization {
        episodes: logs.len(),
        records_in,
        records_kept: kept.len(),
        bins,
        x,
        y,
        z,
        cells,
        poly,
        gp,
    })
}
