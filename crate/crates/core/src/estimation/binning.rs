use super::EstimationError;
use crate::telemetry::TelemetryRecord;

/// Regular x-y grid of half-open square cells anchored at an origin.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    pub origin_x: f64,
    pub origin_y: f64,
    pub cell: f64,
    pub nx: usize,
    pub ny: usize,
}

impl Grid {
    pub fn new(origin_x: f64, origin_y: f64, cell: f64, nx: usize, ny: usize) -> Result<Self, EstimationError> {
        if !(cell > 0.0) || !cell.is_finite() {
            return Err(EstimationError::InvalidGrid("cell size must be > 0".into()));
        }
        if !origin_x.is_finite() || !origin_y.is_finite() {
            return Err(EstimationError::InvalidGrid("origin must be finite".into()));
        }
        if nx == 0 || ny == 0 {
            return Err(EstimationError::InvalidGrid("dimensions must be >= 1".into()));
        }
        Ok(Self {
            origin_x,
            origin_y,
            cell,
            nx,
            ny,
        })
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    // Largest k with origin + k*cell <= v, using the same floating-point
    // boundaries as `cell_bounds`. Points on a boundary go to the higher cell.
    fn axis_index(origin: f64, cell: f64, n: usize, v: f64) -> Option<usize> {
        if !v.is_finite() {
            return None;
        }
        let mut k = ((v - origin) / cell).floor();
        if origin + (k + 1.0) * cell <= v {
            k += 1.0;
        }
        if origin + k * cell > v {
            k -= 1.0;
        }
        (k >= 0.0 && k < n as f64).then_some(k as usize)
    }

    pub fn cell_index(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let ix = Self::axis_index(self.origin_x, self.cell, self.nx, x)?;
        let iy = Self::axis_index(self.origin_y, self.cell, self.ny, y)?;
        Some((ix, iy))
    }

    pub fn flat_index(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    pub fn unflatten(&self, i: usize) -> (usize, usize) {
        (i % self.nx, i / self.nx)
    }

    pub fn cell_center(&self, ix: usize, iy: usize) -> (f64, f64) {
        (
            self.origin_x + (ix as f64 + 0.5) * self.cell,
            self.origin_y + (iy as f64 + 0.5) * self.cell,
        )
    }

    /// `((x_lo, x_hi), (y_lo, y_hi))`, half-open.
    pub fn cell_bounds(&self, ix: usize, iy: usize) -> ((f64, f64), (f64, f64)) {
        let x = |k: usize| self.origin_x + k as f64 * self.cell;
        let y = |k: usize| self.origin_y + k as f64 * self.cell;
        ((x(ix), x(ix + 1)), (y(iy), y(iy + 1)))
    }
}

/// Altitude statistics of one grid cell.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CellStats {
    pub count: usize,
    /// `None` when the cell is empty.
    pub mean_z: Option<f64>,
    /// Unbiased variance; `None` below two samples.
    pub var_z: Option<f64>,
    pub samples: Vec<f64>,
}

impl CellStats {
    pub fn from_samples(samples: Vec<f64>) -> Self {
        let count = samples.len();
        let mean_z = (count > 0).then(|| samples.iter().sum::<f64>() / count as f64);
        let var_z = mean_z.filter(|_| count > 1).map(|m| {
            samples.iter().map(|z| (z - m).powi(2)).sum::<f64>() / (count - 1) as f64
        });
        Self {
            count,
            mean_z,
            var_z,
            samples,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BinnedStats {
    pub grid: Grid,
    /// Row-major by `iy`, `grid.len()` entries.
    pub cells: Vec<CellStats>,
    /// Records that fell outside the grid.
    pub overflow: usize,
}

impl BinnedStats {
    pub fn cell(&self, ix: usize, iy: usize) -> &CellStats {
        &self.cells[self.grid.flat_index(ix, iy)]
    }

    pub fn binned_count(&self) -> usize {
        self.cells.iter().map(|c| c.count).sum()
    }

    /// Non-empty cells as `(ix, iy, stats)`.
    pub fn occupied(&self) -> impl Iterator<Item = (usize, usize, &CellStats)> {
        self.cells.iter().enumerate().filter(|(_, c)| c.count > 0).map(|(i, c)| {
            let (ix, iy) = self.grid.unflatten(i);
            (ix, iy, c)
        })
    }

    /// Pooled mean of every binned sample.
    pub fn global_mean(&self) -> Option<f64> {
        let n = self.binned_count();
        (n > 0).then(|| self.cells.iter().flat_map(|c| c.samples.iter()).sum::<f64>() / n as f64)
    }

    /// All binned z samples in cell order.
    pub fn all_samples(&self) -> Vec<f64> {
        self.cells.iter().flat_map(|c| c.samples.iter().copied()).collect()
    }
}

/// Assigns each valid record to the cell containing its tracked `(x, y)` and
/// computes per-cell mean and unbiased variance of `z`.
pub fn bin_records<'a, I>(records: I, grid: &Grid) -> BinnedStats
where
    I: IntoIterator<Item = &'a TelemetryRecord>,
{
    let mut buckets: Vec<Vec<f64>> = vec![Vec::new(); grid.len()];
    let mut overflow = 0;
    for r in records.into_iter().filter(|r| r.valid) {
        match grid.cell_index(r.x, r.y) {
            Some((ix, iy)) => buckets[grid.flat_index(ix, iy)].push(r.z),
            None => overflow += 1,
        }
    }
    BinnedStats {
        grid: *grid,
        cells: buckets.into_iter().map(CellStats::from_samples).collect(),
        overflow,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(x: f64, y: f64, z: f64) -> TelemetryRecord {
        TelemetryRecord {
            t: 0.0,
            x,
            y,
            z,
            valid: true,
            setpoint_z: 0.5,
            episode: 0,
        }
    }

    fn grid() -> Grid {
        Grid::new(0.0, 0.0, 0.1, 10, 10).unwrap()
    }

    #[test]
    fn single_record() {
        let stats = bin_records(&[rec(0.05, 0.05, 0.5)], &grid());
        let c = stats.cell(0, 0);
        assert_eq!(c.count, 1);
        assert_eq!(c.mean_z, Some(0.5));
        assert_eq!(c.var_z, None);
    }

    #[test]
    fn two_point_statistics() {
        let stats = bin_records(&[rec(0.05, 0.05, 0.4), rec(0.06, 0.02, 0.6)], &grid());
        let c = stats.cell(0, 0);
        assert!((c.mean_z.unwrap() - 0.5).abs() < 1e-15);
        assert!((c.var_z.unwrap() - 0.02).abs() < 1e-15);
    }

    #[test]
    fn boundary_goes_to_higher_cell() {
        let g = grid();
        assert_eq!(g.cell_index(0.1, 0.05), Some((1, 0)));
        assert_eq!(g.cell_index(0.0, 0.0), Some((0, 0)));
        // Every floating-point cell boundary is owned by the cell above it.
        for k in 1..10 {
            let ((lo, _), _) = g.cell_bounds(k, 0);
            assert_eq!(g.cell_index(lo, 0.05), Some((k, 0)), "boundary {k}");
        }
        assert_eq!(g.cell_index(1.0, 0.05), None);
        assert_eq!(g.cell_index(-1e-12, 0.05), None);
    }

    #[test]
    fn overflow_and_invalid_records() {
        let mut invalid = rec(0.05, 0.05, 9.0);
        invalid.valid = false;
        let stats = bin_records(&[rec(2.0, 0.05, 0.5), rec(0.05, 0.05, 0.5), invalid], &grid());
        assert_eq!(stats.overflow, 1);
        assert_eq!(stats.binned_count(), 1);
    }

    #[test]
    fn grid_validation() {
        assert!(Grid::new(0.0, 0.0, 0.0, 1, 1).is_err());
        assert!(Grid::new(0.0, 0.0, 0.1, 0, 1).is_err());
    }

    proptest! {
        #[test]
        fn binning_partitions_records(
            pts in proptest::collection::vec((-0.5f64..1.5, -0.5f64..1.5, 0.0f64..1.0), 0..200),
        ) {
            let records: Vec<_> = pts.iter().map(|&(x, y, z)| rec(x, y, z)).collect();
            let stats = bin_records(&records, &grid());
            prop_assert_eq!(stats.binned_count() + stats.overflow, records.len());
            for r in &records {
                if let Some((ix, iy)) = stats.grid.cell_index(r.x, r.y) {
                    let ((xl, xh), (yl, yh)) = stats.grid.cell_bounds(ix, iy);
                    prop_assert!(xl <= r.x && r.x < xh && yl <= r.y && r.y < yh);
                }
            }
            for c in &stats.cells {
                if let Some(v) = c.var_z { prop_assert!(v >= 0.0); }
            }
        }
    }
}
