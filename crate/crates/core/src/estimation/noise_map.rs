use super::{gp_predict, poly_eval, BinnedStats, EstimationError, GpModel, Grid, PolySurface};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Provenance {
    /// Disturbed mean taken from the cell's own data.
    Measured,
    /// Too few disturbed records; disturbed mean read off the fallback surface.
    SurfaceFallback,
    /// No disturbed records; noise is 0.
    Outside,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Measured => "measured",
            Provenance::SurfaceFallback => "surface-fallback",
            Provenance::Outside => "outside",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "measured" => Some(Provenance::Measured),
            "surface-fallback" => Some(Provenance::SurfaceFallback),
            "outside" => Some(Provenance::Outside),
            _ => None,
        }
    }
}

/// Expected sonar-induced altitude deviation per grid cell.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseMap {
    grid: Grid,
    noise: Vec<f64>,
    provenance: Vec<Provenance>,
}

impl NoiseMap {
    /// All cells `Outside` with zero noise: correcting with it changes nothing.
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            noise: vec![0.0; grid.len()],
            provenance: vec![Provenance::Outside; grid.len()],
        }
    }

    /// Row-major (by `iy`) cell values.
    pub fn from_parts(grid: Grid, noise: Vec<f64>, provenance: Vec<Provenance>) -> Result<Self, EstimationError> {
        if noise.len() != grid.len() || provenance.len() != grid.len() {
            return Err(EstimationError::InvalidInput(format!(
                "expected {} cells, got {} values and {} tags",
                grid.len(),
                noise.len(),
                provenance.len()
            )));
        }
        if noise.iter().any(|v| !v.is_finite()) {
            return Err(EstimationError::InvalidInput("noise values must be finite".into()));
        }
        Ok(Self {
            grid,
            noise,
            provenance,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.noise
    }

    pub fn provenance(&self) -> &[Provenance] {
        &self.provenance
    }

    pub fn cell(&self, ix: usize, iy: usize) -> (f64, Provenance) {
        let i = self.grid.flat_index(ix, iy);
        (self.noise[i], self.provenance[i])
    }

    /// Noise of the cell containing `(x, y)`; 0 off the grid.
    pub fn noise_at(&self, x: f64, y: f64) -> f64 {
        self.grid
            .cell_index(x, y)
            .map_or(0.0, |(ix, iy)| self.noise[self.grid.flat_index(ix, iy)])
    }

    pub fn count(&self, tag: Provenance) -> usize {
        self.provenance.iter().filter(|p| **p == tag).count()
    }
}

/// Smooth estimate of the disturbed mean altitude for sparsely sampled cells.
#[derive(Clone, Debug, PartialEq)]
pub enum Surface {
    Poly(PolySurface),
    Gp(GpModel),
}

impl Surface {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            Surface::Poly(p) => poly_eval(p, x, y),
            Surface::Gp(g) => gp_predict(g, x, y).0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FlatReference {
    /// Flat mean of the same cell, or the global flat mean where that cell is empty.
    PerCell,
    Global,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseMapConfig {
    pub min_count: usize,
    pub flat_reference: FlatReference,
}

impl Default for NoiseMapConfig {
    fn default() -> Self {
        Self {
            min_count: 5,
            flat_reference: FlatReference::PerCell,
        }
    }
}

/// `noise = disturbed mean - flat reference` per cell.
pub fn build_noise_map(
    flat: &BinnedStats,
    disturbed: &BinnedStats,
    fallback: &Surface,
    cfg: &NoiseMapConfig,
) -> Result<NoiseMap, EstimationError> {
    if flat.grid != disturbed.grid {
        return Err(EstimationError::GridMismatch);
    }
    let global = flat.global_mean().ok_or(EstimationError::EmptyData("flat characterization"))?;
    let grid = disturbed.grid;
    let mut noise = Vec::with_capacity(grid.len());
    let mut provenance = Vec::with_capacity(grid.len());
    for (i, (d, f)) in disturbed.cells.iter().zip(&flat.cells).enumerate() {
        let reference = match cfg.flat_reference {
            FlatReference::PerCell => f.mean_z.unwrap_or(global),
            FlatReference::Global => global,
        };
        let (value, tag) = match d.mean_z {
            None => (0.0, Provenance::Outside),
            Some(mean) if d.count >= cfg.min_count => (mean - reference, Provenance::Measured),
            Some(_) => {
                let (ix, iy) = grid.unflatten(i);
                let (x, y) = grid.cell_center(ix, iy);
                (fallback.eval(x, y) - reference, Provenance::SurfaceFallback)
            }
        };
        noise.push(value);
        provenance.push(tag);
    }
    NoiseMap::from_parts(grid, noise, provenance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::{bin_records, KernelParams};
    use crate::telemetry::TelemetryRecord;
    use proptest::prelude::*;

    fn grid() -> Grid {
        Grid::new(0.0, 0.0, 0.1, 4, 4).unwrap()
    }

    fn records(cells: &[(usize, usize, &[f64])]) -> Vec<TelemetryRecord> {
        let g = grid();
        let mut out = Vec::new();
        for &(ix, iy, zs) in cells {
            let (x, y) = g.cell_center(ix, iy);
            out.extend(zs.iter().map(|&z| TelemetryRecord {
                t: 0.0,
                x,
                y,
                z,
                valid: true,
                setpoint_z: 0.5,
                episode: 0,
            }));
        }
        out
    }

    fn constant_surface(v: f64) -> Surface {
        Surface::Poly(PolySurface::new(0, vec![v]).unwrap())
    }

    #[test]
    fn self_subtraction_is_zero() {
        let data = records(&[(0, 0, &[0.5; 6]), (1, 2, &[0.52, 0.48, 0.51, 0.5, 0.49])]);
        let b = bin_records(&data, &grid());
        let map = build_noise_map(&b, &b, &constant_surface(0.0), &NoiseMapConfig::default()).unwrap();
        assert_eq!(map.cell(0, 0), (0.0, Provenance::Measured));
        assert_eq!(map.cell(1, 2), (0.0, Provenance::Measured));
        assert_eq!(map.cell(3, 3), (0.0, Provenance::Outside));
        assert_eq!(map.count(Provenance::Measured), 2);
    }

    #[test]
    fn measured_difference() {
        let flat = bin_records(&records(&[(2, 2, &[0.5; 5])]), &grid());
        let dist = bin_records(&records(&[(2, 2, &[0.7; 5])]), &grid());
        let map = build_noise_map(&flat, &dist, &constant_surface(0.0), &NoiseMapConfig::default()).unwrap();
        let (v, tag) = map.cell(2, 2);
        assert!((v - 0.2).abs() < 1e-12);
        assert_eq!(tag, Provenance::Measured);
    }

    #[test]
    fn sparse_cell_uses_the_surface() {
        let flat = bin_records(&records(&[(0, 0, &[0.5; 8])]), &grid());
        let dist = bin_records(&records(&[(0, 0, &[0.5; 8]), (3, 1, &[0.9])]), &grid());
        let pts = [(0.05, 0.05, 0.5), (0.35, 0.15, 0.9), (0.15, 0.35, 0.6)];
        let gp = gp_fit_default(&pts);
        let surface = Surface::Gp(gp.clone());
        let map = build_noise_map(&flat, &dist, &surface, &NoiseMapConfig::default()).unwrap();
        let (v, tag) = map.cell(3, 1);
        assert_eq!(tag, Provenance::SurfaceFallback);
        let (cx, cy) = grid().cell_center(3, 1);
        assert_eq!(v, gp_predict(&gp, cx, cy).0 - 0.5);
    }

    fn gp_fit_default(pts: &[(f64, f64, f64)]) -> GpModel {
        crate::estimation::gp_fit_with_prior_mean(pts, &KernelParams::default(), 0.5).unwrap()
    }

    #[test]
    fn global_reference() {
        let flat = bin_records(&records(&[(0, 0, &[0.4; 5]), (1, 1, &[0.6; 5])]), &grid());
        let dist = bin_records(&records(&[(0, 0, &[0.7; 5])]), &grid());
        let cfg = NoiseMapConfig {
            flat_reference: FlatReference::Global,
            ..NoiseMapConfig::default()
        };
        let map = build_noise_map(&flat, &dist, &constant_surface(0.0), &cfg).unwrap();
        assert!((map.cell(0, 0).0 - 0.2).abs() < 1e-12);
        let per_cell = build_noise_map(&flat, &dist, &constant_surface(0.0), &NoiseMapConfig::default()).unwrap();
        assert!((per_cell.cell(0, 0).0 - 0.3).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        let flat = bin_records(&records(&[(0, 0, &[0.5; 5])]), &grid());
        let other = bin_records(&[], &Grid::new(0.0, 0.0, 0.2, 4, 4).unwrap());
        assert_eq!(
            build_noise_map(&flat, &other, &constant_surface(0.0), &NoiseMapConfig::default()),
            Err(EstimationError::GridMismatch)
        );
        let empty = bin_records(&[], &grid());
        assert_eq!(
            build_noise_map(&empty, &flat, &constant_surface(0.0), &NoiseMapConfig::default()),
            Err(EstimationError::EmptyData("flat characterization"))
        );
        assert!(NoiseMap::from_parts(grid(), vec![0.0; 3], vec![Provenance::Outside; 3]).is_err());
    }

    #[test]
    fn noise_at_off_grid_is_zero() {
        let mut noise = vec![0.0; 16];
        noise[5] = 0.3;
        let map = NoiseMap::from_parts(grid(), noise, vec![Provenance::Measured; 16]).unwrap();
        assert_eq!(map.noise_at(0.15, 0.15), 0.3);
        assert_eq!(map.noise_at(-0.01, 0.15), 0.0);
        assert_eq!(map.noise_at(0.4, 0.15), 0.0);
    }

    #[test]
    fn provenance_text_round_trip() {
        for p in [Provenance::Measured, Provenance::SurfaceFallback, Provenance::Outside] {
            assert_eq!(Provenance::parse(p.as_str()), Some(p));
        }
        assert_eq!(Provenance::parse("bogus"), None);
    }

    proptest! {
        #[test]
        fn swapping_inputs_flips_measured_cells(
            a in proptest::collection::vec(0.0f64..1.0, 5..12),
            b in proptest::collection::vec(0.0f64..1.0, 5..12),
        ) {
            let fa = bin_records(&records(&[(1, 1, &a), (2, 3, &b)]), &grid());
            let fb = bin_records(&records(&[(1, 1, &b), (2, 3, &a)]), &grid());
            let s = constant_surface(0.0);
            let cfg = NoiseMapConfig::default();
            let ab = build_noise_map(&fa, &fb, &s, &cfg).unwrap();
            let ba = build_noise_map(&fb, &fa, &s, &cfg).unwrap();
            for (i, tag) in ab.provenance().iter().enumerate() {
                if *tag == Provenance::Measured {
                    prop_assert_eq!(ab.values()[i], -ba.values()[i]);
                }
            }
        }
    }
}
