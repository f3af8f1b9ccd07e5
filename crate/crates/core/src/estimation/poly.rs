//! Bivariate polynomial surfaces `z = sum c_ij x^i y^j`, `i + j <= degree`.
//!
//! Coefficients are stored in graded order: `1, x, y, x^2, xy, y^2, x^3, ...`,
//! so monomial `x^i y^j` lives at `d(d+1)/2 + j` with `d = i + j`.

use nalgebra::{DMatrix, DVector};

use super::{BinnedStats, EstimationError};

// Singular values below this fraction of the largest count as zero.
const RANK_RTOL: f64 = 1e-10;

pub fn monomial_count(degree: usize) -> usize {
    (degree + 1) * (degree + 2) / 2
}

fn coefficient_index(i: usize, j: usize) -> usize {
    let d = i + j;
    d * (d + 1) / 2 + j
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolySurface {
    pub degree: usize,
    pub coefficients: Vec<f64>,
}

impl PolySurface {
    pub fn new(degree: usize, coefficients: Vec<f64>) -> Result<Self, EstimationError> {
        if coefficients.len() != monomial_count(degree) {
            return Err(EstimationError::InvalidInput(format!(
                "degree {degree} needs {} coefficients, got {}",
                monomial_count(degree),
                coefficients.len()
            )));
        }
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(EstimationError::InvalidInput("coefficients must be finite".into()));
        }
        Ok(Self { degree, coefficients })
    }

    pub fn zero(degree: usize) -> Self {
        Self {
            degree,
            coefficients: vec![0.0; monomial_count(degree)],
        }
    }

    /// Coefficient of `x^i y^j`.
    pub fn coefficient(&self, i: usize, j: usize) -> f64 {
        if i + j > self.degree {
            0.0
        } else {
            self.coefficients[coefficient_index(i, j)]
        }
    }
}

fn monomials(x: f64, y: f64, degree: usize) -> impl Iterator<Item = f64> {
    (0..=degree).flat_map(move |d| (0..=d).map(move |j| x.powi((d - j) as i32) * y.powi(j as i32)))
}

/// Nested Horner evaluation: outer in `x`, inner in `y`.
pub fn poly_eval(surface: &PolySurface, x: f64, y: f64) -> f64 {
    let n = surface.degree;
    let mut acc = 0.0;
    for i in (0..=n).rev() {
        let mut inner = 0.0;
        for j in (0..=n - i).rev() {
            inner = inner * y + surface.coefficients[coefficient_index(i, j)];
        }
        acc = acc * x + inner;
    }
    acc
}

/// Weighted least squares through `(x, y, z)` points, solved by SVD of the
/// row-scaled design matrix.
pub fn fit_polynomial(points: &[(f64, f64, f64)], weights: &[f64], degree: usize) -> Result<PolySurface, EstimationError> {
    let m = monomial_count(degree);
    if points.len() != weights.len() {
        return Err(EstimationError::InvalidInput("one weight per point".into()));
    }
    if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
        return Err(EstimationError::InvalidInput("weights must be positive and finite".into()));
    }
    if points.len() < m {
        return Err(EstimationError::InsufficientCells {
            needed: m,
            got: points.len(),
        });
    }
    let rows = points.len();
    let mut a = DMatrix::<f64>::zeros(rows, m);
    let mut b = DVector::<f64>::zeros(rows);
    for (r, (&(x, y, z), &w)) in points.iter().zip(weights).enumerate() {
        let s = w.sqrt();
        for (c, v) in monomials(x, y, degree).enumerate() {
            a[(r, c)] = s * v;
        }
        b[r] = s * z;
    }

    let svd = a.svd(true, true);
    let s_max = svd.singular_values.max();
    let s_min = svd.singular_values.min();
    if !(s_max > 0.0) || s_min <= RANK_RTOL * s_max {
        return Err(EstimationError::RankDeficient { degree });
    }
    let solution = svd
        .solve(&b, 0.0)
        .map_err(|e| EstimationError::InvalidInput(e.to_string()))?;
    PolySurface::new(degree, solution.iter().copied().collect())
}

/// Fits cell-center `(x, y)` to cell mean `z` over the non-empty cells,
/// weighting each cell by its record count.
pub fn polyfit_surface(bins: &BinnedStats, degree: usize) -> Result<PolySurface, EstimationError> {
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for (ix, iy, cell) in bins.occupied() {
        let (x, y) = bins.grid.cell_center(ix, iy);
        points.push((x, y, cell.mean_z.expect("occupied cell has a mean")));
        weights.push(cell.count as f64);
    }
    fit_polynomial(&points, &weights, degree)
}
