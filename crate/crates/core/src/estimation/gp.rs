//! Gaussian-process regression over `(x, y)` with a squared-exponential kernel
//! and fixed hyperparameters.

use super::EstimationError;

const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-6;
// A Cholesky pivot at or below this fraction of the largest diagonal entry
// counts as a failure.
const PIVOT_RTOL: f64 = 1e-14;
const NEGATIVE_VARIANCE_WARN: f64 = -1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelParams {
    /// m^2
    pub signal_var: f64,
    /// m
    pub length_scale: f64,
    /// m^2
    pub noise_var: f64,
}

impl Default for KernelParams {
    fn default() -> Self {
        Self {
            signal_var: 0.05,
            length_scale: 0.3,
            noise_var: 1e-4,
        }
    }
}

impl KernelParams {
    pub fn validate(&self) -> Result<(), EstimationError> {
        if !(self.signal_var > 0.0) || !self.signal_var.is_finite() {
            return Err(EstimationError::InvalidInput("signal_var must be > 0".into()));
        }
        if !(self.length_scale > 0.0) || !self.length_scale.is_finite() {
            return Err(EstimationError::InvalidInput("length_scale must be > 0".into()));
        }
        if !(self.noise_var >= 0.0) || !self.noise_var.is_finite() {
            return Err(EstimationError::InvalidInput("noise_var must be >= 0".into()));
        }
        Ok(())
    }
}

pub fn se_kernel(a: (f64, f64), b: (f64, f64), params: &KernelParams) -> f64 {
    let d2 = (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2);
    params.signal_var * (-d2 / (2.0 * params.length_scale * params.length_scale)).exp()
}

#[derive(Clone, Debug, PartialEq)]
pub struct GpModel {
    pub inputs: Vec<(f64, f64)>,
    pub targets: Vec<f64>,
    pub params: KernelParams,
    /// Constant prior mean; predictions far from the data return to it.
    pub prior_mean: f64,
    /// Diagonal jitter that made the factorization succeed (0 if none was needed).
    pub jitter: f64,
    // Lower Cholesky factor of K + (noise_var + jitter) I, row-major n x n.
    chol: Vec<f64>,
    // (K + (noise_var + jitter) I)^-1 (targets - prior_mean)
    alpha: Vec<f64>,
}

impl GpModel {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

// In-place Cholesky of a symmetric row-major matrix; the lower triangle holds L.
fn cholesky(a: &mut [f64], n: usize) -> bool {
    let scale = (0..n).map(|i| a[i * n + i]).fold(0.0, f64::max);
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > PIVOT_RTOL * scale) {
            return false;
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
        for i in 0..j {
            a[i * n + j] = 0.0;
        }
    }
    true
}

// Solves L y = b.
fn forward(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[i * n + k] * y[k]).sum();
        y[i] = (b[i] - s) / l[i * n + i];
    }
    y
}

// Solves L^T x = y.
fn backward(l: &[f64], n: usize, y: &[f64]) -> Vec<f64> {
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| l[k * n + i] * x[k]).sum();
        x[i] = (y[i] - s) / l[i * n + i];
    }
    x
}

pub fn gp_fit(points: &[(f64, f64, f64)], params: &KernelParams) -> Result<GpModel, EstimationError> {
    gp_fit_with_prior_mean(points, params, 0.0)
}

/// Factorizes `K + noise_var I`, retrying with diagonal jitter
/// `1e-10, 1e-9, ..., 1e-6` before giving up.
pub fn gp_fit_with_prior_mean(
    points: &[(f64, f64, f64)],
    params: &KernelParams,
    prior_mean: f64,
) -> Result<GpModel, EstimationError> {
    params.validate()?;
    if points.is_empty() {
        return Err(EstimationError::EmptyData("gp training points"));
    }
    if !prior_mean.is_finite() || points.iter().any(|p| !(p.0.is_finite() && p.1.is_finite() && p.2.is_finite())) {
        return Err(EstimationError::InvalidInput("gp inputs must be finite".into()));
    }
    let n = points.len();
    let inputs: Vec<(f64, f64)> = points.iter().map(|p| (p.0, p.1)).collect();
    let targets: Vec<f64> = points.iter().map(|p| p.2).collect();
    let mut gram = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            gram[i * n + j] = se_kernel(inputs[i], inputs[j], params);
        }
    }

    let mut jitter = 0.0;
    let chol = loop {
        let mut a = gram.clone();
        for i in 0..n {
            a[i * n + i] += params.noise_var + jitter;
        }
        if cholesky(&mut a, n) {
            break a;
        }
        jitter = if jitter == 0.0 { JITTER_START } else { jitter * 10.0 };
        if jitter > JITTER_MAX * (1.0 + 1e-9) {
            return Err(EstimationError::NotPositiveDefinite { max_jitter: JITTER_MAX });
        }
    };
    if jitter > 0.0 {
        log::debug!("gp factorization needed jitter {jitter:e}");
    }

    let centered: Vec<f64> = targets.iter().map(|z| z - prior_mean).collect();
    let alpha = backward(&chol, n, &forward(&chol, n, &centered));
    Ok(GpModel {
        inputs,
        targets,
        params: *params,
        prior_mean,
        jitter,
        chol,
        alpha,
    })
}

/// Posterior mean and latent variance at `(x, y)`. The variance is clamped at
/// zero; values below `-1e-9` are logged as warnings.
pub fn gp_predict(model: &GpModel, x: f64, y: f64) -> (f64, f64) {
    let (mean, var) = gp_predict_unclamped(model, x, y);
    if var < NEGATIVE_VARIANCE_WARN {
        log::warn!("gp posterior variance {var:e} at ({x}, {y}) clamped to 0");
    }
    (mean, var.max(0.0))
}

/// [`gp_predict`] without the variance clamp, for diagnostics.
pub fn gp_predict_unclamped(model: &GpModel, x: f64, y: f64) -> (f64, f64) {
    let n = model.len();
    let k_star: Vec<f64> = model.inputs.iter().map(|&p| se_kernel(p, (x, y), &model.params)).collect();
    let mean = model.prior_mean + k_star.iter().zip(&model.alpha).map(|(k, a)| k * a).sum::<f64>();
    let v = forward(&model.chol, n, &k_star);
    (mean, model.params.signal_var - v.iter().map(|t| t * t).sum::<f64>())
}
