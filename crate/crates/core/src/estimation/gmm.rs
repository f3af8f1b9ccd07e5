//! One-dimensional Gaussian mixtures fitted by expectation-maximization.
//!
//! The density is `p(x) = sum_i w_i N(x; mu_i, sigma_i^2)`. Responsibilities
//! and the log-likelihood are computed in log space with a log-sum-exp over
//! components so far tails do not underflow.

use std::f64::consts::PI;

use rand::Rng;

use super::EstimationError;
use crate::rng::episode_stream;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GmmComponent {
    pub weight: f64,
    pub mean: f64,
    pub sigma: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GmmModel {
    pub components: Vec<GmmComponent>,
}

impl GmmModel {
    pub fn new(components: Vec<GmmComponent>) -> Result<Self, EstimationError> {
        if components.is_empty() {
            return Err(EstimationError::InvalidInput("a mixture needs at least one component".into()));
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if components.iter().any(|c| !(c.weight >= 0.0) || !(c.sigma > 0.0) || !c.mean.is_finite()) {
            return Err(EstimationError::InvalidInput(
                "weights must be >= 0, sigmas > 0 and means finite".into(),
            ));
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(EstimationError::InvalidInput(format!("weights sum to {total}, not 1")));
        }
        Ok(Self { components })
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }
}

fn log_normal(x: f64, mean: f64, sigma: f64) -> f64 {
    let z = (x - mean) / sigma;
    -0.5 * z * z - sigma.ln() - 0.5 * (2.0 * PI).ln()
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

pub fn gmm_pdf(model: &GmmModel, x: f64) -> f64 {
    model
        .components
        .iter()
        .map(|c| c.weight * log_normal(x, c.mean, c.sigma).exp())
        .sum()
}

pub fn gmm_loglik(model: &GmmModel, samples: &[f64]) -> f64 {
    let mut terms = vec![0.0; model.len()];
    samples
        .iter()
        .map(|&x| {
            for (t, c) in terms.iter_mut().zip(&model.components) {
                *t = c.weight.ln() + log_normal(x, c.mean, c.sigma);
            }
            log_sum_exp(&terms)
        })
        .sum()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GmmFitConfig {
    /// Stop once one iteration improves the log-likelihood by less than this.
    pub tol: f64,
    pub max_iter: usize,
    pub sigma_floor: f64,
    pub weight_floor: f64,
    /// Picks the first seeding sample.
    pub seed: u64,
}

impl Default for GmmFitConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 500,
            sigma_floor: 1e-4,
            weight_floor: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitReport {
    /// Log-likelihood of the initialization followed by one entry per iteration.
    pub loglik_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

// Farthest-point seeding of the means, pooled variance, uniform weights.
fn initialize(samples: &[f64], m: usize, cfg: &GmmFitConfig) -> GmmModel {
    let mut rng = episode_stream(cfg.seed, 0);
    let mut means = vec![samples[rng.random_range(0..samples.len())]];
    while means.len() < m {
        let (_, far) = samples.iter().fold((f64::NEG_INFINITY, means[0]), |(best, arg), &x| {
            let d = means.iter().map(|mu| (x - mu).abs()).fold(f64::INFINITY, f64::min);
            if d > best {
                (d, x)
            } else {
                (best, arg)
            }
        });
        means.push(far);
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let sigma = var.sqrt().max(cfg.sigma_floor);
    GmmModel {
        components: means
            .into_iter()
            .map(|mean| GmmComponent {
                weight: 1.0 / m as f64,
                mean,
                sigma,
            })
            .collect(),
    }
}

// Responsibilities (row-major n x m) and the log-likelihood of `model`.
fn e_step(model: &GmmModel, samples: &[f64], resp: &mut [f64]) -> f64 {
    let m = model.len();
    let mut loglik = 0.0;
    for (row, &x) in resp.chunks_exact_mut(m).zip(samples) {
        for (r, c) in row.iter_mut().zip(&model.components) {
            *r = c.weight.ln() + log_normal(x, c.mean, c.sigma);
        }
        let lse = log_sum_exp(row);
        loglik += lse;
        for r in row.iter_mut() {
            *r = (*r - lse).exp();
        }
    }
    loglik
}

fn m_step(samples: &[f64], resp: &[f64], m: usize, cfg: &GmmFitConfig) -> Result<GmmModel, EstimationError> {
    let mut mass = vec![0.0; m];
    let mut first = vec![0.0; m];
    for (row, &x) in resp.chunks_exact(m).zip(samples) {
        for k in 0..m {
            mass[k] += row[k];
            first[k] += row[k] * x;
        }
    }
    let means: Vec<f64> = (0..m)
        .map(|k| if mass[k] > 0.0 { first[k] / mass[k] } else { 0.0 })
        .collect();
    let mut second = vec![0.0; m];
    for (row, &x) in resp.chunks_exact(m).zip(samples) {
        for k in 0..m {
            second[k] += row[k] * (x - means[k]).powi(2);
        }
    }
    let total: f64 = mass.iter().sum();
    let floor_var = cfg.sigma_floor * cfg.sigma_floor;
    let mut components = Vec::with_capacity(m);
    for k in 0..m {
        let weight = mass[k] / total;
        if !(weight >= cfg.weight_floor) {
            return Err(EstimationError::DegenerateFit { component: k, weight });
        }
        let var = (second[k] / mass[k]).max(floor_var);
        components.push(GmmComponent {
            weight,
            mean: means[k],
            sigma: var.sqrt(),
        });
    }
    Ok(GmmModel { components })
}

/// Fits an `m`-component mixture to `samples` by EM.
///
/// Variances are floored at `sigma_floor^2` after every M-step; a component
/// whose weight falls below `weight_floor` aborts the fit. Deterministic for a
/// fixed `cfg.seed`.
pub fn gmm_fit(samples: &[f64], m: usize, cfg: &GmmFitConfig) -> Result<(GmmModel, FitReport), EstimationError> {
    if m == 0 {
        return Err(EstimationError::InvalidInput("component count must be >= 1".into()));
    }
    if samples.len() < m {
        return Err(EstimationError::TooFewSamples {
            needed: m,
            got: samples.len(),
        });
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(EstimationError::InvalidInput("samples must be finite".into()));
    }

    let mut model = initialize(samples, m, cfg);
    let mut resp = vec![0.0; samples.len() * m];
    let mut loglik = e_step(&model, samples, &mut resp);
    let mut report = FitReport {
        loglik_trace: vec![loglik],
        iterations: 0,
        converged: false,
    };

    for iter in 1..=cfg.max_iter {
        let next = m_step(samples, &resp, m, cfg)?;
        let next_loglik = e_step(&next, samples, &mut resp);
        report.loglik_trace.push(next_loglik);
        report.iterations = iter;
        model = next;
        if next_loglik - loglik < cfg.tol {
            report.converged = true;
            break;
        }
        loglik = next_loglik;
    }
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::episode_stream;
    use rand_distr::{Distribution, Normal};

    fn single(mean: f64, sigma: f64) -> GmmModel {
        GmmModel::new(vec![GmmComponent {
            weight: 1.0,
            mean,
            sigma,
        }])
        .unwrap()
    }

    #[test]
    fn pdf_examples() {
        assert!((gmm_pdf(&single(0.0, 1.0), 0.0) - 0.398942).abs() < 1e-6);
        assert!((gmm_pdf(&single(3.0, 2.0), 3.0) - 0.199471).abs() < 1e-6);
        let two = GmmModel::new(vec![
            GmmComponent { weight: 0.5, mean: -1.0, sigma: 1.0 },
            GmmComponent { weight: 0.5, mean: 1.0, sigma: 1.0 },
        ])
        .unwrap();
        for x in [0.1, 0.7, 2.5, 10.0] {
            assert!((gmm_pdf(&two, x) - gmm_pdf(&two, -x)).abs() < 1e-15);
        }
    }

    #[test]
    fn loglik_examples() {
        let m = single(0.0, 1.0);
        assert!((gmm_loglik(&m, &[0.0]) + 0.918939).abs() < 1e-6);
        let one = gmm_loglik(&m, &[0.3, 1.2]);
        let dup = gmm_loglik(&m, &[0.3, 1.2, 1.2]);
        assert!((dup - one - gmm_loglik(&m, &[1.2])).abs() < 1e-12);
        // far tail stays finite
        assert!(gmm_loglik(&m, &[60.0]).is_finite());
    }

    #[test]
    fn single_component_is_closed_form_mle() {
        let samples: Vec<f64> = {
            let mut rng = episode_stream(5, 0);
            let n = Normal::new(0.5, 0.03).unwrap();
            (0..300).map(|_| n.sample(&mut rng)).collect()
        };
        let (model, report) = gmm_fit(&samples, 1, &GmmFitConfig::default()).unwrap();
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        let c = model.components[0];
        assert_eq!(c.weight, 1.0);
        assert!((c.mean - mean).abs() < 1e-12);
        assert!((c.sigma * c.sigma - var).abs() < 1e-12);
        assert!(report.converged);
        assert!(report.iterations <= 2);
    }

    #[test]
    fn recovers_two_clusters() {
        let mut rng = episode_stream(9, 0);
        let a = Normal::new(0.0, 0.1).unwrap();
        let b = Normal::new(10.0, 0.1).unwrap();
        let samples: Vec<f64> = (0..1000)
            .map(|i| if i % 2 == 0 { a.sample(&mut rng) } else { b.sample(&mut rng) })
            .collect();
        let (model, _) = gmm_fit(&samples, 2, &GmmFitConfig::default()).unwrap();
        let mut comps = model.components.clone();
        comps.sort_by(|p, q| p.mean.total_cmp(&q.mean));
        assert!(comps[0].mean.abs() < 0.05);
        assert!((comps[1].mean - 10.0).abs() < 0.05);
        assert!((comps[0].weight - 0.5).abs() < 0.05);
        assert!((comps[1].weight - 0.5).abs() < 0.05);
    }

    #[test]
    fn constant_samples_hit_the_variance_floor() {
        let cfg = GmmFitConfig::default();
        let (model, report) = gmm_fit(&[0.5; 40], 2, &cfg).unwrap();
        for c in &model.components {
            assert_eq!(c.sigma, cfg.sigma_floor);
            assert_eq!(c.mean, 0.5);
        }
        assert!(report.converged);
    }

    #[test]
    fn collapsed_weight_is_an_error() {
        // Two far clusters of one point and a huge one: with a high floor the
        // tiny component is rejected.
        let mut samples = vec![0.0; 500];
        samples.push(100.0);
        let cfg = GmmFitConfig {
            weight_floor: 0.01,
            ..GmmFitConfig::default()
        };
        assert!(matches!(
            gmm_fit(&samples, 2, &cfg),
            Err(EstimationError::DegenerateFit { .. })
        ));
    }

    #[test]
    fn input_validation() {
        let cfg = GmmFitConfig::default();
        assert!(matches!(gmm_fit(&[1.0], 2, &cfg), Err(EstimationError::TooFewSamples { .. })));
        assert!(gmm_fit(&[1.0, 2.0], 0, &cfg).is_err());
        assert!(gmm_fit(&[1.0, f64::NAN], 1, &cfg).is_err());
        assert!(GmmModel::new(vec![GmmComponent { weight: 0.4, mean: 0.0, sigma: 1.0 }]).is_err());
    }

    #[test]
    fn fixed_seed_is_bit_reproducible() {
        let mut rng = episode_stream(21, 0);
        let n = Normal::new(0.0, 1.0).unwrap();
        let samples: Vec<f64> = (0..400).map(|_| n.sample(&mut rng)).collect();
        let cfg = GmmFitConfig { seed: 77, ..GmmFitConfig::default() };
        let a = gmm_fit(&samples, 3, &cfg).unwrap();
        let b = gmm_fit(&samples, 3, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            a.0.components.iter().map(|c| c.mean.to_bits()).collect::<Vec<_>>(),
            b.0.components.iter().map(|c| c.mean.to_bits()).collect::<Vec<_>>()
        );
    }
}
