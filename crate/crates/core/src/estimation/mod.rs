//! Stochastic modeling of the externally observed altitude: trimming, x-y
//! binning, 1-D Gaussian mixtures, polynomial and Gaussian-process surfaces,
//! and the flat-baseline noise map.

mod binning;
mod gmm;
mod gp;
mod noise_map;
mod poly;
mod trim;

pub use binning::{bin_records, BinnedStats, CellStats, Grid};
pub use gmm::{gmm_fit, gmm_loglik, gmm_pdf, FitReport, GmmComponent, GmmFitConfig, GmmModel};
pub use gp::{gp_fit, gp_fit_with_prior_mean, gp_predict, gp_predict_unclamped, se_kernel, GpModel, KernelParams};
pub use noise_map::{build_noise_map, FlatReference, NoiseMap, NoiseMapConfig, Provenance, Surface};
pub use poly::{fit_polynomial, monomial_count, poly_eval, polyfit_surface, PolySurface};
pub use trim::{trim_episode, TrimConfig};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimationError {
    #[error("trimming removed every record")]
    EmptyAfterTrim,
    #[error("no data: {0}")]
    EmptyData(&'static str),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid geometry mismatch")]
    GridMismatch,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("degenerate fit: component {component} weight {weight:e} below floor")]
    DegenerateFit { component: usize, weight: f64 },
    #[error("need at least {needed} non-empty cells for this degree, got {got}")]
    InsufficientCells { needed: usize, got: usize },
    #[error("design matrix is rank deficient for degree {degree}")]
    RankDeficient { degree: usize },
    #[error("kernel matrix is not positive definite even with jitter {max_jitter:e}")]
    NotPositiveDefinite { max_jitter: f64 },
}
