//! Pointwise variance and confidence limits from the iid decomposition.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::inference::IidDecomposition;
use crate::step::StepFunction;

pub const DEFAULT_LEVEL: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceBands {
    pub level: f64,
    pub times: Vec<f64>,
    /// `Σ̂(t) = n⁻¹ Σ_i ε̂_i(t)²`.
    pub variance: Vec<f64>,
    pub se: Vec<f64>,
    pub ci_lo: Vec<f64>,
    pub ci_hi: Vec<f64>,
}

/// Two-sided standard normal quantile for a confidence level.
pub fn normal_quantile(level: f64) -> f64 {
    Normal::standard().inverse_cdf(0.5 + level / 2.0)
}

pub fn variance_bands(dec: &IidDecomposition, estimate: &StepFunction, level: f64) -> VarianceBands {
    let n = dec.n_subjects() as f64;
    let z = normal_quantile(level);
    let mut bands = VarianceBands {
        level,
        times: dec.grid().to_vec(),
        variance: Vec::with_capacity(dec.len()),
        se: Vec::with_capacity(dec.len()),
        ci_lo: Vec::with_capacity(dec.len()),
        ci_hi: Vec::with_capacity(dec.len()),
    };
    for (k, &t) in dec.grid().iter().enumerate() {
        let sigma = dec.eps().column(k).norm_squared() / n;
        let se = (sigma / n).sqrt();
        let b = estimate.eval(t);
        bands.variance.push(sigma);
        bands.se.push(se);
        bands.ci_lo.push(b - z * se);
        bands.ci_hi.push(b + z * se);
    }
    bands
}
