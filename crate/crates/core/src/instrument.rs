//! Instrument-centering model `E(G | L; θ)`.
//!
//! The fitted model supplies the centered instrument `G^c_i = G_i - μ(L_i; θ̂)`,
//! the Jacobian `∂μ(L_i; θ)/∂θ` and influence values `ε^θ_i` scaled so that
//! `θ̂ - θ ≈ n⁻¹ Σ_i ε^θ_i`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DatasetError, SurvivalDataset};

/// Newton iterations stop once the mean score is below this.
pub const LOGISTIC_TOLERANCE: f64 = 1e-10;
pub const LOGISTIC_MAX_ITER: usize = 100;

/// Relative size of a QR pivot below which a design is treated as rank deficient.
const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InstrumentError {
    #[error("design matrix is rank deficient")]
    RankDeficientDesign,
    #[error("logistic model requires a 0/1 response (row {row} has {value})")]
    LogisticNonBinaryInstrument { row: usize, value: f64 },
    #[error("logistic fit did not converge in {iterations} iterations (max |score|/n = {max_score:e}, tolerance {tolerance:e})")]
    LogisticNoConvergence { iterations: usize, max_score: f64, tolerance: f64 },
    #[error("{0:?} model needs at least one covariate")]
    NoCovariates(InstrumentModelKind),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

impl InstrumentError {
    pub fn name(&self) -> &'static str {
        match self {
            InstrumentError::RankDeficientDesign => "RankDeficientDesign",
            InstrumentError::LogisticNonBinaryInstrument { .. } => "LogisticNonBinaryInstrument",
            InstrumentError::LogisticNoConvergence { .. } => "LogisticNoConvergence",
            InstrumentError::NoCovariates(_) => "NoCovariates",
            InstrumentError::Dataset(e) => e.name(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum InstrumentModelKind {
    /// `μ(θ) = θ = E(G)`.
    #[default]
    #[serde(alias = "mean")]
    InterceptOnly,
    Linear,
    Logistic,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct InstrumentModelSpec {
    pub kind: InstrumentModelKind,
    /// Names of the covariates entering the model (empty for intercept-only).
    pub covariates: Vec<String>,
}

impl InstrumentModelSpec {
    pub fn intercept_only() -> Self {
        InstrumentModelSpec::default()
    }

    pub fn linear(covariates: &[&str]) -> Self {
        InstrumentModelSpec {
            kind: InstrumentModelKind::Linear,
            covariates: covariates.iter().map(|c| c.to_string()).collect(),
        }
    }

    pub fn logistic(covariates: &[&str]) -> Self {
        InstrumentModelSpec {
            kind: InstrumentModelKind::Logistic,
            covariates: covariates.iter().map(|c| c.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstrumentModelFit {
    kind: InstrumentModelKind,
    theta_hat: Vec<f64>,
    residuals: Vec<f64>,
    /// n × dim(θ)
    influence: DMatrix<f64>,
    /// n × dim(θ)
    mu_jacobian: DMatrix<f64>,
}

impl InstrumentModelFit {
    pub fn kind(&self) -> InstrumentModelKind {
        self.kind
    }

    pub fn theta_hat(&self) -> &[f64] {
        &self.theta_hat
    }

    pub fn dim(&self) -> usize {
        self.theta_hat.len()
    }

    pub fn residuals(&self) -> &[f64] {
        &self.residuals
    }

    /// `G^c_i`.
    pub fn center(&self, i: usize) -> f64 {
        self.residuals[i]
    }

    pub fn influence(&self) -> &DMatrix<f64> {
        &self.influence
    }

    pub fn mu_jacobian(&self) -> &DMatrix<f64> {
        &self.mu_jacobian
    }
}

/// Fitted regression with influence values and mean-function Jacobian.
#[derive(Debug, Clone)]
pub(crate) struct RegressionFit {
    pub theta: DVector<f64>,
    pub fitted: Vec<f64>,
    pub influence: DMatrix<f64>,
    pub jacobian: DMatrix<f64>,
}

pub fn fit_instrument_model(
    ds: &SurvivalDataset,
    spec: &InstrumentModelSpec,
) -> Result<InstrumentModelFit, InstrumentError> {
    let g: Vec<f64> = ds.subjects().iter().map(|s| s.instrument).collect();
    let n = g.len();

    if spec.kind == InstrumentModelKind::InterceptOnly {
        let theta = g.iter().sum::<f64>() / n as f64;
        let residuals: Vec<f64> = g.iter().map(|v| v - theta).collect();
        return Ok(InstrumentModelFit {
            kind: spec.kind,
            theta_hat: vec![theta],
            influence: DMatrix::from_column_slice(n, 1, &residuals),
            residuals,
            mu_jacobian: DMatrix::from_element(n, 1, 1.0),
        });
    }

    if spec.covariates.is_empty() {
        return Err(InstrumentError::NoCovariates(spec.kind));
    }
    let columns = spec
        .covariates
        .iter()
        .map(|c| ds.covariate_index(c))
        .collect::<Result<Vec<_>, _>>()?;
    let design = DMatrix::from_fn(n, columns.len() + 1, |i, j| {
        if j == 0 {
            1.0
        } else {
            ds.subject(i).covariates[columns[j - 1]]
        }
    });

    let fit = match spec.kind {
        InstrumentModelKind::Linear => least_squares(&design, &g)?,
        _ => logistic_ml(&design, &g)?,
    };
    Ok(InstrumentModelFit {
        kind: spec.kind,
        theta_hat: fit.theta.iter().copied().collect(),
        residuals: g.iter().zip(&fit.fitted).map(|(y, m)| y - m).collect(),
        influence: fit.influence,
        mu_jacobian: fit.jacobian,
    })
}

/// Ordinary least squares through a QR factorisation.
pub(crate) fn least_squares(design: &DMatrix<f64>, y: &[f64]) -> Result<RegressionFit, InstrumentError> {
    let (n, p) = design.shape();
    if n < p {
        return Err(InstrumentError::RankDeficientDesign);
    }
    let qr = design.clone().qr();
    let r = qr.r();
    let scale = r.diagonal().iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    if scale == 0.0 || r.diagonal().iter().any(|v| v.abs() <= RANK_TOLERANCE * scale) {
        return Err(InstrumentError::RankDeficientDesign);
    }
    let qty = qr.q().transpose() * DVector::from_column_slice(y);
    let theta = r
        .solve_upper_triangular(&qty.rows(0, p).into_owned())
        .ok_or(InstrumentError::RankDeficientDesign)?;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(p, p))
        .ok_or(InstrumentError::RankDeficientDesign)?;
    // (DᵀD)⁻¹ = R⁻¹ R⁻ᵀ
    let bread = &r_inv * r_inv.transpose();

    let fitted: Vec<f64> = (design * &theta).iter().copied().collect();
    let mut influence = DMatrix::zeros(n, p);
    for i in 0..n {
        let e = y[i] - fitted[i];
        let v = &bread * design.row(i).transpose() * (n as f64 * e);
        influence.row_mut(i).copy_from(&v.transpose());
    }
    Ok(RegressionFit { theta, fitted, influence, jacobian: design.clone() })
}

fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn log_likelihood(design: &DMatrix<f64>, y: &[f64], theta: &DVector<f64>) -> f64 {
    let eta = design * theta;
    eta.iter()
        .zip(y)
        .map(|(&e, &yi)| {
            // log(1 + e^eta) computed without overflow
            let softplus = if e > 0.0 { e + (-e).exp().ln_1p() } else { e.exp().ln_1p() };
            yi * e - softplus
        })
        .sum()
}

/// Logistic maximum likelihood by damped Newton iterations.
///
/// The first design column must be the intercept.
pub(crate) fn logistic_ml(design: &DMatrix<f64>, y: &[f64]) -> Result<RegressionFit, InstrumentError> {
    let (n, p) = design.shape();
    if let Some(row) = y.iter().position(|&v| v != 0.0 && v != 1.0) {
        return Err(InstrumentError::LogisticNonBinaryInstrument { row: row + 1, value: y[row] });
    }
    let ybar = y.iter().sum::<f64>() / n as f64;
    if ybar == 0.0 || ybar == 1.0 {
        return Err(InstrumentError::RankDeficientDesign);
    }
    let mut theta = DVector::zeros(p);
    theta[0] = (ybar / (1.0 - ybar)).ln();

    let nf = n as f64;
    let mut max_score = f64::INFINITY;
    for _ in 0..LOGISTIC_MAX_ITER {
        let probs: Vec<f64> = (design * &theta).iter().map(|&e| expit(e)).collect();
        let resid = DVector::from_iterator(n, y.iter().zip(&probs).map(|(yi, pi)| yi - pi));
        let score = design.transpose() * &resid;
        max_score = score.amax() / nf;
        if max_score < LOGISTIC_TOLERANCE {
            // a vanishing score because every fitted probability sits on its
            // response is separation, not a maximum
            if y.iter().zip(&probs).all(|(yi, pi)| (yi - pi).abs() < 1e-6) {
                break;
            }
            return finish_logistic(design, y, theta);
        }
        let info = information(design, &probs);
        let step = info.cholesky().ok_or(InstrumentError::RankDeficientDesign)?.solve(&score);

        // near the maximum the gain drops below rounding in the sum
        let current = log_likelihood(design, y, &theta);
        let slack = 1e-12 * (1.0 + current.abs());
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let candidate = &theta + &step * scale;
            if log_likelihood(design, y, &candidate) >= current - slack {
                theta = candidate;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Err(InstrumentError::LogisticNoConvergence {
        iterations: LOGISTIC_MAX_ITER,
        max_score,
        tolerance: LOGISTIC_TOLERANCE,
    })
}

fn information(design: &DMatrix<f64>, probs: &[f64]) -> DMatrix<f64> {
    let p = design.ncols();
    let mut info = DMatrix::zeros(p, p);
    for (i, &pi) in probs.iter().enumerate() {
        let w = pi * (1.0 - pi);
        let row = design.row(i);
        for a in 0..p {
            for b in 0..=a {
                info[(a, b)] += w * row[a] * row[b];
            }
        }
    }
    info.fill_upper_triangle_with_lower_triangle();
    info
}

fn finish_logistic(
    design: &DMatrix<f64>,
    y: &[f64],
    theta: DVector<f64>,
) -> Result<RegressionFit, InstrumentError> {
    let (n, p) = design.shape();
    let probs: Vec<f64> = (design * &theta).iter().map(|&e| expit(e)).collect();
    let info_inv = information(design, &probs)
        .cholesky()
        .ok_or(InstrumentError::RankDeficientDesign)?
        .inverse();
    let mut influence = DMatrix::zeros(n, p);
    let mut jacobian = DMatrix::zeros(n, p);
    for i in 0..n {
        let row = design.row(i).transpose();
        let v = &info_inv * &row * (n as f64 * (y[i] - probs[i]));
        influence.row_mut(i).copy_from(&v.transpose());
        jacobian.row_mut(i).copy_from(&(row * (probs[i] * (1.0 - probs[i]))).transpose());
    }
    Ok(RegressionFit { theta, fitted: probs, influence, jacobian })
}
