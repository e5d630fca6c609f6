//! Two-stage least-squares baselines.
//!
//! Stage 1 regresses the exposure on the instrument, by least squares or a
//! logistic model. Stage 2 fits a constant-coefficient additive hazards model
//! by solving the Lin–Ying estimating equation
//! `Σ_i ∫_0^τ (Z_i - Z̄(t)) {dN_i(t) - Z_iᵀβ R_i(t) dt} = 0`
//! in closed form; all time integrals are exact sums over the intervals
//! between successive follow-up times. The regressors are either the fitted
//! exposure `X̂` alone (substitution) or `(X, X - X̂)` (control function).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::{SurvivalDataset, PRIMARY_EVENT};
use crate::estimators::aalen::solve_spd;
use crate::estimators::EstimationError;
use crate::instrument::{least_squares, logistic_ml, InstrumentError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FirstStage {
    Linear,
    Logistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SecondStage {
    /// Regress on the first-stage prediction `X̂`.
    #[default]
    Substitution,
    /// Regress on `X` and the first-stage residual `X - X̂`.
    ControlFunction,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoStageFit {
    pub second_stage: SecondStage,
    /// Coefficient on the exposure, or on `X̂` for substitution.
    pub beta: f64,
    /// Stage-2 coefficients, exposure first then the residual when kept.
    pub coefficients: Vec<f64>,
    pub first_stage_theta: Vec<f64>,
    /// Control function only: the first-stage residual vanished and was left out.
    pub residual_dropped: bool,
}

/// Closed-form Lin–Ying additive hazards coefficients over `[0, tau]`.
///
/// `z[i]` is the regressor vector of subject `i`.
pub fn lin_ying(ds: &SurvivalDataset, z: &[Vec<f64>], tau: f64) -> Result<DVector<f64>, EstimationError> {
    let p = z.first().map_or(0, Vec::len);
    let order = ds.canonical_order();
    let time = |pos: usize| ds.subject(order[pos]).time;

    let mut s0 = 0.0;
    let mut s1 = DVector::<f64>::zeros(p);
    let mut s2 = DMatrix::<f64>::zeros(p, p);
    let mut lhs = DMatrix::<f64>::zeros(p, p);
    let mut rhs = DVector::<f64>::zeros(p);

    let mut end = order.len();
    while end > 0 {
        let u = time(end - 1);
        let mut start = end;
        while start > 0 && time(start - 1) == u {
            start -= 1;
        }
        for &i in &order[start..end] {
            let zi = DVector::from_column_slice(&z[i]);
            s0 += 1.0;
            s1 += &zi;
            s2.ger(1.0, &zi, &zi, 1.0);
        }
        let zbar = &s1 / s0;
        if u <= tau {
            for &i in &order[start..end] {
                if ds.subject(i).status == PRIMARY_EVENT {
                    rhs += DVector::from_column_slice(&z[i]) - &zbar;
                }
            }
        }
        let prev = if start > 0 { time(start - 1) } else { 0.0 };
        let width = u.min(tau) - prev.min(tau);
        if width > 0.0 {
            // Σ_{risk} (Z_i - Z̄)^{⊗2} = S2 - S1 S1ᵀ / S0
            let centered = &s2 - &s1 * s1.transpose() / s0;
            lhs += centered * width;
        }
        end = start;
    }
    solve_spd(&lhs, &rhs).ok_or(EstimationError::SingularSecondStage)
}

/// The substitution estimator `β̌`.
pub fn two_stage_ls(ds: &SurvivalDataset, first_stage: FirstStage, tau: f64) -> Result<TwoStageFit, EstimationError> {
    two_stage(ds, first_stage, SecondStage::Substitution, tau)
}

pub fn two_stage(
    ds: &SurvivalDataset,
    first_stage: FirstStage,
    second_stage: SecondStage,
    tau: f64,
) -> Result<TwoStageFit, EstimationError> {
    let n = ds.len();
    let x: Vec<f64> = ds.subjects().iter().map(|s| s.exposure).collect();
    let design = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { ds.subject(i).instrument });
    let fit = match first_stage {
        FirstStage::Linear => least_squares(&design, &x),
        FirstStage::Logistic => logistic_ml(&design, &x),
    }
    .map_err(|e| match e {
        InstrumentError::RankDeficientDesign => EstimationError::DegenerateFirstStage,
        other => EstimationError::FirstStage(other),
    })?;

    let (lo, hi) = fit.fitted.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let x_scale = x.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
    if hi - lo <= 1e-12 * x_scale {
        return Err(EstimationError::DegenerateFirstStage);
    }
    let residual: Vec<f64> = x.iter().zip(&fit.fitted).map(|(a, b)| a - b).collect();
    let residual_dropped = residual.iter().all(|r| r.abs() <= 1e-10 * x_scale);

    let z: Vec<Vec<f64>> = match second_stage {
        SecondStage::Substitution => fit.fitted.iter().map(|&v| vec![v]).collect(),
        SecondStage::ControlFunction if residual_dropped => x.iter().map(|&v| vec![v]).collect(),
        SecondStage::ControlFunction => x.iter().zip(&residual).map(|(&a, &r)| vec![a, r]).collect(),
    };
    let coef = lin_ying(ds, &z, tau)?;
    Ok(TwoStageFit {
        second_stage,
        beta: coef[0],
        coefficients: coef.iter().copied().collect(),
        first_stage_theta: fit.theta.iter().copied().collect(),
        residual_dropped,
    })
}
