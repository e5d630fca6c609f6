//! Time-constant and piecewise-constant summaries of `B̂_X`.
//!
//! Both weight the increments of `B̂` by the number at risk, normalised over
//! the integration window: `w(t) = R.(t) / ∫_window R.(s) ds`. The
//! normalising integral is exact because `∫_0^u R.(s) ds = Σ_i min(T_i, u)`.

use serde::Serialize;

use crate::dataset::SurvivalDataset;
use crate::estimators::EstimationError;
use crate::step::StepFunction;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum EffectKind {
    Constant { beta: f64 },
    Piecewise { beta0: f64, beta1: f64, changepoint: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffectSummary {
    pub kind: EffectKind,
    pub tau: f64,
    /// Weights at the jump times used, covering both windows for a piecewise fit.
    pub weights: StepFunction,
}

impl EffectSummary {
    pub fn beta(&self) -> Option<f64> {
        match self.kind {
            EffectKind::Constant { beta } => Some(beta),
            EffectKind::Piecewise { .. } => None,
        }
    }

    /// `β̂ t` for a constant effect, `B†(t)` for a piecewise one.
    pub fn fitted_cumulative(&self, t: f64) -> f64 {
        match self.kind {
            EffectKind::Constant { beta } => beta * t,
            EffectKind::Piecewise { beta0, beta1, changepoint } => {
                if t < changepoint {
                    beta0 * t
                } else {
                    beta0 * changepoint + beta1 * (t - changepoint)
                }
            }
        }
    }
}

fn check_tau(ds: &SurvivalDataset, tau: f64) -> Result<(), EstimationError> {
    if !(tau > 0.0 && tau.is_finite() && tau <= ds.max_time()) {
        return Err(EstimationError::InvalidTau { tau, max_time: ds.max_time() });
    }
    Ok(())
}

/// Weighted sum of jumps over grid points satisfying `in_window`, with the
/// given normalising risk integral.
fn weighted_window(
    estimate: &StepFunction,
    ds: &SurvivalDataset,
    in_window: impl Fn(f64) -> bool,
    norm: f64,
) -> (f64, Vec<(f64, f64)>) {
    let mut sum = 0.0;
    let mut weights = Vec::new();
    for (&t, jump) in estimate.grid().iter().zip(estimate.jumps()) {
        if in_window(t) {
            let w = ds.at_risk_count(t) as f64 / norm;
            sum += w * jump;
            weights.push((t, w));
        }
    }
    (sum, weights)
}

/// `β̂ = Σ_{t_k <= τ} w(t_k) ΔB̂(t_k)`.
pub fn constant_effect(estimate: &StepFunction, ds: &SurvivalDataset, tau: f64) -> Result<EffectSummary, EstimationError> {
    check_tau(ds, tau)?;
    let norm = ds.risk_integral(tau);
    let (beta, weights) = weighted_window(estimate, ds, |t| t <= tau, norm);
    if weights.is_empty() {
        return Err(EstimationError::NoJumpsInWindow { lower: 0.0, upper: tau });
    }
    let (grid, w): (Vec<f64>, Vec<f64>) = weights.into_iter().unzip();
    Ok(EffectSummary {
        kind: EffectKind::Constant { beta },
        tau,
        weights: StepFunction::new(grid, w).expect("subset of a strictly increasing grid"),
    })
}

/// Two-level effect `β_0 1(t < ξ) + β_1 1(t >= ξ)` on `[0, τ]`.
pub fn piecewise_effect(
    estimate: &StepFunction,
    ds: &SurvivalDataset,
    xi: f64,
    tau: f64,
) -> Result<EffectSummary, EstimationError> {
    check_tau(ds, tau)?;
    if !(xi > 0.0 && xi < tau) {
        return Err(EstimationError::InvalidChangepoint { xi, tau });
    }
    let norm0 = ds.risk_integral(xi);
    let norm1 = ds.risk_integral(tau) - norm0;
    let (beta0, w0) = weighted_window(estimate, ds, |t| t < xi, norm0);
    if w0.is_empty() {
        return Err(EstimationError::EmptyWindow { window: 0, lower: 0.0, upper: xi });
    }
    let (beta1, w1) = weighted_window(estimate, ds, |t| t >= xi && t <= tau, norm1);
    if w1.is_empty() {
        return Err(EstimationError::EmptyWindow { window: 1, lower: xi, upper: tau });
    }
    let (grid, w): (Vec<f64>, Vec<f64>) = w0.into_iter().chain(w1).unzip();
    Ok(EffectSummary {
        kind: EffectKind::Piecewise { beta0, beta1, changepoint: xi },
        tau,
        weights: StepFunction::new(grid, w).expect("subset of a strictly increasing grid"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{CauseMode, SubjectRecord};

    fn ds(times: &[(f64, u8)]) -> SurvivalDataset {
        let subjects = times.iter().map(|&(t, s)| SubjectRecord::new(t, s, 1.0, 0.0)).collect();
        SurvivalDataset::new(subjects, vec![], CauseMode::SingleCause).unwrap()
    }

    #[test]
    fn zero_estimate_gives_zero() {
        let d = ds(&[(1.0, 1), (2.0, 0)]);
        let b = StepFunction::new(vec![1.0], vec![0.0]).unwrap();
        assert_eq!(constant_effect(&b, &d, 2.0).unwrap().beta(), Some(0.0));
    }

    #[test]
    fn two_subject_weighted_sum() {
        // ∫R. = 2·1 + 1·1 = 3 and w(1) = 2/3
        let d = ds(&[(1.0, 1), (2.0, 0)]);
        let b = StepFunction::new(vec![1.0], vec![0.3]).unwrap();
        let s = constant_effect(&b, &d, 2.0).unwrap();
        assert!((s.beta().unwrap() - 0.2).abs() < 1e-15);
        assert!((s.weights.values()[0] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.fitted_cumulative(1.5), s.beta().unwrap() * 1.5);
    }

    #[test]
    fn window_errors() {
        let d = ds(&[(1.0, 1), (3.0, 1), (4.0, 0)]);
        let b = StepFunction::new(vec![3.0], vec![0.1]).unwrap();
        assert!(matches!(constant_effect(&b, &d, 2.0), Err(EstimationError::NoJumpsInWindow { .. })));
        assert!(matches!(constant_effect(&b, &d, 9.0), Err(EstimationError::InvalidTau { .. })));
        assert!(matches!(piecewise_effect(&b, &d, 2.0, 4.0), Err(EstimationError::EmptyWindow { window: 0, .. })));
        let b = StepFunction::new(vec![1.0], vec![0.1]).unwrap();
        assert!(matches!(piecewise_effect(&b, &d, 2.0, 4.0), Err(EstimationError::EmptyWindow { window: 1, .. })));
        assert!(matches!(piecewise_effect(&b, &d, 5.0, 4.0), Err(EstimationError::InvalidChangepoint { .. })));
    }

    #[test]
    fn piecewise_reconstruction() {
        let d = ds(&[(1.0, 1), (3.0, 1), (4.0, 0)]);
        let b = StepFunction::new(vec![1.0, 3.0], vec![0.0, 0.0]).unwrap();
        let s = piecewise_effect(&b, &d, 2.0, 4.0).unwrap();
        assert_eq!(s.kind, EffectKind::Piecewise { beta0: 0.0, beta1: 0.0, changepoint: 2.0 });
        assert_eq!(s.fitted_cumulative(3.0), 0.0);

        let s = EffectSummary { kind: EffectKind::Piecewise { beta0: 0.2, beta1: -0.1, changepoint: 2.0 }, ..s };
        assert!((s.fitted_cumulative(1.0) - 0.2).abs() < 1e-15);
        assert!((s.fitted_cumulative(2.0) - 0.4).abs() < 1e-15);
        assert!((s.fitted_cumulative(3.0) - 0.3).abs() < 1e-15);
    }
}
