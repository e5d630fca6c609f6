//! The recursive instrumental-variables estimator of `B_X(t)`.
//!
//! At each distinct event time `t_k`, with `b = B̂(t_{k-1})`,
//!
//! ```text
//! ΔB̂(t_k) = Σ_{events at t_k} G^c_i e^{b X_i} / Σ_{at risk at t_k} G^c_i e^{b X_i} X_i
//! ```
//!
//! which is the exact sample root of the instrument-weighted estimating
//! equation at that time. The trace keeps everything the influence
//! decomposition needs: the slope of the jump in `b` and the running
//! gradient of `B̂` with respect to the instrument-model parameters.

use serde::Serialize;

use crate::dataset::{SurvivalDataset, PRIMARY_EVENT};
use crate::estimators::EstimationError;
use crate::instrument::InstrumentModelFit;
use crate::step::StepFunction;

/// `|den_k| / n` below this aborts the recursion.
pub const DEN_THRESHOLD: f64 = 1e-8;

/// Per-event-time quantities of one run of the recursion.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct RecursionTrace {
    pub n_subjects: usize,
    pub times: Vec<f64>,
    /// `B̂(t_{k-1})`.
    pub b_prev: Vec<f64>,
    pub numerator: Vec<f64>,
    pub denominator: Vec<f64>,
    pub jump: Vec<f64>,
    /// `Σ_{events} G^c X e^{bX}`.
    pub numerator_slope: Vec<f64>,
    /// `Σ_{risk} G^c X² e^{bX}`.
    pub denominator_slope: Vec<f64>,
    /// `∂(num/den)/∂b` at `b = B̂(t_{k-1})`.
    pub slope: Vec<f64>,
    /// `∂B̂(t_k)/∂θ`, one row per event time.
    pub theta_gradient: Vec<Vec<f64>>,
}

impl RecursionTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Smallest `|den_k| / n` over the grid; `None` without events.
    pub fn min_scaled_denominator(&self) -> Option<f64> {
        let n = self.n_subjects as f64;
        self.denominator.iter().map(|d| d.abs() / n).reduce(f64::min)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecursiveFit {
    pub estimate: StepFunction,
    pub trace: RecursionTrace,
}

/// Runs the recursion forward from `B̂(0) = 0`.
///
/// Without any cause-1 event the estimate is identically zero and the trace
/// is empty.
pub fn fit_recursive(ds: &SurvivalDataset, fit: &InstrumentModelFit) -> Result<RecursiveFit, EstimationError> {
    let n = ds.len();
    let p = fit.dim();
    let mut trace = RecursionTrace { n_subjects: n, ..Default::default() };
    let grid = match ds.event_grid(PRIMARY_EVENT) {
        Ok(g) => g,
        Err(_) => return Ok(RecursiveFit { estimate: StepFunction::zero(), trace }),
    };

    let x: Vec<f64> = ds.subjects().iter().map(|s| s.exposure).collect();
    let gc = fit.residuals();
    let jac = fit.mu_jacobian();

    let mut b = 0.0;
    let mut grad = vec![0.0; p];
    let mut values = Vec::with_capacity(grid.len());
    let mut d_num = vec![0.0; p];
    let mut d_den = vec![0.0; p];

    for k in 0..grid.len() {
        let t = grid.times()[k];
        let (mut num, mut num_slope) = (0.0, 0.0);
        d_num.iter_mut().for_each(|v| *v = 0.0);
        for &i in grid.events(k) {
            let e = (b * x[i]).exp();
            num += gc[i] * e;
            num_slope += gc[i] * x[i] * e;
            for (j, dv) in d_num.iter_mut().enumerate() {
                *dv -= jac[(i, j)] * e;
            }
        }
        let (mut den, mut den_slope) = (0.0, 0.0);
        d_den.iter_mut().for_each(|v| *v = 0.0);
        for &i in grid.at_risk(k) {
            let ex = (b * x[i]).exp() * x[i];
            den += gc[i] * ex;
            den_slope += gc[i] * x[i] * ex;
            for (j, dv) in d_den.iter_mut().enumerate() {
                *dv -= jac[(i, j)] * ex;
            }
        }

        if !(den.abs() / n as f64 >= DEN_THRESHOLD) {
            return Err(EstimationError::WeakInstrument { time: t, scaled_denominator: den.abs() / n as f64 });
        }
        let jump = num / den;
        // ratios first: den² overflows long before B̂ does
        let slope = num_slope / den - jump * (den_slope / den);
        for j in 0..p {
            grad[j] += d_num[j] / den - jump * (d_den[j] / den) + slope * grad[j];
        }
        if !(slope.is_finite() && grad.iter().all(|g| g.is_finite())) {
            return Err(EstimationError::NonFiniteEstimate { time: t });
        }

        trace.times.push(t);
        trace.b_prev.push(b);
        trace.numerator.push(num);
        trace.denominator.push(den);
        trace.jump.push(jump);
        trace.numerator_slope.push(num_slope);
        trace.denominator_slope.push(den_slope);
        trace.slope.push(slope);
        trace.theta_gradient.push(grad.clone());

        b += jump;
        if !b.is_finite() {
            return Err(EstimationError::NonFiniteEstimate { time: t });
        }
        values.push(b);
    }

    let estimate = StepFunction::new(grid.times().to_vec(), values).expect("grid is strictly increasing");
    Ok(RecursiveFit { estimate, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{CauseMode, SubjectRecord};
    use crate::instrument::{fit_instrument_model, InstrumentModelSpec};

    fn four_subjects() -> SurvivalDataset {
        let subjects = vec![
            SubjectRecord::new(1.0, 1, 1.0, 1.0),
            SubjectRecord::new(2.0, 1, 0.0, 1.0),
            SubjectRecord::new(1.5, 0, 1.0, 0.0),
            SubjectRecord::new(3.0, 1, 2.0, 0.0),
        ];
        SurvivalDataset::new(subjects, vec![], CauseMode::SingleCause).unwrap()
    }

    #[test]
    fn hand_evaluated_recursion() {
        let ds = four_subjects();
        let inst = fit_instrument_model(&ds, &InstrumentModelSpec::intercept_only()).unwrap();
        let fit = fit_recursive(&ds, &inst).unwrap();
        let tr = &fit.trace;
        assert_eq!(tr.times, [1.0, 2.0, 3.0]);
        assert_eq!(tr.numerator[0], 0.5);
        assert_eq!(tr.denominator[0], -1.0);
        assert_eq!(fit.estimate.values()[0], -0.5);
        // t = 2: only subject 4 (X = 2, G^c = -0.5) contributes to the denominator
        let den2 = -0.5 * (-1.0f64).exp() * 2.0;
        assert!((tr.denominator[1] - den2).abs() < 1e-15);
        assert!((fit.estimate.values()[1] - (-0.5 + 0.5 / den2)).abs() < 1e-15);
        assert!((fit.estimate.values()[1] + 1.85914).abs() < 1e-5);
        // t = 3: a lone subject at risk gives ΔB̂ = 1/X
        assert!((tr.jump[2] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn no_events_gives_zero() {
        let subjects = vec![SubjectRecord::new(1.0, 0, 1.0, 1.0), SubjectRecord::new(2.0, 0, 0.0, 0.0)];
        let ds = SurvivalDataset::new(subjects, vec![], CauseMode::SingleCause).unwrap();
        let inst = fit_instrument_model(&ds, &InstrumentModelSpec::intercept_only()).unwrap();
        let fit = fit_recursive(&ds, &inst).unwrap();
        assert!(fit.estimate.is_empty());
        assert!(fit.trace.is_empty());
        assert_eq!(fit.estimate.eval(5.0), 0.0);
    }

    #[test]
    fn constant_instrument_is_weak() {
        let subjects = vec![SubjectRecord::new(1.0, 1, 1.0, 1.0), SubjectRecord::new(2.0, 1, 0.0, 1.0)];
        let ds = SurvivalDataset::new(subjects, vec![], CauseMode::SingleCause).unwrap();
        let inst = fit_instrument_model(&ds, &InstrumentModelSpec::intercept_only()).unwrap();
        let err = fit_recursive(&ds, &inst).unwrap_err();
        assert!(matches!(err, EstimationError::WeakInstrument { time, .. } if time == 1.0));
    }

    #[test]
    fn theta_gradient_matches_finite_difference() {
        let ds = four_subjects();
        let inst = fit_instrument_model(&ds, &InstrumentModelSpec::intercept_only()).unwrap();
        let fit = fit_recursive(&ds, &inst).unwrap();
        // perturb θ = mean(G) by shifting every residual
        let h = 1e-6;
        let run = |delta: f64| {
            let x: Vec<f64> = ds.subjects().iter().map(|s| s.exposure).collect();
            let gc: Vec<f64> = inst.residuals().iter().map(|r| r - delta).collect();
            let grid = ds.event_grid(1).unwrap();
            let mut b = 0.0;
            let mut out = vec![];
            for k in 0..grid.len() {
                let num: f64 = grid.events(k).iter().map(|&i| gc[i] * (b * x[i]).exp()).sum();
                let den: f64 = grid.at_risk(k).iter().map(|&i| gc[i] * (b * x[i]).exp() * x[i]).sum();
                b += num / den;
                out.push(b);
            }
            out
        };
        let (up, down) = (run(h), run(-h));
        for k in 0..fit.trace.len() {
            let fd = (up[k] - down[k]) / (2.0 * h);
            assert!((fit.trace.theta_gradient[k][0] - fd).abs() < 1e-5 * (1.0 + fd.abs()), "k={k}");
        }
    }
}
