//! Closed-form solution on the `A = e^{B_X}` scale for a binary exposure.
//!
//! With `den⁰_k = Σ_{risk} G^c_i X_i` the jump measures
//! `dW = Σ_{events} G^c_i (1 - X_i) / den⁰` and `dU = Σ_{events} G^c_i X_i / den⁰`
//! drive the linear Volterra equation `A(t) = 1 + W(t) + ∫_0^t A(s-) dU(s)`,
//! solved by `A(t_k) = A(t_{k-1}) (1 + dU_k) + dW_k`.

use crate::dataset::{SurvivalDataset, PRIMARY_EVENT};
use crate::estimators::recursive::DEN_THRESHOLD;
use crate::estimators::EstimationError;
use crate::instrument::InstrumentModelFit;
use crate::step::StepFunction;

#[derive(Debug, Clone, PartialEq)]
pub struct VolterraFit {
    /// `A(t)`, equal to 1 before the first event.
    pub survival_ratio: StepFunction,
    pub dw: Vec<f64>,
    pub du: Vec<f64>,
}

impl VolterraFit {
    pub fn eval(&self, t: f64) -> f64 {
        if self.survival_ratio.grid().first().map_or(true, |&t0| t < t0) {
            1.0
        } else {
            self.survival_ratio.eval(t)
        }
    }

    /// `log A(t)` as an estimate of `B_X(t)`.
    pub fn log_estimate(&self) -> Result<StepFunction, EstimationError> {
        let grid = self.survival_ratio.grid();
        let values = self
            .survival_ratio
            .values()
            .iter()
            .zip(grid)
            .map(|(&a, &t)| if a > 0.0 { Ok(a.ln()) } else { Err(EstimationError::NonPositiveSurvivalRatio { time: t }) })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(StepFunction::new(grid.to_vec(), values).expect("grid is strictly increasing"))
    }
}

pub fn fit_volterra_binary(ds: &SurvivalDataset, fit: &InstrumentModelFit) -> Result<VolterraFit, EstimationError> {
    if let Some(row) = ds.subjects().iter().position(|s| s.exposure != 0.0 && s.exposure != 1.0) {
        return Err(EstimationError::NonBinaryExposure { row: row + 1 });
    }
    let grid = match ds.event_grid(PRIMARY_EVENT) {
        Ok(g) => g,
        Err(_) => return Ok(VolterraFit { survival_ratio: StepFunction::zero(), dw: vec![], du: vec![] }),
    };
    let n = ds.len() as f64;
    let gc = fit.residuals();
    let x = |i: usize| ds.subject(i).exposure;

    let mut a = 1.0;
    let mut values = Vec::with_capacity(grid.len());
    let (mut dws, mut dus) = (Vec::new(), Vec::new());
    for k in 0..grid.len() {
        let den: f64 = grid.at_risk(k).iter().map(|&i| gc[i] * x(i)).sum();
        if !(den.abs() / n >= DEN_THRESHOLD) {
            return Err(EstimationError::WeakInstrument { time: grid.times()[k], scaled_denominator: den.abs() / n });
        }
        let (mut w, mut u) = (0.0, 0.0);
        for &i in grid.events(k) {
            w += gc[i] * (1.0 - x(i));
            u += gc[i] * x(i);
        }
        let (dw, du) = (w / den, u / den);
        a = a * (1.0 + du) + dw;
        values.push(a);
        dws.push(dw);
        dus.push(du);
    }
    Ok(VolterraFit {
        survival_ratio: StepFunction::new(grid.times().to_vec(), values).expect("grid is strictly increasing"),
        dw: dws,
        du: dus,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{CauseMode, SubjectRecord};
    use crate::instrument::{fit_instrument_model, InstrumentModelSpec};

    fn fit(subjects: Vec<SubjectRecord>) -> Result<VolterraFit, EstimationError> {
        let ds = SurvivalDataset::new(subjects, vec![], CauseMode::SingleCause).unwrap();
        let inst = fit_instrument_model(&ds, &InstrumentModelSpec::intercept_only()).unwrap();
        fit_volterra_binary(&ds, &inst)
    }

    #[test]
    fn no_events_is_one() {
        let v = fit(vec![SubjectRecord::new(1.0, 0, 1.0, 1.0), SubjectRecord::new(2.0, 0, 0.0, 0.0)]).unwrap();
        assert_eq!(v.eval(3.0), 1.0);
        assert!(v.log_estimate().unwrap().is_empty());
    }

    #[test]
    fn single_event_either_exposure() {
        for xj in [0.0, 1.0] {
            let subjects = vec![
                SubjectRecord::new(1.0, 1, xj, 1.0),
                SubjectRecord::new(2.0, 0, 1.0, 1.0),
                SubjectRecord::new(2.5, 0, 0.0, 0.0),
                SubjectRecord::new(3.0, 0, 0.0, 0.0),
            ];
            let gbar = 0.5;
            let gc = [0.5, 0.5, -0.5, -0.5];
            let den0: f64 = gc[0] * xj + gc[1];
            let v = fit(subjects).unwrap();
            let expected = 1.0 + (1.0 - gbar) / den0;
            assert!((v.eval(1.0) - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_continuous_exposure() {
        let err = fit(vec![SubjectRecord::new(1.0, 1, 0.5, 1.0)]).unwrap_err();
        assert_eq!(err, EstimationError::NonBinaryExposure { row: 1 });
    }
}
