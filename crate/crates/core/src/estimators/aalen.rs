//! Aalen additive-hazards least squares, used as the naive comparator.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::{SurvivalDataset, PRIMARY_EVENT};
use crate::estimators::EstimationError;
use crate::step::StepFunction;

/// Scaled Cholesky pivots below this flag a singular risk-set design.
const PIVOT_TOLERANCE: f64 = 1e-10;

/// Columns of the additive-hazards design; the intercept is always present.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AalenDesign {
    pub exposure: bool,
    pub instrument: bool,
    pub covariates: Vec<String>,
}

impl AalenDesign {
    /// Intercept, exposure and instrument.
    pub fn naive() -> Self {
        AalenDesign { exposure: true, instrument: true, covariates: Vec::new() }
    }

    pub fn intercept_only() -> Self {
        AalenDesign { exposure: false, instrument: false, covariates: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AalenFit {
    pub names: Vec<String>,
    pub cumulative: Vec<StepFunction>,
}

impl AalenFit {
    pub fn get(&self, name: &str) -> Option<&StepFunction> {
        self.names.iter().position(|n| n == name).map(|j| &self.cumulative[j])
    }
}

/// Cumulative regression functions `B̃(t) = Σ_{t_k <= t} (Z_kᵀ Z_k)⁻¹ Z_kᵀ dN(t_k)`,
/// optionally restricted to event times `<= tau`.
pub fn naive_aalen(ds: &SurvivalDataset, design: &AalenDesign, tau: Option<f64>) -> Result<AalenFit, EstimationError> {
    let mut names = vec!["intercept".to_string()];
    if design.exposure {
        names.push("exposure".into());
    }
    if design.instrument {
        names.push("instrument".into());
    }
    let cov_idx = design
        .covariates
        .iter()
        .map(|c| ds.covariate_index(c))
        .collect::<Result<Vec<_>, _>>()?;
    names.extend(design.covariates.iter().cloned());
    let p = names.len();

    let row = |i: usize| -> DVector<f64> {
        let s = ds.subject(i);
        let mut v = Vec::with_capacity(p);
        v.push(1.0);
        if design.exposure {
            v.push(s.exposure);
        }
        if design.instrument {
            v.push(s.instrument);
        }
        v.extend(cov_idx.iter().map(|&c| s.covariates[c]));
        DVector::from_vec(v)
    };

    let grid = match ds.event_grid(PRIMARY_EVENT) {
        Ok(g) => g,
        Err(_) => return Ok(AalenFit { cumulative: vec![StepFunction::zero(); p], names }),
    };
    let m = grid.times().partition_point(|&t| tau.map_or(true, |u| t <= u));

    // Risk sets shrink over time, so accumulate ZᵀZ backwards by adding subjects.
    let mut increments = vec![DVector::zeros(p); m];
    let mut gram = DMatrix::<f64>::zeros(p, p);
    let mut added = 0usize;
    let order = ds.canonical_order();
    let n = order.len();
    for k in (0..m).rev() {
        let needed = grid.at_risk_count(k);
        while added < needed {
            let z = row(order[n - 1 - added]);
            gram.ger(1.0, &z, &z, 1.0);
            added += 1;
        }
        let mut rhs = DVector::zeros(p);
        for &i in grid.events(k) {
            rhs += row(i);
        }
        increments[k] = solve_spd(&gram, &rhs)
            .ok_or(EstimationError::RankDeficientRiskSet { time: grid.times()[k] })?;
    }

    let times = grid.times()[..m].to_vec();
    let cumulative = (0..p)
        .map(|j| {
            let mut acc = 0.0;
            let values = increments.iter().map(|inc| {
                acc += inc[j];
                acc
            });
            StepFunction::new(times.clone(), values.collect()).expect("event grid is strictly increasing")
        })
        .collect();
    Ok(AalenFit { names, cumulative })
}

/// Solves `A x = b` for symmetric positive definite `A`, after diagonal scaling,
/// returning `None` when `A` is numerically singular.
pub(crate) fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let p = a.nrows();
    let d: Vec<f64> = (0..p).map(|j| a[(j, j)]).collect();
    if d.iter().any(|&v| !(v > 0.0)) {
        return None;
    }
    let s: Vec<f64> = d.iter().map(|v| 1.0 / v.sqrt()).collect();
    let scaled = DMatrix::from_fn(p, p, |i, j| a[(i, j)] * s[i] * s[j]);
    let chol = scaled.cholesky()?;
    if chol.l_dirty().diagonal().iter().any(|&v| v * v < PIVOT_TOLERANCE) {
        return None;
    }
    let rhs = DVector::from_fn(p, |i, _| b[i] * s[i]);
    let y = chol.solve(&rhs);
    Some(DVector::from_fn(p, |i, _| y[i] * s[i]))
}
