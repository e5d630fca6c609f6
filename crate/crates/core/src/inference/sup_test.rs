//! Supremum tests calibrated by multiplier resampling.
//!
//! Every test observes a process on a grid, maps the influence paths to the
//! iid representation of that process under its null, and compares
//! `sup |observed|` with the resampled sups. The p-value is the fraction of
//! resampled sups at least as large as the observed one, without smoothing,
//! so it can be 0 for finite `draws`.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::dataset::{CauseMode, SurvivalDataset, COMPETING_EVENT};
use crate::estimators::{EffectKind, EffectSummary};
use crate::inference::multiplier::multiplier_sups;
use crate::inference::{IidDecomposition, InferenceError};
use crate::instrument::{InstrumentModelFit, InstrumentModelKind};
use crate::step::StepFunction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestKind {
    CausalNull,
    ConstantEffect,
    PiecewiseGof,
    CompetingRisk,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestReport {
    pub test: TestKind,
    pub statistic: f64,
    pub p_value: f64,
    pub exceedances: usize,
    pub draws: usize,
    pub seed: u64,
    /// Observed test process on its grid.
    pub process: StepFunction,
    pub resampled_sups: Vec<f64>,
}

fn report(
    test: TestKind,
    process: StepFunction,
    transformed: &DMatrix<f64>,
    ranks: &[usize],
    draws: usize,
    seed: u64,
) -> Result<TestReport, InferenceError> {
    if draws == 0 {
        return Err(InferenceError::NoDraws);
    }
    let statistic = process.sup_abs();
    let resampled_sups = multiplier_sups(transformed, ranks, draws, seed);
    let exceedances = resampled_sups.iter().filter(|&&s| s >= statistic).count();
    Ok(TestReport {
        test,
        statistic,
        p_value: exceedances as f64 / draws as f64,
        exceedances,
        draws,
        seed,
        process,
        resampled_sups,
    })
}

/// `Σ_k w(t_k) Δε̂_i(t_k)` over the weight grid points accepted by `keep`.
fn weighted_influence(dec: &IidDecomposition, weights: &StepFunction, keep: impl Fn(f64) -> bool) -> Vec<f64> {
    let n = dec.n_subjects();
    let eps = dec.eps();
    let mut out = vec![0.0; n];
    for (&t, &w) in weights.grid().iter().zip(weights.values()) {
        if !keep(t) {
            continue;
        }
        let k = dec.column_at(t).filter(|&k| dec.grid()[k] == t).expect("weights live on the estimate grid");
        for (i, o) in out.iter_mut().enumerate() {
            let prev = if k > 0 { eps[(i, k - 1)] } else { 0.0 };
            *o += w * (eps[(i, k)] - prev);
        }
    }
    out
}

fn root_mean_square_over_n(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    (v.iter().map(|x| x * x).sum::<f64>()).sqrt() / n
}

/// Number of grid columns with `t <= upper`.
fn columns_upto(dec: &IidDecomposition, upper: f64) -> usize {
    dec.grid().partition_point(|&t| t <= upper)
}

fn scaled_process(dec: &IidDecomposition, cols: usize, value: impl Fn(f64) -> f64) -> StepFunction {
    let root_n = (dec.n_subjects() as f64).sqrt();
    let grid = dec.grid()[..cols].to_vec();
    let values = grid.iter().map(|&t| root_n * value(t)).collect();
    StepFunction::new(grid, values).expect("grid is strictly increasing")
}

/// `H_0: B_X ≡ 0`, statistic `sup_t |n^{1/2} B̂(t)|`.
pub fn test_causal_null(
    estimate: &StepFunction,
    dec: &IidDecomposition,
    draws: usize,
    seed: u64,
) -> Result<TestReport, InferenceError> {
    let process = scaled_process(dec, dec.len(), |t| estimate.eval(t));
    report(TestKind::CausalNull, process, dec.eps(), dec.ranks(), draws, seed)
}

/// `se(β̂) = n⁻¹ {Σ_i (Σ_k w(t_k) Δε̂_i(t_k))²}^{1/2}`.
pub fn constant_effect_se(dec: &IidDecomposition, summary: &EffectSummary) -> f64 {
    root_mean_square_over_n(&weighted_influence(dec, &summary.weights, |_| true))
}

/// Standard errors of `(β̂_0, β̂_1)`.
pub fn piecewise_effect_se(dec: &IidDecomposition, summary: &EffectSummary) -> Result<(f64, f64), InferenceError> {
    let EffectKind::Piecewise { changepoint: xi, .. } = summary.kind else {
        return Err(InferenceError::WrongEffectKind);
    };
    let e0 = weighted_influence(dec, &summary.weights, |t| t < xi);
    let e1 = weighted_influence(dec, &summary.weights, |t| t >= xi);
    Ok((root_mean_square_over_n(&e0), root_mean_square_over_n(&e1)))
}

/// `H_0: B_X(t) = β t` on `[0, τ]`, statistic `sup_{t<=τ} |n^{1/2}(B̂(t) - β̂ t)|`.
pub fn test_constant_effect(
    estimate: &StepFunction,
    summary: &EffectSummary,
    dec: &IidDecomposition,
    draws: usize,
    seed: u64,
) -> Result<TestReport, InferenceError> {
    let EffectKind::Constant { beta } = summary.kind else {
        return Err(InferenceError::WrongEffectKind);
    };
    let cols = columns_upto(dec, summary.tau);
    let eb = weighted_influence(dec, &summary.weights, |_| true);
    let transformed = DMatrix::from_fn(dec.n_subjects(), cols, |i, k| dec.eps()[(i, k)] - dec.grid()[k] * eb[i]);
    let process = scaled_process(dec, cols, |t| estimate.eval(t) - beta * t);
    report(TestKind::ConstantEffect, process, &transformed, dec.ranks(), draws, seed)
}

/// Goodness of fit of the two-level effect, statistic
/// `sup_{t<=window} |n^{1/2}(B̂(t) - B†(t))|`. The window defaults to `τ` and
/// is capped there.
pub fn test_piecewise_gof(
    estimate: &StepFunction,
    summary: &EffectSummary,
    dec: &IidDecomposition,
    draws: usize,
    seed: u64,
    sup_window: Option<f64>,
) -> Result<TestReport, InferenceError> {
    let EffectKind::Piecewise { changepoint: xi, .. } = summary.kind else {
        return Err(InferenceError::WrongEffectKind);
    };
    let upper = sup_window.map_or(summary.tau, |w| w.min(summary.tau));
    let cols = columns_upto(dec, upper);
    if cols == 0 {
        return Err(InferenceError::EmptyWindow { upper });
    }
    let e0 = weighted_influence(dec, &summary.weights, |t| t < xi);
    let e1 = weighted_influence(dec, &summary.weights, |t| t >= xi);
    let transformed = DMatrix::from_fn(dec.n_subjects(), cols, |i, k| {
        let t = dec.grid()[k];
        let fitted = if t < xi { t * e0[i] } else { xi * e0[i] + (t - xi) * e1[i] };
        dec.eps()[(i, k)] - fitted
    });
    let process = scaled_process(dec, cols, |t| estimate.eval(t) - summary.fitted_cumulative(t));
    report(TestKind::PiecewiseGof, process, &transformed, dec.ranks(), draws, seed)
}

/// Observed competing-risk process
/// `H_n(t) = n^{-1/2} Σ_i ∫_0^t (G_i - Ḡ) e^{B̂(s-) X_i} dN_{2i}(s)` on the
/// cause-2 event grid, with the n × m matrix of its influence paths
/// `ε̂^H_i(s_j) = (G_i - Ḡ){C_i(s_j) - ζ̂₁(s_j)} + Σ_{s_l <= s_j} ε̂^B_i(s_l-) Δζ̂₂(s_l)`.
///
/// `C_i` is the subject's tilted competing-event count; the last term is the
/// grid form of `ε̂^B ζ̂₂ - ∫ ζ̂₂ dε̂^B`.
pub fn competing_influence(
    ds: &SurvivalDataset,
    estimate: &StepFunction,
    dec: &IidDecomposition,
    fit: &InstrumentModelFit,
) -> Result<(StepFunction, DMatrix<f64>), InferenceError> {
    if ds.cause_mode() != CauseMode::CompetingRisk {
        return Err(InferenceError::NoCompetingEvents);
    }
    if fit.kind() != InstrumentModelKind::InterceptOnly {
        return Err(InferenceError::CovariateInstrumentModel);
    }
    let n = ds.len();
    let nf = n as f64;
    let gc = fit.residuals();
    let grid: Vec<f64> = match ds.event_grid(COMPETING_EVENT) {
        Ok(g) => g.times().to_vec(),
        Err(_) => vec![],
    };
    let m = grid.len();

    // each subject has at most one competing event: its column and tilt
    let tilt: Vec<Option<(usize, f64)>> = ds
        .subjects()
        .iter()
        .map(|s| {
            (s.status == COMPETING_EVENT).then(|| {
                let j = grid.partition_point(|&u| u < s.time);
                (j, (estimate.eval_left(s.time) * s.exposure).exp())
            })
        })
        .collect();

    let mut dz1 = vec![0.0; m];
    let mut dz2 = vec![0.0; m];
    for (i, t) in tilt.iter().enumerate() {
        if let Some((j, e)) = *t {
            dz1[j] += e / nf;
            dz2[j] += gc[i] * ds.subject(i).exposure * e / nf;
        }
    }
    let mut zeta1 = dz1.clone();
    for j in 1..m {
        zeta1[j] += zeta1[j - 1];
    }

    // column of ε̂^B(s_j-)
    let left_col: Vec<Option<usize>> =
        grid.iter().map(|&s| dec.grid().partition_point(|&u| u < s).checked_sub(1)).collect();

    let mut eps_h = DMatrix::<f64>::zeros(n, m);
    let mut observed = vec![0.0; m];
    for i in 0..n {
        let mut count = 0.0;
        let mut stieltjes = 0.0;
        for j in 0..m {
            if let Some((ji, e)) = tilt[i] {
                if ji == j {
                    count = e;
                }
            }
            if let Some(k) = left_col[j] {
                stieltjes += dec.eps()[(i, k)] * dz2[j];
            }
            observed[j] += gc[i] * count;
            eps_h[(i, j)] = gc[i] * (count - zeta1[j]) + stieltjes;
        }
    }
    let root_n = nf.sqrt();
    let process = StepFunction::new(grid, observed.iter().map(|h| h / root_n).collect()).expect("grid is strictly increasing");
    Ok((process, eps_h))
}

/// Whether the competing cause depends on the exposure, by a sup test on
/// [`competing_influence`]. Only the intercept-only instrument model is
/// supported.
pub fn competing_risk_test(
    ds: &SurvivalDataset,
    estimate: &StepFunction,
    dec: &IidDecomposition,
    fit: &InstrumentModelFit,
    draws: usize,
    seed: u64,
) -> Result<TestReport, InferenceError> {
    let (process, eps_h) = competing_influence(ds, estimate, dec, fit)?;
    report(TestKind::CompetingRisk, process, &eps_h, dec.ranks(), draws, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::SubjectRecord;
    use crate::estimators::{constant_effect, fit_recursive};
    use crate::inference::iid_decomposition;
    use crate::instrument::{fit_instrument_model, InstrumentModelSpec};

    fn small(mode: CauseMode, rows: &[(f64, u8, f64, f64)]) -> (SurvivalDataset, InstrumentModelFit, StepFunction, IidDecomposition) {
        let subjects = rows.iter().map(|&(t, s, x, g)| SubjectRecord::new(t, s, x, g)).collect();
        let ds = SurvivalDataset::new(subjects, vec![], mode).unwrap();
        let inst = fit_instrument_model(&ds, &InstrumentModelSpec::intercept_only()).unwrap();
        let fit = fit_recursive(&ds, &inst).unwrap();
        let dec = iid_decomposition(&fit.trace, &ds, &inst).unwrap();
        (ds, inst, fit.estimate, dec)
    }

    const ROWS: [(f64, u8, f64, f64); 6] =
        [(1.0, 1, 1.0, 1.0), (2.0, 1, 0.0, 1.0), (1.5, 0, 1.0, 0.0), (3.0, 1, 2.0, 0.0), (2.5, 0, 0.5, 1.0), (3.5, 0, 1.5, 0.0)];

    #[test]
    fn p_value_counts_exceedances() {
        let (_, _, est, dec) = small(CauseMode::SingleCause, &ROWS);
        let r = test_causal_null(&est, &dec, 200, 3).unwrap();
        let scaled = r.p_value * 200.0;
        assert!((scaled - r.exceedances as f64).abs() < 1e-9);
        let again = test_causal_null(&est, &dec, 200, 3).unwrap();
        assert_eq!(r, again);
    }

    #[test]
    fn zero_draws_rejected() {
        let (_, _, est, dec) = small(CauseMode::SingleCause, &ROWS);
        assert_eq!(test_causal_null(&est, &dec, 0, 3).unwrap_err(), InferenceError::NoDraws);
    }

    #[test]
    fn competing_needs_competing_mode() {
        let (ds, inst, est, dec) = small(CauseMode::SingleCause, &ROWS);
        assert_eq!(competing_risk_test(&ds, &est, &dec, &inst, 10, 1).unwrap_err(), InferenceError::NoCompetingEvents);
    }

    #[test]
    fn competing_without_events_has_unit_p() {
        let (ds, inst, est, dec) = small(CauseMode::CompetingRisk, &ROWS);
        let r = competing_risk_test(&ds, &est, &dec, &inst, 50, 1).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn constant_test_requires_constant_summary() {
        let (ds, _, est, dec) = small(CauseMode::SingleCause, &ROWS);
        let s = crate::estimators::piecewise_effect(&est, &ds, 1.5, 3.5).unwrap();
        assert_eq!(test_constant_effect(&est, &s, &dec, 10, 1).unwrap_err(), InferenceError::WrongEffectKind);
        let s = constant_effect(&est, &ds, 3.5).unwrap();
        assert!(test_constant_effect(&est, &s, &dec, 10, 1).is_ok());
    }
}
