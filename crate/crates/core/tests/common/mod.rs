//! Fixtures and brute-force reference computations shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rand_xoshiro::Xoshiro256PlusPlus;
use scsm_core::estimators::RecursionTrace;
use scsm_core::instrument::InstrumentModelFit;
use scsm_core::{CauseMode, SubjectRecord, SurvivalDataset};

pub fn dataset(rows: &[(f64, u8, f64, f64)], mode: CauseMode) -> SurvivalDataset {
    let subjects = rows.iter().map(|&(t, s, x, g)| SubjectRecord::new(t, s, x, g)).collect();
    SurvivalDataset::new(subjects, vec![], mode).unwrap()
}

/// (T, δ, X, G) = (1,1,1,1), (2,1,0,1), (1.5,0,1,0), (3,1,2,0).
pub fn four_subjects() -> SurvivalDataset {
    dataset(
        &[(1.0, 1, 1.0, 1.0), (2.0, 1, 0.0, 1.0), (1.5, 0, 1.0, 0.0), (3.0, 1, 2.0, 0.0)],
        CauseMode::SingleCause,
    )
}

/// Small dataset with tied times on a half-unit lattice, a two-valued
/// instrument taking both values and an exposure that moves with it.
pub fn random_small(seed: u64, n: usize, binary_exposure: bool, competing: bool) -> SurvivalDataset {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let rows: Vec<_> = (0..n)
        .map(|i| {
            let g = if i < 2 { i as f64 } else { f64::from(u8::from(rng.random_bool(0.5))) };
            let z: f64 = rng.sample(StandardNormal);
            let x = if binary_exposure { f64::from(u8::from(z + g > 0.5)) } else { 0.5 + 0.8 * g + 0.5 * z };
            let t = 0.5 * f64::from(rng.random_range(1..=8u8));
            let u: f64 = rng.random();
            let status = if u < 0.6 {
                1
            } else if competing && u < 0.8 {
                2
            } else {
                0
            };
            (t, status, x, g)
        })
        .collect();
    let mode = if competing { CauseMode::CompetingRisk } else { CauseMode::SingleCause };
    dataset(&rows, mode)
}

/// Distinct cause-`cause` event times, recomputed from scratch.
pub fn event_times(ds: &SurvivalDataset, cause: u8) -> Vec<f64> {
    let mut t: Vec<f64> = ds.subjects().iter().filter(|s| s.status == cause).map(|s| s.time).collect();
    t.sort_by(f64::total_cmp);
    t.dedup();
    t
}

pub fn at_risk(ds: &SurvivalDataset, i: usize, t: f64) -> bool {
    ds.subject(i).time >= t
}

pub fn event_at(ds: &SurvivalDataset, i: usize, t: f64, cause: u8) -> bool {
    let s = ds.subject(i);
    s.status == cause && s.time == t
}

/// Largest `|Σ_i G^c_i e^{B̂(t_{k-1}) X_i} {dN_i(t_k) - R_i(t_k) X_i ΔB̂(t_k)}|`
/// over grid times, relative to the sum of absolute terms.
pub fn estimating_equation_residual(ds: &SurvivalDataset, fit: &InstrumentModelFit, trace: &RecursionTrace) -> f64 {
    let gc = fit.residuals();
    let mut worst = 0.0_f64;
    for (k, &t) in trace.times.iter().enumerate() {
        let (b, jump) = (trace.b_prev[k], trace.jump[k]);
        let (mut sum, mut scale) = (0.0, 0.0);
        for i in 0..ds.len() {
            let x = ds.subject(i).exposure;
            let tilt = gc[i] * (b * x).exp();
            for term in [
                if event_at(ds, i, t, 1) { tilt } else { 0.0 },
                if at_risk(ds, i, t) { -tilt * x * jump } else { 0.0 },
            ] {
                sum += term;
                scale += term.abs();
            }
        }
        if scale > 0.0 {
            worst = worst.max(sum.abs() / scale);
        }
    }
    worst
}

/// `ε̂_i(t_k)` by the direct double sum
/// `Σ_{l<=k} F(t_l, t_k) n h_{i,l} dM_i(t_l) + D_k ε^θ_i`, with the
/// propagator multiplied out explicitly for every `(l, k)`.
///
/// Also returns, per grid time, the largest absolute summand over all
/// subjects: the scale of the rounding error in either assembly, which
/// matters for columns that vanish in exact arithmetic.
pub fn direct_influence(
    ds: &SurvivalDataset,
    fit: &InstrumentModelFit,
    trace: &RecursionTrace,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n = ds.len();
    let nf = n as f64;
    let m = trace.times.len();
    let gc = fit.residuals();
    let mut out = vec![vec![0.0; m]; n];
    let mut summand = vec![0.0_f64; m];
    for (i, row) in out.iter_mut().enumerate() {
        let x = ds.subject(i).exposure;
        for (k, cell) in row.iter_mut().enumerate() {
            let mut total = 0.0;
            // F(t_l, t_k), accumulated as l walks down from k
            let mut f = 1.0;
            for l in (0..=k).rev() {
                if l < k {
                    f *= 1.0 + trace.slope[l + 1];
                }
                let t = trace.times[l];
                let h = gc[i] * (trace.b_prev[l] * x).exp() / trace.denominator[l];
                let dn = if event_at(ds, i, t, 1) { 1.0 } else { 0.0 };
                let r = if at_risk(ds, i, t) { 1.0 } else { 0.0 };
                let terms = [f * nf * h * dn, f * nf * h * r * x * trace.jump[l]];
                total += terms[0] - terms[1];
                summand[k] = summand[k].max(terms[0].abs()).max(terms[1].abs());
            }
            for (j, d) in trace.theta_gradient[k].iter().enumerate() {
                let term = d * fit.influence()[(i, j)];
                total += term;
                summand[k] = summand[k].max(term.abs());
            }
            *cell = total;
        }
    }
    (out, summand)
}

pub fn rel_diff(a: f64, b: f64, scale: f64) -> f64 {
    (a - b).abs() / scale.max(f64::MIN_POSITIVE)
}

/// Largest cancellation ratio `Σ_risk |G^c_i e^{B̂ X_i} X_i| / |den_k|` over
/// grid times; rounding in the centred instrument is amplified by about this
/// factor.
pub fn denominator_condition(ds: &SurvivalDataset, fit: &InstrumentModelFit, trace: &RecursionTrace) -> f64 {
    let gc = fit.residuals();
    let mut worst = 1.0_f64;
    for (k, &t) in trace.times.iter().enumerate() {
        let b = trace.b_prev[k];
        let abs: f64 = (0..ds.len())
            .filter(|&i| at_risk(ds, i, t))
            .map(|i| {
                let x = ds.subject(i).exposure;
                (gc[i] * (b * x).exp() * x).abs()
            })
            .sum();
        worst = worst.max(abs / trace.denominator[k].abs());
    }
    worst
}
