//! Data-generating mechanisms.
//!
//! Every replicate draws from its own Xoshiro256++ stream; per subject the
//! variates are consumed in a fixed order so a dataset is a pure function of
//! `(config, replicate seed)`.

use rand::{Rng, SeedableRng};
use rand_distr::{Exp1, StandardNormal};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::dataset::{CauseMode, SubjectRecord, SurvivalDataset, CENSORED, COMPETING_EVENT, PRIMARY_EVENT};
use crate::simulation::config::{Design, SimConfig};

/// Instantaneous hazards below this are clamped up to it.
pub const HAZARD_FLOOR: f64 = 1e-8;

const BASELINE: f64 = 0.25;
const BETA_U: f64 = 0.15;
const MEAN_U: f64 = 1.5;
/// Cholesky factor of `[[0.25, -1/6], [-1/6, 0.25]]`.
const L11: f64 = 0.5;
const L21: f64 = -1.0 / 3.0;
fn l22() -> f64 {
    (0.25_f64 - 1.0 / 9.0).sqrt()
}
const STUDY_END: f64 = 3.5;
const RANDOM_CENSORING: f64 = 0.2;

const MISSPEC_END: f64 = 2.0;
/// `E(1.5 Z²)` for `Z ~ N(1, 0.25²)`.
pub const MISSPEC_MEAN_U: f64 = 1.5 * (1.0 + 0.0625);

/// A generated dataset together with its latent quantities.
#[derive(Debug, Clone)]
pub struct SimSample {
    pub dataset: SurvivalDataset,
    pub latent_u: Vec<f64>,
    /// Uncensored primary event times.
    pub uncensored: Vec<f64>,
    /// Subjects whose hazard hit the floor on some piece.
    pub clamped: usize,
}

/// Instrument strength giving `corr(X̃, G) = rho` with `Var(G) = 1/4` and
/// `Var(X̃ | G) = 1/4`.
pub fn instrument_slope(rho: f64) -> f64 {
    rho / (1.0 - rho * rho).sqrt()
}

/// Event time with hazard `rates[j]` on `[starts[j], starts[j+1])`, obtained
/// by inverting the cumulative hazard at the unit-exponential draw `e`.
/// Returns the time and whether any rate was clamped.
pub fn invert_piecewise_hazard(e: f64, starts: &[f64], rates: &[f64]) -> (f64, bool) {
    let mut clamped = false;
    let mut acc = 0.0;
    for j in 0..starts.len() {
        let mut r = rates[j];
        if r < HAZARD_FLOOR {
            r = HAZARD_FLOOR;
            clamped = true;
        }
        let lo = starts[j];
        match starts.get(j + 1) {
            Some(&hi) if acc + r * (hi - lo) < e => acc += r * (hi - lo),
            _ => return (lo + (e - acc) / r, clamped),
        }
    }
    unreachable!("last piece is unbounded")
}

fn finish(rows: Vec<SubjectRecord>, mode: CauseMode, latent_u: Vec<f64>, uncensored: Vec<f64>, clamped: usize) -> SimSample {
    let dataset = SurvivalDataset::new(rows, vec![], mode).expect("generated data are valid");
    SimSample { dataset, latent_u, uncensored, clamped }
}

/// Gaussian `(X, U) | G` designs, continuous or dichotomised exposure.
fn gen_gaussian(cfg: &SimConfig, seed: u64, dichotomise: bool) -> SimSample {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let gamma = instrument_slope(cfg.rho.expect("validated"));
    let (starts, betas) = cfg.effect.pieces();
    let l22 = l22();
    let mode = if cfg.competing { CauseMode::CompetingRisk } else { CauseMode::SingleCause };

    let mut rows = Vec::with_capacity(cfg.n);
    let (mut us, mut tt) = (Vec::with_capacity(cfg.n), Vec::with_capacity(cfg.n));
    let mut clamped = 0;
    let mut rates = vec![0.0; starts.len()];
    for _ in 0..cfg.n {
        let g = if rng.random_bool(0.5) { 1.0 } else { 0.0 };
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        let x_latent = 0.5 + gamma * g + L11 * z1;
        let u = MEAN_U + L21 * z1 + l22 * z2;
        let x = if dichotomise { f64::from(u8::from(x_latent > 0.5)) } else { x_latent };

        for (r, b) in rates.iter_mut().zip(&betas) {
            *r = BASELINE + b * x + BETA_U * u;
        }
        let (t1, hit) = invert_piecewise_hazard(rng.sample(Exp1), &starts, &rates);
        let mut hit = hit;
        let t2 = if cfg.competing {
            let (t, h) = invert_piecewise_hazard(rng.sample(Exp1), &[0.0], &[0.2 + 0.1 * u]);
            hit |= h;
            t
        } else {
            f64::INFINITY
        };
        clamped += usize::from(hit);
        let c = if rng.random_bool(RANDOM_CENSORING) { rng.random_range(0.0..STUDY_END) } else { STUDY_END };

        let (time, status) = if t1 <= c && t1 <= t2 {
            (t1, PRIMARY_EVENT)
        } else if t2 <= c {
            (t2, COMPETING_EVENT)
        } else {
            (c, CENSORED)
        };
        rows.push(SubjectRecord::new(time, status, x, g));
        us.push(u);
        tt.push(t1);
    }
    finish(rows, mode, us, tt, clamped)
}

/// Gaussian exposure, for the constant and time-varying effect designs.
pub fn gen_continuous(cfg: &SimConfig, seed: u64) -> SimSample {
    assert!(matches!(cfg.design, Design::Continuous | Design::ContinuousTimevarying));
    gen_gaussian(cfg, seed, false)
}

/// `X = 1(X̃ > 0.5)`, with the binary `X` in the hazard.
pub fn gen_binary(cfg: &SimConfig, seed: u64) -> SimSample {
    assert_eq!(cfg.design, Design::Binary);
    gen_gaussian(cfg, seed, true)
}

/// Gaussian instrument with a quadratic-logistic exposure model,
/// exponential event times and administrative censoring at 2.
pub fn gen_misspec(cfg: &SimConfig, seed: u64) -> SimSample {
    assert_eq!(cfg.design, Design::MisspecBinary);
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let beta = cfg.effect.constant().expect("validated");
    let mode = if cfg.competing { CauseMode::CompetingRisk } else { CauseMode::SingleCause };

    let mut rows = Vec::with_capacity(cfg.n);
    let (mut us, mut tt) = (Vec::with_capacity(cfg.n), Vec::with_capacity(cfg.n));
    let mut clamped = 0;
    for _ in 0..cfg.n {
        let g = 2.0 + 1.5 * rng.sample::<f64, _>(StandardNormal);
        let z = 1.0 + 0.25 * rng.sample::<f64, _>(StandardNormal);
        let u = 1.5 * z * z;
        let eta = -1.0 + 0.2 * g + 0.5 * g * g + u - MISSPEC_MEAN_U;
        let p = 1.0 / (1.0 + (-eta).exp());
        let x = if rng.random_bool(p) { 1.0 } else { 0.0 };
        let (t1, mut hit) = invert_piecewise_hazard(rng.sample(Exp1), &[0.0], &[0.05 + beta * x + 0.3 * u]);
        let t2 = if cfg.competing {
            let (t, h) = invert_piecewise_hazard(rng.sample(Exp1), &[0.0], &[0.2 + 0.1 * u]);
            hit |= h;
            t
        } else {
            f64::INFINITY
        };
        clamped += usize::from(hit);
        let (time, status) = if t1 <= MISSPEC_END && t1 <= t2 {
            (t1, PRIMARY_EVENT)
        } else if t2 <= MISSPEC_END {
            (t2, COMPETING_EVENT)
        } else {
            (MISSPEC_END, CENSORED)
        };
        rows.push(SubjectRecord::new(time, status, x, g));
        us.push(u);
        tt.push(t1);
    }
    finish(rows, mode, us, tt, clamped)
}

/// Dispatches on the configured design.
pub fn generate(cfg: &SimConfig, seed: u64) -> SimSample {
    match cfg.design {
        Design::Continuous | Design::ContinuousTimevarying => gen_continuous(cfg, seed),
        Design::Binary => gen_binary(cfg, seed),
        Design::MisspecBinary => gen_misspec(cfg, seed),
    }
}
