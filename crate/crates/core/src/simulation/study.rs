//! Replication harness.
//!
//! Replicates run independently (in parallel through rayon) and are
//! aggregated in replicate order, so a report is a pure function of the
//! configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::PRIMARY_EVENT;
use crate::estimators::{constant_effect, fit_recursive, naive_aalen, two_stage_ls, AalenDesign, FirstStage};
use crate::inference::{
    competing_risk_test, constant_effect_se, derive_seed, iid_decomposition, normal_quantile, test_constant_effect,
    variance_bands,
};
use crate::instrument::{fit_instrument_model, InstrumentModelSpec};
use crate::simulation::config::SimConfig;
use crate::simulation::generate::generate;

/// Nominal level of the sup tests whose rejection rates are reported.
pub const TEST_ALPHA: f64 = 0.05;

/// Everything kept from one replicate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateOutcome {
    pub index: usize,
    pub seed: u64,
    pub censoring_rate: f64,
    pub clamped: usize,
    /// `B̂` and its standard error at the report times.
    pub estimate: Option<Vec<f64>>,
    pub se: Option<Vec<f64>>,
    pub naive: Option<Vec<f64>>,
    pub beta: Option<f64>,
    pub beta_se: Option<f64>,
    pub two_stage_linear: Option<f64>,
    pub two_stage_logistic: Option<f64>,
    pub constant_test_p: Option<f64>,
    pub competing_test_p: Option<f64>,
    /// `(stage, error name)` for every step that failed.
    pub failures: Vec<(String, String)>,
}

pub fn run_replicate(cfg: &SimConfig, index: usize) -> ReplicateOutcome {
    let seed = derive_seed(cfg.seed, index as u64);
    let sample = generate(cfg, seed);
    let ds = &sample.dataset;
    let mut out = ReplicateOutcome {
        index,
        seed,
        censoring_rate: ds.censoring_rate(),
        clamped: sample.clamped,
        estimate: None,
        se: None,
        naive: None,
        beta: None,
        beta_se: None,
        two_stage_linear: None,
        two_stage_logistic: None,
        constant_test_p: None,
        competing_test_p: None,
        failures: Vec::new(),
    };
    let mut fail = |stage: &str, name: &str| out.failures.push((stage.to_string(), name.to_string()));

    match naive_aalen(ds, &AalenDesign::naive(), None) {
        Ok(fit) => {
            let b = fit.get("exposure").expect("exposure column present");
            out.naive = Some(cfg.report_times.iter().map(|&t| b.eval(t)).collect());
        }
        Err(e) => fail("naive", e.name()),
    }
    match two_stage_ls(ds, FirstStage::Linear, cfg.tau) {
        Ok(f) => out.two_stage_linear = Some(f.beta),
        Err(e) => fail("two_stage_linear", e.name()),
    }
    if cfg.design.binary_exposure() {
        match two_stage_ls(ds, FirstStage::Logistic, cfg.tau) {
            Ok(f) => out.two_stage_logistic = Some(f.beta),
            Err(e) => fail("two_stage_logistic", e.name()),
        }
    }

    let inst = match fit_instrument_model(ds, &InstrumentModelSpec::intercept_only()) {
        Ok(f) => f,
        Err(e) => {
            fail("instrument", e.name());
            return out;
        }
    };
    let fit = match fit_recursive(ds, &inst) {
        Ok(f) => f,
        Err(e) => {
            fail("recursive", e.name());
            return out;
        }
    };
    let dec = match iid_decomposition(&fit.trace, ds, &inst) {
        Ok(d) => d,
        Err(e) => {
            fail("iid", e.name());
            return out;
        }
    };
    let bands = variance_bands(&dec, &fit.estimate, cfg.level);
    out.estimate = Some(cfg.report_times.iter().map(|&t| fit.estimate.eval(t)).collect());
    out.se = Some(
        cfg.report_times
            .iter()
            .map(|&t| dec.column_at(t).map_or(0.0, |k| bands.se[k]))
            .collect(),
    );

    let tau = cfg.tau.min(ds.max_time());
    match constant_effect(&fit.estimate, ds, tau) {
        Ok(summary) => {
            out.beta = summary.beta();
            out.beta_se = Some(constant_effect_se(&dec, &summary));
            if cfg.m_test > 0 {
                match test_constant_effect(&fit.estimate, &summary, &dec, cfg.m_test, derive_seed(seed, 1)) {
                    Ok(r) => out.constant_test_p = Some(r.p_value),
                    Err(e) => fail("constant_test", e.name()),
                }
            }
        }
        Err(e) => fail("constant_effect", e.name()),
    }
    if cfg.competing && cfg.m_test > 0 {
        match competing_risk_test(ds, &fit.estimate, &dec, &inst, cfg.m_test, derive_seed(seed, 2)) {
            Ok(r) => out.competing_test_p = Some(r.p_value),
            Err(e) => fail("competing_test", e.name()),
        }
    }
    debug_assert!(ds.event_count(PRIMARY_EVENT) == 0 || !fit.estimate.is_empty());
    out
}

/// Mean with its spread; `sd` is `None` for fewer than two values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Moments {
    pub count: usize,
    pub mean: f64,
    pub sd: Option<f64>,
    /// Monte Carlo standard error of the mean.
    pub mcse: Option<f64>,
}

impl Moments {
    pub fn of(values: &[f64]) -> Option<Moments> {
        let count = values.len();
        if count == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / count as f64;
        let sd = (count > 1).then(|| {
            let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
            (ss / (count - 1) as f64).sqrt()
        });
        Some(Moments { count, mean, sd, mcse: sd.map(|s| s / (count as f64).sqrt()) })
    }
}

/// A proportion with its Monte Carlo standard error.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rate {
    pub count: usize,
    pub rate: f64,
    pub mcse: f64,
}

impl Rate {
    pub fn of(hits: impl Iterator<Item = bool>) -> Option<Rate> {
        let (mut count, mut k) = (0usize, 0usize);
        for h in hits {
            count += 1;
            k += usize::from(h);
        }
        (count > 0).then(|| {
            let rate = k as f64 / count as f64;
            Rate { count, rate, mcse: (rate * (1.0 - rate) / count as f64).sqrt() }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeRow {
    pub t: f64,
    pub truth: f64,
    /// Moments of `B̂(t) - B(t)`: the mean is the bias, the sd the empirical SD.
    pub bias: Option<Moments>,
    pub mean_se: Option<f64>,
    /// Pointwise coverage of `B(t)`, as a proportion.
    pub coverage: Option<Rate>,
    pub naive_bias: Option<Moments>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalarRow {
    /// `None` when the effect is not constant.
    pub truth: Option<f64>,
    pub estimate: Moments,
    pub bias: Option<f64>,
    pub mean_se: Option<f64>,
    pub coverage: Option<Rate>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimReport {
    pub schema_version: u32,
    pub config: SimConfig,
    pub replicates: usize,
    /// Replicates in which the recursive estimator succeeded.
    pub succeeded: usize,
    /// Counts keyed by `stage:ErrorName`.
    pub failures: BTreeMap<String, usize>,
    pub censoring_rate: f64,
    /// Fraction of subjects whose hazard was clamped.
    pub clamp_fraction: f64,
    pub times: Vec<TimeRow>,
    pub beta: Option<ScalarRow>,
    pub two_stage_linear: Option<ScalarRow>,
    pub two_stage_logistic: Option<ScalarRow>,
    pub constant_test_rejection: Option<Rate>,
    pub competing_test_rejection: Option<Rate>,
}

fn scalar_row(values: &[f64], truth: Option<f64>, ses: Option<&[f64]>, z: f64) -> Option<ScalarRow> {
    let estimate = Moments::of(values)?;
    let mean_se = ses.and_then(|s| Moments::of(s)).map(|m| m.mean);
    let coverage = match (truth, ses) {
        (Some(b), Some(s)) => Rate::of(values.iter().zip(s).map(|(v, se)| (v - b).abs() <= z * se)),
        _ => None,
    };
    Some(ScalarRow { truth, bias: truth.map(|b| estimate.mean - b), estimate, mean_se, coverage })
}

pub fn aggregate(cfg: &SimConfig, outcomes: &[ReplicateOutcome]) -> SimReport {
    let z = normal_quantile(cfg.level);
    let mut failures = BTreeMap::new();
    for o in outcomes {
        for (stage, name) in &o.failures {
            *failures.entry(format!("{stage}:{name}")).or_insert(0) += 1;
        }
    }
    let ok: Vec<&ReplicateOutcome> = outcomes.iter().filter(|o| o.estimate.is_some()).collect();

    let times = cfg
        .report_times
        .iter()
        .enumerate()
        .map(|(j, &t)| {
            let truth = cfg.truth(t);
            let errs: Vec<f64> = ok.iter().map(|o| o.estimate.as_ref().unwrap()[j] - truth).collect();
            let ses: Vec<f64> = ok.iter().map(|o| o.se.as_ref().unwrap()[j]).collect();
            let naive: Vec<f64> = outcomes.iter().filter_map(|o| o.naive.as_ref().map(|v| v[j] - truth)).collect();
            TimeRow {
                t,
                truth,
                bias: Moments::of(&errs),
                mean_se: Moments::of(&ses).map(|m| m.mean),
                coverage: Rate::of(errs.iter().zip(&ses).map(|(e, s)| e.abs() <= z * s)),
                naive_bias: Moments::of(&naive),
            }
        })
        .collect();

    let truth = cfg.effect.constant();
    let (betas, beta_ses): (Vec<f64>, Vec<f64>) =
        outcomes.iter().filter_map(|o| Some((o.beta?, o.beta_se?))).unzip();
    let lin: Vec<f64> = outcomes.iter().filter_map(|o| o.two_stage_linear).collect();
    let logit: Vec<f64> = outcomes.iter().filter_map(|o| o.two_stage_logistic).collect();
    let n_total = (cfg.n * outcomes.len()).max(1) as f64;

    SimReport {
        schema_version: 1,
        config: cfg.clone(),
        replicates: outcomes.len(),
        succeeded: ok.len(),
        failures,
        censoring_rate: outcomes.iter().map(|o| o.censoring_rate).sum::<f64>() / outcomes.len().max(1) as f64,
        clamp_fraction: outcomes.iter().map(|o| o.clamped as f64).sum::<f64>() / n_total,
        times,
        beta: scalar_row(&betas, truth, Some(&beta_ses), z),
        two_stage_linear: scalar_row(&lin, truth, None, z),
        two_stage_logistic: scalar_row(&logit, truth, None, z),
        constant_test_rejection: Rate::of(outcomes.iter().filter_map(|o| o.constant_test_p).map(|p| p <= TEST_ALPHA)),
        competing_test_rejection: Rate::of(outcomes.iter().filter_map(|o| o.competing_test_p).map(|p| p <= TEST_ALPHA)),
    }
}

/// Runs every replicate of `cfg` on the current rayon pool.
pub fn run_study(cfg: &SimConfig) -> SimReport {
    let outcomes: Vec<ReplicateOutcome> = (0..cfg.reps).into_par_iter().map(|r| run_replicate(cfg, r)).collect();
    aggregate(cfg, &outcomes)
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.digits$}"))
}

fn with_mcse(m: Option<&Moments>) -> String {
    match m {
        Some(m) => match m.mcse {
            Some(e) => format!("{:.3} ({:.3})", m.mean, e),
            None => format!("{:.3}", m.mean),
        },
        None => "-".into(),
    }
}

fn rate_pct(r: Option<&Rate>) -> String {
    r.map_or_else(|| "-".into(), |r| format!("{:.1} ({:.1})", 100.0 * r.rate, 100.0 * r.mcse))
}

impl SimReport {
    /// Aligned text table; Monte Carlo standard errors in parentheses.
    pub fn to_table(&self) -> String {
        let c = &self.config;
        let mut s = String::new();
        let rho = c.rho.map_or_else(|| "-".into(), |r| format!("{r}"));
        let _ = writeln!(
            s,
            "design {:?}  n {}  rho {}  reps {} ({} ok)  seed {}  censoring {:.1}%",
            c.design,
            c.n,
            rho,
            self.replicates,
            self.succeeded,
            c.seed,
            100.0 * self.censoring_rate
        );
        let _ = write!(s, "{:<22}", "");
        for row in &self.times {
            let _ = write!(s, "{:>20}", format!("t={}", row.t));
        }
        s.push('\n');
        let line = |s: &mut String, label: &str, cells: Vec<String>| {
            let _ = write!(s, "{label:<22}");
            for cell in cells {
                let _ = write!(s, "{cell:>20}");
            }
            s.push('\n');
        };
        line(&mut s, "Bias B_hat", self.times.iter().map(|r| with_mcse(r.bias.as_ref())).collect());
        line(&mut s, "sd B_hat", self.times.iter().map(|r| opt(r.bias.as_ref().and_then(|m| m.sd), 3)).collect());
        line(&mut s, "mean se B_hat", self.times.iter().map(|r| opt(r.mean_se, 3)).collect());
        line(&mut s, "CP% B_hat", self.times.iter().map(|r| rate_pct(r.coverage.as_ref())).collect());
        line(&mut s, "Bias naive Aalen", self.times.iter().map(|r| with_mcse(r.naive_bias.as_ref())).collect());

        let scalar = |s: &mut String, label: &str, row: &Option<ScalarRow>| {
            if let Some(r) = row {
                let _ = writeln!(
                    s,
                    "{label:<22}mean {}  bias {}  sd {}  mean se {}  CP% {}",
                    with_mcse(Some(&r.estimate)),
                    opt(r.bias, 3),
                    opt(r.estimate.sd, 3),
                    opt(r.mean_se, 3),
                    rate_pct(r.coverage.as_ref())
                );
            }
        };
        scalar(&mut s, "beta_hat", &self.beta);
        scalar(&mut s, "2SLS linear", &self.two_stage_linear);
        scalar(&mut s, "2SLS logistic", &self.two_stage_logistic);
        if let Some(r) = &self.constant_test_rejection {
            let _ = writeln!(s, "{:<22}{}", "constant test reject%", rate_pct(Some(r)));
        }
        if let Some(r) = &self.competing_test_rejection {
            let _ = writeln!(s, "{:<22}{}", "competing test reject%", rate_pct(Some(r)));
        }
        if !self.failures.is_empty() {
            let _ = writeln!(s, "failures: {:?}", self.failures);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulation::config::Design;

    #[test]
    fn single_replicate_has_no_sd() {
        let cfg = SimConfig::new(Design::Continuous, 400, Some(0.5), 1, 3).unwrap();
        let r = run_study(&cfg);
        assert_eq!(r.replicates, 1);
        assert!(r.times.iter().all(|t| t.bias.as_ref().unwrap().sd.is_none()));
        assert!(r.to_table().contains("Bias B_hat"));
    }

    #[test]
    fn moments_and_rates() {
        let m = Moments::of(&[1.0, 3.0]).unwrap();
        assert_eq!(m.mean, 2.0);
        assert!((m.sd.unwrap() - 2f64.sqrt()).abs() < 1e-15);
        let r = Rate::of([true, false, true, true].into_iter()).unwrap();
        assert_eq!(r.rate, 0.75);
        assert!(Moments::of(&[]).is_none());
    }
}
