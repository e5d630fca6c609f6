use std::fs::File;
use std::io::{self, Write};
use std::path::Path;

use scsm_core::dataset::PRIMARY_EVENT;
use scsm_core::estimators::{constant_effect, fit_recursive, piecewise_effect, EffectKind, RecursiveFit};
use scsm_core::inference::{
    competing_risk_test, constant_effect_se, iid_decomposition, piecewise_effect_se, test_causal_null,
    test_constant_effect, test_piecewise_gof, variance_bands, IidDecomposition, TestReport,
};
use scsm_core::simulation::{run_study, SimConfig};
use scsm_core::{fit_instrument_model, load_csv, CauseMode, InstrumentModelFit, InstrumentModelSpec, SurvivalDataset};
use serde::Serialize;

use crate::error::CliError;
use crate::{CauseModeArg, DataArgs, FitArgs, Format, SimulateArgs, TestArg, TestArgs};

/// Version of the JSON layouts written by this tool.
pub const SCHEMA_VERSION: u32 = 1;

struct Fitted {
    ds: SurvivalDataset,
    inst: InstrumentModelFit,
    fit: RecursiveFit,
    dec: IidDecomposition,
    tau: f64,
    notes: Vec<String>,
}

fn load(args: &DataArgs) -> Result<Fitted, CliError> {
    let mode = match args.cause_mode {
        CauseModeArg::Single => CauseMode::SingleCause,
        CauseModeArg::Competing => CauseMode::CompetingRisk,
    };
    let file = File::open(&args.data).map_err(|e| CliError::io(&args.data, e))?;
    let ds = load_csv(file, mode)?;
    let spec = InstrumentModelSpec { kind: args.instrument_model.into(), covariates: args.instrument_covariates.clone() };
    let inst = fit_instrument_model(&ds, &spec)?;
    let fit = fit_recursive(&ds, &inst)?;
    let dec = iid_decomposition(&fit.trace, &ds, &inst)?;
    let mut notes = Vec::new();
    if fit.estimate.is_empty() {
        notes.push("NoEvents: no cause-1 events, the estimate is identically zero".to_string());
    }
    let tau = args.tau.unwrap_or_else(|| fit.estimate.grid().last().copied().unwrap_or(0.0));
    Ok(Fitted { ds, inst, fit, dec, tau, notes })
}

fn write_output(out: Option<&Path>, body: &[u8]) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, body).map_err(|e| CliError::io(path, e)),
        None => io::stdout().write_all(body).map_err(|e| CliError::io(Path::new("<stdout>"), e)),
    }
}

fn to_json(value: &impl Serialize) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("output types serialize");
    v.push(b'\n');
    v
}

#[derive(Debug, Serialize)]
pub struct ConstantOutput {
    pub tau: f64,
    pub beta: f64,
    pub se: f64,
}

#[derive(Debug, Serialize)]
pub struct PiecewiseOutput {
    pub tau: f64,
    pub changepoint: f64,
    pub beta0: f64,
    pub se0: f64,
    pub beta1: f64,
    pub se1: f64,
}

#[derive(Debug, Serialize)]
pub struct Diagnostics {
    pub n: usize,
    pub events: usize,
    pub censoring_rate: f64,
    /// `min_k |den_k| / n`; small values flag a weak instrument.
    pub min_scaled_denominator: Option<f64>,
    pub instrument_model: String,
    pub theta_hat: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct FitOutput {
    pub schema_version: u32,
    pub level: f64,
    pub times: Vec<f64>,
    pub estimate: Vec<f64>,
    pub se: Vec<f64>,
    pub ci_lo: Vec<f64>,
    pub ci_hi: Vec<f64>,
    /// `exp(B̂)`.
    pub survival_ratio: Vec<f64>,
    pub constant_effect: Option<ConstantOutput>,
    pub piecewise_effect: Option<PiecewiseOutput>,
    pub diagnostics: Diagnostics,
    pub notes: Vec<String>,
}

#[derive(Serialize)]
struct CsvRow {
    time: f64,
    estimate: f64,
    se: f64,
    ci_lo: f64,
    ci_hi: f64,
    survival_ratio: f64,
}

pub fn fit(args: &FitArgs) -> Result<(), CliError> {
    if !(args.level > 0.0 && args.level < 1.0) {
        return Err(CliError::Usage(format!("--level {} must lie in (0, 1)", args.level)));
    }
    let Fitted { ds, inst, fit, dec, tau, mut notes } = load(&args.data)?;
    let bands = variance_bands(&dec, &fit.estimate, args.level);
    let has_events = !fit.estimate.is_empty();

    let constant = if args.constant_effect && has_events {
        let s = constant_effect(&fit.estimate, &ds, tau)?;
        Some(ConstantOutput { tau, beta: s.beta().expect("constant summary"), se: constant_effect_se(&dec, &s) })
    } else {
        None
    };
    let piecewise = match args.xi {
        Some(xi) if has_events => {
            let s = piecewise_effect(&fit.estimate, &ds, xi, tau)?;
            let (se0, se1) = piecewise_effect_se(&dec, &s)?;
            let EffectKind::Piecewise { beta0, beta1, .. } = s.kind else { unreachable!() };
            Some(PiecewiseOutput { tau, changepoint: xi, beta0, se0, beta1, se1 })
        }
        _ => None,
    };
    if !has_events && (args.constant_effect || args.xi.is_some()) {
        notes.push("effect summaries skipped: no events".to_string());
    }

    let output = FitOutput {
        schema_version: SCHEMA_VERSION,
        level: args.level,
        times: bands.times.clone(),
        estimate: fit.estimate.values().to_vec(),
        se: bands.se.clone(),
        ci_lo: bands.ci_lo.clone(),
        ci_hi: bands.ci_hi.clone(),
        survival_ratio: fit.estimate.values().iter().map(|b| b.exp()).collect(),
        constant_effect: constant,
        piecewise_effect: piecewise,
        diagnostics: Diagnostics {
            n: ds.len(),
            events: ds.event_count(PRIMARY_EVENT),
            censoring_rate: ds.censoring_rate(),
            min_scaled_denominator: fit.trace.min_scaled_denominator(),
            instrument_model: format!("{:?}", inst.kind()),
            theta_hat: inst.theta_hat().to_vec(),
        },
        notes,
    };

    let body = match args.format {
        Format::Json => to_json(&output),
        Format::Csv => {
            let mut w = csv_writer();
            for k in 0..output.times.len() {
                w.serialize(CsvRow {
                    time: output.times[k],
                    estimate: output.estimate[k],
                    se: output.se[k],
                    ci_lo: output.ci_lo[k],
                    ci_hi: output.ci_hi[k],
                    survival_ratio: output.survival_ratio[k],
                })
                .expect("writing to memory");
            }
            w.into_inner().expect("writing to memory")
        }
    };
    write_output(args.data.out.as_deref(), &body)
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::Writer::from_writer(Vec::new())
}

#[derive(Debug, Serialize)]
pub struct TestOutput {
    pub schema_version: u32,
    #[serde(flatten)]
    pub report: TestReport,
    pub notes: Vec<String>,
}

pub fn test(args: &TestArgs) -> Result<(), CliError> {
    let Fitted { ds, inst, fit, dec, tau, notes } = load(&args.data)?;
    let has_events = !fit.estimate.is_empty();
    let report = match args.test {
        TestArg::CausalNull => test_causal_null(&fit.estimate, &dec, args.draws, args.seed)?,
        TestArg::Constant => {
            if !has_events {
                test_causal_null(&fit.estimate, &dec, args.draws, args.seed)
                    .map(|r| TestReport { test: scsm_core::inference::TestKind::ConstantEffect, ..r })?
            } else {
                let s = constant_effect(&fit.estimate, &ds, tau)?;
                test_constant_effect(&fit.estimate, &s, &dec, args.draws, args.seed)?
            }
        }
        TestArg::Piecewise => {
            let xi = args.xi.ok_or_else(|| CliError::Usage("--xi is required for the piecewise test".into()))?;
            let s = piecewise_effect(&fit.estimate, &ds, xi, tau)?;
            test_piecewise_gof(&fit.estimate, &s, &dec, args.draws, args.seed, args.sup_window)?
        }
        TestArg::CompetingRisk => competing_risk_test(&ds, &fit.estimate, &dec, &inst, args.draws, args.seed)?,
    };
    write_output(args.data.out.as_deref(), &to_json(&TestOutput { schema_version: SCHEMA_VERSION, report, notes }))
}

pub fn simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            SimConfig::from_json(&text)?
        }
        None => {
            let design = args.design.as_deref().ok_or_else(|| CliError::Usage("give --config or --design".into()))?;
            let inline = serde_json::json!({
                "design": design,
                "n": args.n.ok_or_else(|| CliError::Usage("--n is required without --config".into()))?,
                "rho": args.rho,
                "reps": args.reps.unwrap_or(1),
                "m_test": args.m_test.unwrap_or(0),
            });
            SimConfig::from_json(&inline.to_string())?
        }
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let report = run_study(&cfg);
    let table = report.to_table();
    if let Some(path) = &args.table {
        std::fs::write(path, &table).map_err(|e| CliError::io(path, e))?;
    }
    let json = to_json(&report);
    match &args.out {
        Some(path) => {
            std::fs::write(path, json).map_err(|e| CliError::io(path, e))?;
            print!("{table}");
            Ok(())
        }
        None => {
            eprint!("{table}");
            write_output(None, &json)
        }
    }
}
