//! Point estimators of the exposure effect.

pub mod aalen;
pub mod effect;
pub mod recursive;
pub mod two_stage;
pub mod volterra;

use thiserror::Error;

use crate::dataset::DatasetError;
use crate::instrument::InstrumentError;

pub use aalen::{naive_aalen, AalenDesign, AalenFit};
pub use effect::{constant_effect, piecewise_effect, EffectKind, EffectSummary};
pub use recursive::{fit_recursive, RecursionTrace, RecursiveFit, DEN_THRESHOLD};
pub use two_stage::{lin_ying, two_stage, two_stage_ls, FirstStage, SecondStage, TwoStageFit};
pub use volterra::{fit_volterra_binary, VolterraFit};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimationError {
    /// The instrument barely moves the exposure among those still at risk.
    #[error("weak instrument at t = {time}: |den|/n = {scaled_denominator:e}")]
    WeakInstrument { time: f64, scaled_denominator: f64 },

    #[error("estimate became non-finite at t = {time}")]
    NonFiniteEstimate { time: f64 },

    #[error("row {row}: exposure must be 0 or 1")]
    NonBinaryExposure { row: usize },

    #[error("survival ratio is not positive at t = {time}")]
    NonPositiveSurvivalRatio { time: f64 },

    #[error("tau = {tau} must lie in (0, {max_time}]")]
    InvalidTau { tau: f64, max_time: f64 },

    #[error("no jumps of the estimate in [{lower}, {upper}]")]
    NoJumpsInWindow { lower: f64, upper: f64 },

    #[error("window {window} ([{lower}, {upper}]) contains no jumps")]
    EmptyWindow { window: usize, lower: f64, upper: f64 },

    #[error("changepoint {xi} must lie in (0, {tau})")]
    InvalidChangepoint { xi: f64, tau: f64 },

    #[error("risk-set design is singular at t = {time}")]
    RankDeficientRiskSet { time: f64 },

    /// The first-stage prediction does not vary.
    #[error("first-stage fitted exposure is constant")]
    DegenerateFirstStage,

    #[error("second-stage information matrix is singular")]
    SingularSecondStage,

    #[error("first stage: {0}")]
    FirstStage(InstrumentError),

    #[error(transparent)]
    Dataset(#[from] DatasetError),

    #[error(transparent)]
    Instrument(#[from] InstrumentError),
}

impl EstimationError {
    pub fn name(&self) -> &'static str {
        match self {
            EstimationError::WeakInstrument { .. } => "WeakInstrument",
            EstimationError::NonFiniteEstimate { .. } => "NonFiniteEstimate",
            EstimationError::NonBinaryExposure { .. } => "NonBinaryExposure",
            EstimationError::NonPositiveSurvivalRatio { .. } => "NonPositiveSurvivalRatio",
            EstimationError::InvalidTau { .. } => "InvalidTau",
            EstimationError::NoJumpsInWindow { .. } => "NoJumpsInWindow",
            EstimationError::EmptyWindow { .. } => "EmptyWindow",
            EstimationError::InvalidChangepoint { .. } => "InvalidChangepoint",
            EstimationError::RankDeficientRiskSet { .. } => "RankDeficientRiskSet",
            EstimationError::DegenerateFirstStage => "DegenerateFirstStage",
            EstimationError::SingularSecondStage => "SingularSecondStage",
            EstimationError::FirstStage(e) => e.name(),
            EstimationError::Dataset(e) => e.name(),
            EstimationError::Instrument(e) => e.name(),
        }
    }

    /// Numerical or conditioning failures, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            EstimationError::WeakInstrument { .. }
                | EstimationError::NonFiniteEstimate { .. }
                | EstimationError::NonPositiveSurvivalRatio { .. }
                | EstimationError::RankDeficientRiskSet { .. }
                | EstimationError::SingularSecondStage
                | EstimationError::FirstStage(InstrumentError::LogisticNoConvergence { .. })
                | EstimationError::Instrument(InstrumentError::LogisticNoConvergence { .. })
        )
    }
}
