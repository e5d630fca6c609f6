//! Influence decomposition, pointwise variance and resampling tests.

pub mod bands;
pub mod iid;
pub mod multiplier;
pub mod sup_test;

use thiserror::Error;

pub use bands::{normal_quantile, variance_bands, VarianceBands, DEFAULT_LEVEL};
pub use iid::{iid_decomposition, IidDecomposition};
pub use multiplier::{derive_seed, multiplier_processes, multiplier_sups, DEFAULT_DRAWS};
pub use sup_test::{
    competing_influence, competing_risk_test, constant_effect_se, piecewise_effect_se, test_causal_null, test_constant_effect,
    test_piecewise_gof, TestKind, TestReport,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InferenceError {
    /// The trace does not come from a fit on this dataset.
    #[error("recursion trace does not match the dataset's event grid")]
    TraceMismatch,

    #[error("no grid times in the supremum window t <= {upper}")]
    EmptyWindow { upper: f64 },

    #[error("competing-risk test needs competing-risk cause mode")]
    NoCompetingEvents,

    #[error("competing-risk test supports only the intercept-only instrument model")]
    CovariateInstrumentModel,

    #[error("effect summary has the wrong form for this test")]
    WrongEffectKind,

    #[error("number of multiplier draws must be at least 1")]
    NoDraws,
}

impl InferenceError {
    pub fn name(&self) -> &'static str {
        match self {
            InferenceError::TraceMismatch => "TraceMismatch",
            InferenceError::EmptyWindow { .. } => "EmptyWindow",
            InferenceError::NoCompetingEvents => "NoCompetingEvents",
            InferenceError::CovariateInstrumentModel => "CovariateInstrumentModel",
            InferenceError::WrongEffectKind => "WrongEffectKind",
            InferenceError::NoDraws => "NoDraws",
        }
    }
}
