//! Instrumental-variables estimation for structural cumulative survival models.
//!
//! The exposure effect is modelled on the cumulative scale,
//! `P(T > t | X, G, L) / P(T > t | X = 0, G, L) = exp{-B_X(t) X}`, and
//! identified through an instrument `G` that is independent of the
//! unmeasured confounding given covariates `L`.

pub mod dataset;
pub mod estimators;
pub mod inference;
pub mod instrument;
pub mod simulation;
pub mod step;

pub use dataset::{load_csv, CauseMode, DatasetError, SubjectRecord, SurvivalDataset};
pub use estimators::EstimationError;
pub use inference::InferenceError;
pub use instrument::{fit_instrument_model, InstrumentError, InstrumentModelFit, InstrumentModelKind, InstrumentModelSpec};
pub use step::StepFunction;
