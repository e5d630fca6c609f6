//! Study configuration.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Design {
    /// Gaussian exposure, binary instrument, constant effect.
    Continuous,
    /// As `Continuous` with a sign-changing effect.
    ContinuousTimevarying,
    /// Dichotomised Gaussian exposure.
    Binary,
    /// Binary exposure whose dependence on a Gaussian instrument is not
    /// linear or logistic in `G`.
    MisspecBinary,
}

impl Design {
    pub fn binary_exposure(self) -> bool {
        matches!(self, Design::Binary | Design::MisspecBinary)
    }

    fn default_effect(self) -> Effect {
        match self {
            Design::Continuous | Design::Binary => Effect::Constant(0.1),
            Design::ContinuousTimevarying => {
                Effect::Piecewise { starts: vec![0.0, 1.5, 3.0], values: vec![0.1, -0.1, 0.0] }
            }
            Design::MisspecBinary => Effect::Constant(0.4),
        }
    }

    fn default_tau(self) -> f64 {
        match self {
            Design::MisspecBinary => 2.0,
            _ => 3.0,
        }
    }

    fn default_report_times(self) -> Vec<f64> {
        match self {
            Design::MisspecBinary => vec![0.5, 1.0, 1.5, 2.0],
            _ => vec![1.0, 2.0, 3.0],
        }
    }
}

/// Exposure coefficient `β_X(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Effect {
    Constant(f64),
    /// `β_X(t) = values[j]` on `[starts[j], starts[j+1])`; the last value
    /// holds from its start onwards.
    Piecewise { starts: Vec<f64>, values: Vec<f64> },
}

impl Effect {
    /// Breakpoints and levels, with the first piece starting at 0.
    pub fn pieces(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            Effect::Constant(b) => (vec![0.0], vec![*b]),
            Effect::Piecewise { starts, values } => (starts.clone(), values.clone()),
        }
    }

    pub fn constant(&self) -> Option<f64> {
        match self {
            Effect::Constant(b) => Some(*b),
            Effect::Piecewise { .. } => None,
        }
    }

    /// `B_X(t) = ∫_0^t β_X(s) ds`.
    pub fn cumulative(&self, t: f64) -> f64 {
        let (starts, values) = self.pieces();
        let mut acc = 0.0;
        for j in 0..starts.len() {
            let lo = starts[j];
            let hi = starts.get(j + 1).copied().unwrap_or(f64::INFINITY).min(t);
            if hi > lo {
                acc += values[j] * (hi - lo);
            }
        }
        acc
    }
}

/// Raw configuration as read from JSON; unset fields take design defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfigFile {
    pub design: Design,
    pub n: usize,
    #[serde(default)]
    pub rho: Option<f64>,
    #[serde(default)]
    pub effect: Option<Effect>,
    pub reps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tau: Option<f64>,
    /// Multiplier draws for the constant-effect test; 0 skips the test.
    #[serde(default, alias = "M_test")]
    pub m_test: usize,
    /// Adds an exposure-free competing cause with hazard `0.2 + 0.1 U`.
    #[serde(default)]
    pub competing: bool,
    #[serde(default)]
    pub report_times: Option<Vec<f64>>,
    #[serde(default)]
    pub level: Option<f64>,
}

/// Validated configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimConfig {
    pub design: Design,
    pub n: usize,
    pub rho: Option<f64>,
    pub effect: Effect,
    pub reps: usize,
    pub seed: u64,
    pub tau: f64,
    pub m_test: usize,
    pub competing: bool,
    pub report_times: Vec<f64>,
    pub level: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    /// JSON that does not fit the schema, with the offending field path.
    #[error("config field `{path}`: {message}")]
    Schema { path: String, message: String },

    #[error("config field `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
}

impl ConfigError {
    pub fn name(&self) -> &'static str {
        match self {
            ConfigError::Schema { .. } => "ConfigSchema",
            ConfigError::Invalid { .. } => "InvalidConfig",
        }
    }
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field, reason: reason.into() }
}

impl SimConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let raw: SimConfigFile = serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Schema {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        raw.validate()
    }

    /// Configuration with every optional field at its design default.
    pub fn new(design: Design, n: usize, rho: Option<f64>, reps: usize, seed: u64) -> Result<Self, ConfigError> {
        SimConfigFile {
            design,
            n,
            rho,
            effect: None,
            reps,
            seed,
            tau: None,
            m_test: 0,
            competing: false,
            report_times: None,
            level: None,
        }
        .validate()
    }

    /// True exposure effect at `t`.
    pub fn truth(&self, t: f64) -> f64 {
        self.effect.cumulative(t)
    }
}

impl SimConfigFile {
    pub fn validate(self) -> Result<SimConfig, ConfigError> {
        if self.n < 2 {
            return Err(invalid("n", "must be at least 2"));
        }
        if self.reps < 1 {
            return Err(invalid("reps", "must be at least 1"));
        }
        let rho = match (self.design, self.rho) {
            (Design::MisspecBinary, None) => None,
            (Design::MisspecBinary, Some(_)) => return Err(invalid("rho", "not used by the misspec-binary design")),
            (_, None) => return Err(invalid("rho", "required for this design")),
            (_, Some(r)) if !(r > 0.0 && r < 1.0) => return Err(invalid("rho", "must lie in (0, 1)")),
            (_, Some(r)) => Some(r),
        };
        let effect = self.effect.unwrap_or_else(|| self.design.default_effect());
        if let Effect::Piecewise { starts, values } = &effect {
            if starts.is_empty() || starts.len() != values.len() {
                return Err(invalid("effect", "starts and values must be nonempty and of equal length"));
            }
            if starts[0] != 0.0 || starts.windows(2).any(|w| w[0] >= w[1]) {
                return Err(invalid("effect", "starts must begin at 0 and increase strictly"));
            }
        }
        if self.design == Design::MisspecBinary && effect.constant().is_none() {
            return Err(invalid("effect", "misspec-binary design needs a constant effect"));
        }
        let tau = self.tau.unwrap_or_else(|| self.design.default_tau());
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(invalid("tau", "must be positive"));
        }
        let report_times = self.report_times.unwrap_or_else(|| self.design.default_report_times());
        if report_times.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return Err(invalid("report_times", "must be positive"));
        }
        let level = self.level.unwrap_or(0.95);
        if !(level > 0.0 && level < 1.0) {
            return Err(invalid("level", "must lie in (0, 1)"));
        }
        Ok(SimConfig {
            design: self.design,
            n: self.n,
            rho,
            effect,
            reps: self.reps,
            seed: self.seed,
            tau,
            m_test: self.m_test,
            competing: self.competing,
            report_times,
            level,
        })
    }
}
