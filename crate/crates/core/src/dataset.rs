//! Survival datasets and counting-process primitives.
//!
//! A [`SurvivalDataset`] is an immutable collection of [`SubjectRecord`]s. The
//! [`EventGrid`] built from it indexes the distinct event times of one cause
//! together with the at-risk sets `{i : T_i >= t_k}`.
//!
//! Subjects are kept in input order, but every estimator walks them in a
//! canonical order (sorted by time, status, exposure, instrument, covariates
//! and finally input row). Permuting input rows therefore leaves every
//! floating-point sum, and hence every estimate, unchanged.

use std::cmp::Ordering;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Fixed leading CSV columns.
pub const REQUIRED_COLUMNS: [&str; 4] = ["time", "status", "exposure", "instrument"];

/// Status code of a censored observation.
pub const CENSORED: u8 = 0;
/// Status code of the event of interest.
pub const PRIMARY_EVENT: u8 = 1;
/// Status code of a competing event.
pub const COMPETING_EVENT: u8 = 2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DatasetError {
    /// Header is missing one of the fixed columns, or has it out of place.
    #[error("missing or misplaced column `{0}`")]
    MissingColumn(String),

    #[error("row {row}: status {status} is not allowed in {mode} mode")]
    BadStatusCode { row: usize, status: i64, mode: &'static str },

    #[error("row {row}, column `{column}`: value is not finite")]
    NonFiniteValue { row: usize, column: String },

    #[error("row {row}, column `{column}`: cannot parse `{value}`")]
    ParseError { row: usize, column: String, value: String },

    #[error("row {row}: expected {expected} fields, found {found}")]
    RaggedRow { row: usize, expected: usize, found: usize },

    #[error("row {row}: negative follow-up time")]
    NegativeTime { row: usize },

    /// Events at exactly zero make the at-risk indicator ill-defined.
    #[error("row {row}: event recorded at time zero")]
    EventAtTimeZero { row: usize },

    #[error("dataset has no subjects")]
    Empty,

    #[error("no events with cause {cause}")]
    NoEvents { cause: u8 },

    #[error("covariate `{0}` not found")]
    UnknownCovariate(String),

    #[error("csv: {0}")]
    Csv(String),
}

impl DatasetError {
    pub fn name(&self) -> &'static str {
        match self {
            DatasetError::MissingColumn(_) => "MissingColumn",
            DatasetError::BadStatusCode { .. } => "BadStatusCode",
            DatasetError::NonFiniteValue { .. } => "NonFiniteValue",
            DatasetError::ParseError { .. } => "ParseError",
            DatasetError::RaggedRow { .. } => "RaggedRow",
            DatasetError::NegativeTime { .. } => "NegativeTime",
            DatasetError::EventAtTimeZero { .. } => "EventAtTimeZero",
            DatasetError::Empty => "Empty",
            DatasetError::NoEvents { .. } => "NoEvents",
            DatasetError::UnknownCovariate(_) => "UnknownCovariate",
            DatasetError::Csv(_) => "Csv",
        }
    }
}

/// Whether status code 2 (competing event) is admissible.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CauseMode {
    #[default]
    SingleCause,
    CompetingRisk,
}

impl CauseMode {
    fn label(self) -> &'static str {
        match self {
            CauseMode::SingleCause => "single-cause",
            CauseMode::CompetingRisk => "competing-risk",
        }
    }

    fn allows(self, status: i64) -> bool {
        match self {
            CauseMode::SingleCause => status == 0 || status == 1,
            CauseMode::CompetingRisk => (0..=2).contains(&status),
        }
    }
}

/// One observation `(T, status, X, G, L)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    /// Follow-up time `T = min(T~, C)`.
    pub time: f64,
    /// 0 = censored, 1 = event of interest, 2 = competing event.
    pub status: u8,
    pub exposure: f64,
    pub instrument: f64,
    pub covariates: Vec<f64>,
}

impl SubjectRecord {
    pub fn new(time: f64, status: u8, exposure: f64, instrument: f64) -> Self {
        SubjectRecord { time, status, exposure, instrument, covariates: Vec::new() }
    }

    pub fn with_covariates(mut self, covariates: Vec<f64>) -> Self {
        self.covariates = covariates;
        self
    }

    fn canonical_cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.status.cmp(&other.status))
            .then(self.exposure.total_cmp(&other.exposure))
            .then(self.instrument.total_cmp(&other.instrument))
            .then_with(|| {
                for (a, b) in self.covariates.iter().zip(&other.covariates) {
                    match a.total_cmp(b) {
                        Ordering::Equal => continue,
                        ord => return ord,
                    }
                }
                Ordering::Equal
            })
    }
}

/// Validated, immutable survival dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalDataset {
    subjects: Vec<SubjectRecord>,
    covariate_names: Vec<String>,
    cause_mode: CauseMode,
    order: Vec<usize>,
}

impl SurvivalDataset {
    /// Validates the records and builds the canonical ordering.
    ///
    /// Rows are numbered from 1 in error messages, matching data rows of a CSV file.
    pub fn new(
        subjects: Vec<SubjectRecord>,
        covariate_names: Vec<String>,
        cause_mode: CauseMode,
    ) -> Result<Self, DatasetError> {
        if subjects.is_empty() {
            return Err(DatasetError::Empty);
        }
        let p = covariate_names.len();
        for (idx, s) in subjects.iter().enumerate() {
            let row = idx + 1;
            if s.covariates.len() != p {
                return Err(DatasetError::RaggedRow {
                    row,
                    expected: REQUIRED_COLUMNS.len() + p,
                    found: REQUIRED_COLUMNS.len() + s.covariates.len(),
                });
            }
            let checks = [("time", s.time), ("exposure", s.exposure), ("instrument", s.instrument)];
            for (column, value) in checks {
                if !value.is_finite() {
                    return Err(DatasetError::NonFiniteValue { row, column: column.to_string() });
                }
            }
            for (value, name) in s.covariates.iter().zip(&covariate_names) {
                if !value.is_finite() {
                    return Err(DatasetError::NonFiniteValue { row, column: name.clone() });
                }
            }
            if !cause_mode.allows(i64::from(s.status)) {
                return Err(DatasetError::BadStatusCode {
                    row,
                    status: i64::from(s.status),
                    mode: cause_mode.label(),
                });
            }
            if s.time < 0.0 {
                return Err(DatasetError::NegativeTime { row });
            }
            if s.time == 0.0 && s.status != CENSORED {
                return Err(DatasetError::EventAtTimeZero { row });
            }
        }

        let mut order: Vec<usize> = (0..subjects.len()).collect();
        // stable sort: exact duplicates keep input order, which cannot change any sum
        order.sort_by(|&a, &b| subjects[a].canonical_cmp(&subjects[b]));

        Ok(SurvivalDataset { subjects, covariate_names, cause_mode, order })
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    pub fn subjects(&self) -> &[SubjectRecord] {
        &self.subjects
    }

    pub fn subject(&self, i: usize) -> &SubjectRecord {
        &self.subjects[i]
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn cause_mode(&self) -> CauseMode {
        self.cause_mode
    }

    /// Subject indices in canonical order.
    pub fn canonical_order(&self) -> &[usize] {
        &self.order
    }

    /// `ranks[i]` is the position of subject `i` in the canonical order.
    pub fn canonical_ranks(&self) -> Vec<usize> {
        let mut ranks = vec![0; self.order.len()];
        for (pos, &i) in self.order.iter().enumerate() {
            ranks[i] = pos;
        }
        ranks
    }

    pub fn covariate_index(&self, name: &str) -> Result<usize, DatasetError> {
        self.covariate_names
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| DatasetError::UnknownCovariate(name.to_string()))
    }

    pub fn max_time(&self) -> f64 {
        self.subjects.iter().map(|s| s.time).fold(0.0, f64::max)
    }

    pub fn event_count(&self, cause: u8) -> usize {
        self.subjects.iter().filter(|s| s.status == cause).count()
    }

    /// Fraction of subjects with status 0.
    pub fn censoring_rate(&self) -> f64 {
        self.event_count(CENSORED) as f64 / self.len() as f64
    }

    /// Number at risk at `t`, i.e. `#{i : T_i >= t}`.
    pub fn at_risk_count(&self, t: f64) -> usize {
        let first = self.order.partition_point(|&i| self.subjects[i].time < t);
        self.order.len() - first
    }

    /// `∫_0^upper R.(s) ds`, which equals `Σ_i min(T_i, upper)`.
    pub fn risk_integral(&self, upper: f64) -> f64 {
        self.order.iter().map(|&i| self.subjects[i].time.min(upper)).sum()
    }

    /// Builds the event grid for status code `cause`.
    pub fn event_grid(&self, cause: u8) -> Result<EventGrid, DatasetError> {
        EventGrid::build(self, cause)
    }

    /// Writes the dataset in the CSV layout accepted by [`load_csv`].
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), DatasetError> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = REQUIRED_COLUMNS.to_vec();
        header.extend(self.covariate_names.iter().map(String::as_str));
        w.write_record(&header).map_err(|e| DatasetError::Csv(e.to_string()))?;
        for s in &self.subjects {
            let mut rec = vec![
                s.time.to_string(),
                s.status.to_string(),
                s.exposure.to_string(),
                s.instrument.to_string(),
            ];
            rec.extend(s.covariates.iter().map(f64::to_string));
            w.write_record(&rec).map_err(|e| DatasetError::Csv(e.to_string()))?;
        }
        w.flush().map_err(|e| DatasetError::Csv(e.to_string()))
    }
}

/// Parses a comma-separated dataset with header
/// `time,status,exposure,instrument[,covariates...]`.
pub fn load_csv<R: Read>(source: R, cause_mode: CauseMode) -> Result<SurvivalDataset, DatasetError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let header = reader.headers().map_err(|e| DatasetError::Csv(e.to_string()))?.clone();
    for (pos, name) in REQUIRED_COLUMNS.iter().enumerate() {
        if header.get(pos) != Some(*name) {
            return Err(DatasetError::MissingColumn((*name).to_string()));
        }
    }
    let covariate_names: Vec<String> =
        header.iter().skip(REQUIRED_COLUMNS.len()).map(str::to_string).collect();
    let width = header.len();

    let mut subjects = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| DatasetError::Csv(e.to_string()))?;
        let row = idx + 1;
        if record.iter().all(str::is_empty) {
            continue;
        }
        if record.len() != width {
            return Err(DatasetError::RaggedRow { row, expected: width, found: record.len() });
        }
        let real = |pos: usize| -> Result<f64, DatasetError> {
            let raw = &record[pos];
            let column = header[pos].to_string();
            let value: f64 = raw.parse().map_err(|_| DatasetError::ParseError {
                row,
                column: column.clone(),
                value: raw.to_string(),
            })?;
            if value.is_finite() {
                Ok(value)
            } else {
                Err(DatasetError::NonFiniteValue { row, column })
            }
        };
        let status: i64 = record[1].parse().map_err(|_| DatasetError::ParseError {
            row,
            column: "status".into(),
            value: record[1].to_string(),
        })?;
        if !cause_mode.allows(status) {
            return Err(DatasetError::BadStatusCode { row, status, mode: cause_mode.label() });
        }
        let covariates = (REQUIRED_COLUMNS.len()..width).map(real).collect::<Result<Vec<_>, _>>()?;
        subjects.push(SubjectRecord {
            time: real(0)?,
            status: status as u8,
            exposure: real(2)?,
            instrument: real(3)?,
            covariates,
        });
    }
    SurvivalDataset::new(subjects, covariate_names, cause_mode)
}

/// Distinct event times of one cause with their event and at-risk sets.
///
/// Risk sets are suffixes of the canonical order, so they are stored as start
/// offsets rather than explicit index lists.
#[derive(Debug, Clone, PartialEq)]
pub struct EventGrid {
    cause: u8,
    times: Vec<f64>,
    order: Vec<usize>,
    event_ranges: Vec<(usize, usize)>,
    risk_start: Vec<usize>,
}

impl EventGrid {
    fn build(ds: &SurvivalDataset, cause: u8) -> Result<Self, DatasetError> {
        let order = ds.canonical_order().to_vec();
        let mut times = Vec::new();
        let mut event_ranges = Vec::new();
        let mut risk_start = Vec::new();

        let mut pos = 0;
        while pos < order.len() {
            let t = ds.subjects[order[pos]].time;
            // first subject with time t: everything from here on is at risk at t
            let tie_start = pos;
            let mut end = pos;
            while end < order.len() && ds.subjects[order[end]].time == t {
                end += 1;
            }
            // within a tied time, subjects are sorted by status, so events of
            // one cause are contiguous
            let ev_start = (tie_start..end).find(|&p| ds.subjects[order[p]].status == cause);
            if let Some(s) = ev_start {
                let mut e = s;
                while e < end && ds.subjects[order[e]].status == cause {
                    e += 1;
                }
                times.push(t);
                event_ranges.push((s, e));
                risk_start.push(tie_start);
            }
            pos = end;
        }
        if times.is_empty() {
            return Err(DatasetError::NoEvents { cause });
        }
        Ok(EventGrid { cause, times, order, event_ranges, risk_start })
    }

    pub fn cause(&self) -> u8 {
        self.cause
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Subjects with an event of this cause at `times()[k]`.
    pub fn events(&self, k: usize) -> &[usize] {
        let (s, e) = self.event_ranges[k];
        &self.order[s..e]
    }

    /// Subjects with `T_i >= times()[k]`.
    pub fn at_risk(&self, k: usize) -> &[usize] {
        &self.order[self.risk_start[k]..]
    }

    pub fn at_risk_count(&self, k: usize) -> usize {
        self.order.len() - self.risk_start[k]
    }
}
