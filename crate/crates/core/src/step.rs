use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StepError {
    #[error("grid and values differ in length ({grid} vs {values})")]
    LengthMismatch { grid: usize, values: usize },
    #[error("grid is not strictly increasing at position {0}")]
    NotIncreasing(usize),
}

/// Right-continuous piecewise-constant function, zero before its first grid point.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StepFunction {
    grid: Vec<f64>,
    values: Vec<f64>,
}

impl StepFunction {
    pub fn new(grid: Vec<f64>, values: Vec<f64>) -> Result<Self, StepError> {
        if grid.len() != values.len() {
            return Err(StepError::LengthMismatch { grid: grid.len(), values: values.len() });
        }
        if let Some(pos) = grid.windows(2).position(|w| !(w[0] < w[1])) {
            return Err(StepError::NotIncreasing(pos + 1));
        }
        Ok(StepFunction { grid, values })
    }

    /// Identically zero.
    pub fn zero() -> Self {
        StepFunction::default()
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Value at the largest grid point `<= t`.
    pub fn eval(&self, t: f64) -> f64 {
        match self.grid.partition_point(|&g| g <= t) {
            0 => 0.0,
            k => self.values[k - 1],
        }
    }

    /// Left limit `f(t-)`.
    pub fn eval_left(&self, t: f64) -> f64 {
        match self.grid.partition_point(|&g| g < t) {
            0 => 0.0,
            k => self.values[k - 1],
        }
    }

    /// Jump sizes `f(t_k) - f(t_{k-1})`.
    pub fn jumps(&self) -> Vec<f64> {
        let mut prev = 0.0;
        self.values
            .iter()
            .map(|&v| {
                let d = v - prev;
                prev = v;
                d
            })
            .collect()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> StepFunction {
        StepFunction { grid: self.grid.clone(), values: self.values.iter().map(|&v| f(v)).collect() }
    }

    /// Restriction to grid points `<= upper`.
    pub fn truncate(&self, upper: f64) -> StepFunction {
        let k = self.grid.partition_point(|&g| g <= upper);
        StepFunction { grid: self.grid[..k].to_vec(), values: self.values[..k].to_vec() }
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }
}
