//! Design vector: the named optimization parameters with optional box bounds.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// The `n` optimization parameters, their names, and elementwise bounds
/// (defaulting to ±∞).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignVector {
    pub names: Vec<String>,
    pub values: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl DesignVector {
    pub fn new(names: Vec<String>, values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        let dv = DesignVector {
            names,
            values,
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        };
        dv.validate()?;
        Ok(dv)
    }

    /// Unnamed vector `v0..v{n-1}`, unbounded.
    pub fn anonymous(values: Vec<f64>) -> Result<Self> {
        let names = (0..values.len()).map(|i| format!("v{i}")).collect();
        Self::new(names, values)
    }

    pub fn with_bounds(mut self, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        self.lower = lower;
        self.upper = upper;
        self.validate()?;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.values.len();
        if n == 0 {
            return Err(Error::Validation("design vector must have n >= 1".into()));
        }
        if self.names.len() != n || self.lower.len() != n || self.upper.len() != n {
            return Err(Error::Validation(format!(
                "design vector field lengths disagree: {} names, {} values, {} lower, {} upper",
                self.names.len(),
                n,
                self.lower.len(),
                self.upper.len()
            )));
        }
        for i in 0..n {
            if !self.values[i].is_finite() {
                return Err(Error::Numeric(format!(
                    "design parameter {} is not finite",
                    self.names[i]
                )));
            }
            if self.values[i] < self.lower[i] || self.values[i] > self.upper[i] {
                return Err(Error::Validation(format!(
                    "design parameter {} = {} violates bounds [{}, {}]",
                    self.names[i], self.values[i], self.lower[i], self.upper[i]
                )));
            }
        }
        Ok(())
    }

    /// Clamp a candidate point onto the box.
    pub fn project(&self, x: &mut [f64]) {
        for i in 0..x.len() {
            x[i] = x[i].clamp(self.lower[i], self.upper[i]);
        }
    }
}
