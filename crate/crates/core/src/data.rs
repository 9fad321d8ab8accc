use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One observed input vector and the eigenvalues measured at it, in ascending
/// eigen-index order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub samples: Vec<Observation>,
}

impl Dataset {
    pub fn new(samples: Vec<Observation>) -> Self {
        Self { samples }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Checks every sample against the model's input count and dimension.
    pub fn validate(&self, n_inputs: usize, n: usize) -> Result<()> {
        for s in &self.samples {
            if s.x.len() != n_inputs {
                return Err(Error::DimensionMismatch { expected: n_inputs, got: s.x.len(), context: "observation x" });
            }
            if s.y.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: s.y.len(), context: "observation y" });
            }
            if s.x.iter().chain(&s.y).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("observation"));
            }
        }
        Ok(())
    }
}
