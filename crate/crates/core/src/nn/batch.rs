//! Mini-batch container.

use crate::{Error, Result};

/// A batch of examples: row-major inputs of width `dim` plus integer labels.
/// Empty batches are representable (forward passes allow them; loss and
/// evaluation reject them).
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    inputs: Vec<f64>,
    dim: usize,
    labels: Vec<usize>,
}

impl Batch {
    pub fn new(inputs: Vec<f64>, dim: usize, labels: Vec<usize>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("batch", "input dimension must be positive"));
        }
        if inputs.len() != dim * labels.len() {
            return Err(Error::shape(
                "batch inputs",
                format!("{} values ({} rows x {dim})", dim * labels.len(), labels.len()),
                inputs.len().to_string(),
            ));
        }
        if !inputs.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                context: "batch inputs".to_string(),
            });
        }
        Ok(Batch {
            inputs,
            dim,
            labels,
        })
    }

    pub fn rows(&self) -> usize {
        self.labels.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn input_row(&self, row: usize) -> &[f64] {
        &self.inputs[row * self.dim..(row + 1) * self.dim]
    }
}
