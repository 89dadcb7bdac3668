//! Labelled dataset container.

use crate::nn::Batch;
use crate::{Error, Result};

/// A non-empty labelled dataset: row-major inputs of width `dim`, one label
/// per row, and the number of classes labels are drawn from. `image_shape`
/// records `(rows, cols)` when the inputs are flattened images, which
/// pixel-coordinate operations (trigger stamping, IDX output) require.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    inputs: Vec<f64>,
    dim: usize,
    labels: Vec<usize>,
    num_classes: usize,
    image_shape: Option<(usize, usize)>,
}

impl Dataset {
    pub fn new(
        inputs: Vec<f64>,
        dim: usize,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::empty("dataset"));
        }
        if dim == 0 {
            return Err(Error::invalid("dataset", "input dimension must be positive"));
        }
        if num_classes == 0 {
            return Err(Error::invalid("dataset", "num_classes must be positive"));
        }
        if inputs.len() != dim * labels.len() {
            return Err(Error::shape(
                "dataset inputs",
                format!("{} values", dim * labels.len()),
                inputs.len().to_string(),
            ));
        }
        if !inputs.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                context: "dataset inputs".to_string(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::invalid(
                "dataset labels",
                format!("label {bad} out of range for {num_classes} classes"),
            ));
        }
        Ok(Dataset {
            inputs,
            dim,
            labels,
            num_classes,
            image_shape: None,
        })
    }

    /// Declares the inputs to be flattened `rows x cols` images.
    pub fn with_image_shape(mut self, rows: usize, cols: usize) -> Result<Self> {
        if rows * cols != self.dim {
            return Err(Error::shape(
                "image shape",
                format!("{} pixels", self.dim),
                format!("{rows}x{cols}"),
            ));
        }
        self.image_shape = Some((rows, cols));
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        false // construction requires at least one sample
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    pub fn image_shape(&self) -> Option<(usize, usize)> {
        self.image_shape
    }

    pub fn input_row(&self, row: usize) -> &[f64] {
        &self.inputs[row * self.dim..(row + 1) * self.dim]
    }

    /// The whole dataset as one batch.
    pub fn to_batch(&self) -> Batch {
        Batch::new(self.inputs.clone(), self.dim, self.labels.clone())
            .expect("dataset invariants imply a valid batch")
    }

    /// The given rows, in the given order, as a batch.
    pub fn batch_of(&self, indices: &[usize]) -> Result<Batch> {
        let mut inputs = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::invalid(
                    "batch indices",
                    format!("row {i} out of range for {} samples", self.len()),
                ));
            }
            inputs.extend_from_slice(self.input_row(i));
            labels.push(self.labels[i]);
        }
        Batch::new(inputs, self.dim, labels)
    }

    /// The given rows as a new dataset, preserving class count and image
    /// shape.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        if indices.is_empty() {
            return Err(Error::empty("dataset subset"));
        }
        let mut inputs = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::invalid(
                    "subset indices",
                    format!("row {i} out of range for {} samples", self.len()),
                ));
            }
            inputs.extend_from_slice(self.input_row(i));
            labels.push(self.labels[i]);
        }
        Ok(Dataset {
            inputs,
            dim: self.dim,
            labels,
            num_classes: self.num_classes,
            image_shape: self.image_shape,
        })
    }

    /// Widens the class count (labels stay valid; narrowing errors when a
    /// label would fall out of range).
    pub fn with_num_classes(&self, num_classes: usize) -> Result<Dataset> {
        let mut out = self.clone();
        if let Some(&bad) = self.labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::invalid(
                "class count",
                format!("label {bad} does not fit {num_classes} classes"),
            ));
        }
        out.num_classes = num_classes;
        Ok(out)
    }

    /// Replaces the label vector (used by label-poisoning attacks).
    pub fn with_labels(&self, labels: Vec<usize>) -> Result<Dataset> {
        Dataset::new(self.inputs.clone(), self.dim, labels, self.num_classes).map(|d| Dataset {
            image_shape: self.image_shape,
            ..d
        })
    }

    /// Replaces the input matrix (used by trigger stamping).
    pub fn with_inputs(&self, inputs: Vec<f64>) -> Result<Dataset> {
        Dataset::new(inputs, self.dim, self.labels.clone(), self.num_classes).map(|d| Dataset {
            image_shape: self.image_shape,
            ..d
        })
    }

    /// Sample count per class label.
    pub fn label_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.num_classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }
}
