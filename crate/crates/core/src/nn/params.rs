//! Flat parameter vectors.

use super::layout::LayerLayout;
use crate::{Error, Result};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

/// A model (or gradient, or control variate) as one flat `f64` vector tied
/// to the layout that gives its entries meaning. The layout is shared by
/// reference, so clones are cheap to shape-check against each other.
#[derive(Clone, Debug)]
pub struct ParamVector {
    layout: Arc<LayerLayout>,
    values: Vec<f64>,
}

impl ParamVector {
    pub fn zeros(layout: Arc<LayerLayout>) -> Self {
        let n = layout.total_params();
        ParamVector {
            layout,
            values: vec![0.0; n],
        }
    }

    pub fn from_values(layout: Arc<LayerLayout>, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.total_params() {
            return Err(Error::shape(
                "parameter vector",
                layout.total_params().to_string(),
                values.len().to_string(),
            ));
        }
        Ok(ParamVector { layout, values })
    }

    pub fn layout(&self) -> &Arc<LayerLayout> {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Mutable access to the raw entries. Callers are responsible for
    /// keeping the values finite; public pipeline code re-checks with
    /// [`ParamVector::ensure_finite`] after aggregation.
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn same_shape(&self, other: &ParamVector) -> bool {
        Arc::ptr_eq(&self.layout, &other.layout) || self.layout == other.layout
    }

    pub fn check_same_shape(&self, other: &ParamVector, context: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::shape(
                context,
                format!("{} params", self.len()),
                format!("{} params", other.len()),
            ))
        }
    }

    /// Errors if any entry is NaN or infinite.
    pub fn ensure_finite(&self, context: &str) -> Result<()> {
        if self.values.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite {
                context: context.to_string(),
            })
        }
    }

    /// `self += scale * other`, entrywise.
    pub fn add_scaled(&mut self, other: &ParamVector, scale: f64) -> Result<()> {
        self.check_same_shape(other, "add_scaled")?;
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += scale * b;
        }
        Ok(())
    }

    /// `self *= scale`, entrywise.
    pub fn scale(&mut self, scale: f64) {
        for v in &mut self.values {
            *v *= scale;
        }
    }

    /// `self - other` as a new vector.
    pub fn sub(&self, other: &ParamVector) -> Result<ParamVector> {
        self.check_same_shape(other, "sub")?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .collect();
        Ok(ParamVector {
            layout: Arc::clone(&self.layout),
            values,
        })
    }

    pub fn l2_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Bit-level equality, for determinism tests.
    pub fn bits_eq(&self, other: &ParamVector) -> bool {
        self.same_shape(other)
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl PartialEq for ParamVector {
    fn eq(&self, other: &Self) -> bool {
        self.same_shape(other) && self.values == other.values
    }
}

/// He-uniform weight initialisation: each layer's weights are drawn i.i.d.
/// from `U(-limit, limit)` with `limit = sqrt(6 / input_dim)`, biases are
/// zero. Draw order is fixed (layers in order, weights row-major, biases
/// consuming no draws), so a seed pins the full vector.
pub fn init_he_uniform(layout: &Arc<LayerLayout>, seed: u64) -> ParamVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = ParamVector::zeros(Arc::clone(layout));
    for (l, layer) in layout.layers().iter().enumerate() {
        let limit = (6.0 / layer.input_dim as f64).sqrt();
        let range = layout.weights_range(l);
        for w in &mut out.values_mut()[range] {
            let u: f64 = rng.gen();
            *w = limit * (2.0 * u - 1.0);
        }
    }
    out
}
