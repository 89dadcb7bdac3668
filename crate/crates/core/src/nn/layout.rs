//! Network shape description and flat-vector addressing.

use crate::{Error, Result};
use std::ops::Range;

/// Activation applied to a layer's pre-activation output.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

/// One fully-connected layer.
///
/// Weights are stored row-major with shape `(output_dim, input_dim)`:
/// entry `(o, i)` lives at flat offset `o * input_dim + i`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    pub has_bias: bool,
    pub activation: Activation,
}

/// What a contiguous slice of the flat parameter vector holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SegmentKind {
    Weights,
    Bias,
}

/// A named tensor inside the flat parameter vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segment {
    pub layer: usize,
    pub kind: SegmentKind,
    pub range: Range<usize>,
}

/// Shape of a feed-forward network and the mapping of its tensors onto one
/// flat parameter vector: layer 0 weights, layer 0 bias, layer 1 weights, …
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerLayout {
    layers: Vec<LayerSpec>,
    segments: Vec<Segment>,
    total: usize,
}

impl LayerLayout {
    /// Builds a layout from an ordered layer list, checking that consecutive
    /// layer dimensions chain together.
    pub fn new(layers: Vec<LayerSpec>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::empty("layer list"));
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.input_dim == 0 || layer.output_dim == 0 {
                return Err(Error::invalid(
                    "layer layout",
                    format!("layer {i} has a zero dimension"),
                ));
            }
            if i > 0 && layers[i - 1].output_dim != layer.input_dim {
                return Err(Error::invalid(
                    "layer layout",
                    format!(
                        "layer {} outputs {} values but layer {} expects {}",
                        i - 1,
                        layers[i - 1].output_dim,
                        i,
                        layer.input_dim
                    ),
                ));
            }
        }
        let mut segments = Vec::new();
        let mut offset = 0usize;
        for (i, layer) in layers.iter().enumerate() {
            let w_len = layer.output_dim * layer.input_dim;
            segments.push(Segment {
                layer: i,
                kind: SegmentKind::Weights,
                range: offset..offset + w_len,
            });
            offset += w_len;
            if layer.has_bias {
                segments.push(Segment {
                    layer: i,
                    kind: SegmentKind::Bias,
                    range: offset..offset + layer.output_dim,
                });
                offset += layer.output_dim;
            }
        }
        Ok(LayerLayout {
            layers,
            segments,
            total: offset,
        })
    }

    /// Convenience constructor: two-layer ReLU perceptron
    /// `input -> hidden (ReLU) -> classes (linear)`, biases everywhere.
    pub fn mlp(input_dim: usize, hidden_dim: usize, num_classes: usize) -> Result<Self> {
        Self::new(vec![
            LayerSpec {
                input_dim,
                output_dim: hidden_dim,
                has_bias: true,
                activation: Activation::Relu,
            },
            LayerSpec {
                input_dim: hidden_dim,
                output_dim: num_classes,
                has_bias: true,
                activation: Activation::Identity,
            },
        ])
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    /// Tensor boundaries in flat-vector order.
    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn total_params(&self) -> usize {
        self.total
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim
    }

    /// Output width of the final layer, i.e. the number of classes.
    pub fn num_classes(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim
    }

    /// Flat range of layer `l`'s weight matrix.
    pub fn weights_range(&self, layer: usize) -> Range<usize> {
        self.segments
            .iter()
            .find(|s| s.layer == layer && s.kind == SegmentKind::Weights)
            .map(|s| s.range.clone())
            .expect("layer index in range")
    }

    /// Flat range of layer `l`'s bias, if it has one.
    pub fn bias_range(&self, layer: usize) -> Option<Range<usize>> {
        self.segments
            .iter()
            .find(|s| s.layer == layer && s.kind == SegmentKind::Bias)
            .map(|s| s.range.clone())
    }
}
