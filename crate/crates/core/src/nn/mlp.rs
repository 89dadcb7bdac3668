//! Forward pass, softmax cross-entropy with manual backprop, and evaluation.

use super::batch::Batch;
use super::layout::Activation;
use super::params::ParamVector;
use crate::{Error, Result};
use std::sync::Arc;

/// Row-major matrix of per-sample model outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct Logits {
    values: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl Logits {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }
}

/// Activations recorded during a forward pass, kept for backprop.
/// `acts[0]` is the input matrix; `acts[l + 1]` and `pres[l]` are layer `l`'s
/// post- and pre-activation outputs.
struct ForwardCache {
    acts: Vec<Vec<f64>>,
    pres: Vec<Vec<f64>>,
}

fn check_input_dim(model: &ParamVector, batch: &Batch) -> Result<()> {
    let expect = model.layout().input_dim();
    if batch.dim() != expect {
        return Err(Error::shape(
            "forward input",
            format!("width {expect}"),
            format!("width {}", batch.dim()),
        ));
    }
    Ok(())
}

fn check_labels(model: &ParamVector, batch: &Batch) -> Result<()> {
    let classes = model.layout().num_classes();
    for &y in batch.labels() {
        if y >= classes {
            return Err(Error::invalid(
                "batch labels",
                format!("label {y} out of range for {classes} classes"),
            ));
        }
    }
    Ok(())
}

fn forward_cached(model: &ParamVector, batch: &Batch) -> Result<ForwardCache> {
    check_input_dim(model, batch)?;
    let layout = model.layout();
    let rows = batch.rows();
    let mut acts: Vec<Vec<f64>> = Vec::with_capacity(layout.layers().len() + 1);
    let mut pres: Vec<Vec<f64>> = Vec::with_capacity(layout.layers().len());
    acts.push(batch.inputs().to_vec());
    for (l, layer) in layout.layers().iter().enumerate() {
        let din = layer.input_dim;
        let dout = layer.output_dim;
        let weights = &model.values()[layout.weights_range(l)];
        let bias = layout.bias_range(l).map(|r| &model.values()[r]);
        let z = {
            let input = acts.last().expect("at least the input matrix");
            let mut z = vec![0.0; rows * dout];
            for r in 0..rows {
                let x = &input[r * din..(r + 1) * din];
                let zr = &mut z[r * dout..(r + 1) * dout];
                for (o, zo) in zr.iter_mut().enumerate() {
                    let mut acc = bias.map_or(0.0, |b| b[o]);
                    let wrow = &weights[o * din..(o + 1) * din];
                    for i in 0..din {
                        acc += wrow[i] * x[i];
                    }
                    *zo = acc;
                }
            }
            z
        };
        let a = match layer.activation {
            Activation::Relu => z.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect(),
            Activation::Identity => z.clone(),
        };
        pres.push(z);
        acts.push(a);
    }
    Ok(ForwardCache { acts, pres })
}

/// Runs the network over a batch. Empty batches yield an empty logits
/// matrix with the right column count.
pub fn forward(model: &ParamVector, batch: &Batch) -> Result<Logits> {
    let cache = forward_cached(model, batch)?;
    let cols = model.layout().num_classes();
    Ok(Logits {
        values: cache.acts.into_iter().last().expect("output activations"),
        rows: batch.rows(),
        cols,
    })
}

/// Mean softmax cross-entropy over the batch plus its gradient with respect
/// to every parameter. Log-sum-exp is computed with max subtraction, so a
/// saturated correct logit gives exactly zero loss and gradient.
pub fn loss_and_grad(model: &ParamVector, batch: &Batch) -> Result<(f64, ParamVector)> {
    if batch.rows() == 0 {
        return Err(Error::empty("training batch"));
    }
    check_labels(model, batch)?;
    let cache = forward_cached(model, batch)?;
    let layout = Arc::clone(model.layout());
    let rows = batch.rows();
    let classes = layout.num_classes();
    let logits = cache.acts.last().expect("output activations");
    let inv_rows = 1.0 / rows as f64;

    let mut loss = 0.0;
    let mut dz = vec![0.0; rows * classes];
    for r in 0..rows {
        let row = &logits[r * classes..(r + 1) * classes];
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|&v| (v - max).exp()).sum();
        let lse = max + sum.ln();
        let y = batch.labels()[r];
        loss += (lse - row[y]) * inv_rows;
        let drow = &mut dz[r * classes..(r + 1) * classes];
        for (j, d) in drow.iter_mut().enumerate() {
            let p = (row[j] - lse).exp();
            let target = if j == y { 1.0 } else { 0.0 };
            *d = (p - target) * inv_rows;
        }
    }

    let mut grad = ParamVector::zeros(Arc::clone(&layout));
    for l in (0..layout.layers().len()).rev() {
        let layer = layout.layers()[l];
        let din = layer.input_dim;
        let dout = layer.output_dim;
        let a_prev = &cache.acts[l];
        {
            let wrange = layout.weights_range(l);
            let gw = &mut grad.values_mut()[wrange];
            for r in 0..rows {
                let dzr = &dz[r * dout..(r + 1) * dout];
                let ar = &a_prev[r * din..(r + 1) * din];
                for (o, &g) in dzr.iter().enumerate() {
                    let grow = &mut gw[o * din..(o + 1) * din];
                    for i in 0..din {
                        grow[i] += g * ar[i];
                    }
                }
            }
        }
        if let Some(brange) = layout.bias_range(l) {
            let gb = &mut grad.values_mut()[brange];
            for r in 0..rows {
                let dzr = &dz[r * dout..(r + 1) * dout];
                for o in 0..dout {
                    gb[o] += dzr[o];
                }
            }
        }
        if l > 0 {
            let weights = &model.values()[layout.weights_range(l)];
            let pre_prev = &cache.pres[l - 1];
            let act_prev = layout.layers()[l - 1].activation;
            let mut dz_prev = vec![0.0; rows * din];
            for r in 0..rows {
                let dzr = &dz[r * dout..(r + 1) * dout];
                let dpr = &mut dz_prev[r * din..(r + 1) * din];
                for (o, &g) in dzr.iter().enumerate() {
                    let wrow = &weights[o * din..(o + 1) * din];
                    for i in 0..din {
                        dpr[i] += g * wrow[i];
                    }
                }
                if act_prev == Activation::Relu {
                    // relu'(z) = 0 at z <= 0 (the kink resolves to zero).
                    let zr = &pre_prev[r * din..(r + 1) * din];
                    for i in 0..din {
                        if zr[i] <= 0.0 {
                            dpr[i] = 0.0;
                        }
                    }
                }
            }
            dz = dz_prev;
        }
    }
    Ok((loss, grad))
}

/// Accuracy summary for one evaluation batch.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub accuracy: f64,
    /// Accuracy per class, indexed by label; -1.0 marks classes with no
    /// samples in the batch.
    pub per_class: Vec<f64>,
}

/// Top-1 accuracy with a per-class breakdown. Argmax ties resolve to the
/// lowest class index.
pub fn evaluate(model: &ParamVector, batch: &Batch) -> Result<EvalReport> {
    if batch.rows() == 0 {
        return Err(Error::empty("evaluation batch"));
    }
    check_labels(model, batch)?;
    let logits = forward(model, batch)?;
    let classes = logits.cols();
    let mut total = vec![0usize; classes];
    let mut correct = vec![0usize; classes];
    for r in 0..logits.rows() {
        let row = logits.row(r);
        let mut best = 0usize;
        for (j, &v) in row.iter().enumerate().skip(1) {
            if v > row[best] {
                best = j;
            }
        }
        let y = batch.labels()[r];
        total[y] += 1;
        if best == y {
            correct[y] += 1;
        }
    }
    let accuracy = correct.iter().sum::<usize>() as f64 / batch.rows() as f64;
    let per_class = total
        .iter()
        .zip(&correct)
        .map(|(&t, &c)| if t == 0 { -1.0 } else { c as f64 / t as f64 })
        .collect();
    Ok(EvalReport {
        accuracy,
        per_class,
    })
}
