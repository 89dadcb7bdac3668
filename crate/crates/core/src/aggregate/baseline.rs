//! Averaging baselines: uniform, sample-weighted, step-normalized, and
//! control-variate aggregation.

use super::AggregationInput;
use crate::nn::ParamVector;
use crate::{Error, Result};
use std::sync::Arc;

/// How the control-variate server updates its own variate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ScaffoldServerMode {
    /// Average the clients' reported variate changes.
    #[default]
    Standard,
    /// Average full-batch gradient differences probed at each client's
    /// final local model and at the previous global model.
    GradientProbes,
}

/// Uniform average: every client weighs 1/N regardless of sample count.
pub fn agg_nwfedavg(input: &AggregationInput) -> Result<ParamVector> {
    let weight = 1.0 / input.clients().len() as f64;
    let mut out = ParamVector::zeros(Arc::clone(input.global_prev().layout()));
    for client in input.clients() {
        out.add_scaled(&client.model, weight)?;
    }
    Ok(out)
}

/// Sample-weighted average: client i weighs n_i over the total sample
/// count. With uniform sample counts the weights round to exactly 1/N, so
/// the result matches [`agg_nwfedavg`] bit-for-bit.
pub fn agg_fedavg(input: &AggregationInput) -> Result<ParamVector> {
    let total: usize = input.clients().iter().map(|c| c.samples).sum();
    let total = total as f64;
    let mut out = ParamVector::zeros(Arc::clone(input.global_prev().layout()));
    for client in input.clients() {
        let weight = client.samples as f64 / total;
        out.add_scaled(&client.model, weight)?;
    }
    Ok(out)
}

/// Step-normalized averaging: each client's update is weighted by its share
/// of sample-count times local-step work, and the combined update is
/// renormalized before being applied to the previous global model.
pub fn agg_fednova(input: &AggregationInput) -> Result<ParamVector> {
    let denom: f64 = input
        .clients()
        .iter()
        .map(|c| c.samples as f64 * c.tau as f64)
        .sum();
    let global = input.global_prev();
    let mut acc = ParamVector::zeros(Arc::clone(global.layout()));
    let mut weight_sum = 0.0;
    for client in input.clients() {
        let p = client.samples as f64 * client.tau as f64 / denom;
        weight_sum += p;
        let acc = acc.values_mut();
        let mv = client.model.values();
        let gv = global.values();
        for j in 0..acc.len() {
            acc[j] += p * (mv[j] - gv[j]);
        }
    }
    let mut out = global.clone();
    out.add_scaled(&acc, 1.0 / weight_sum)?;
    Ok(out)
}

/// Control-variate aggregation: the model is the uniform client average,
/// and the server variate moves by the mean per-client change. Both modes
/// error when a client omits the data they need.
pub fn agg_scaffold(
    input: &AggregationInput,
    server_c: &ParamVector,
    mode: ScaffoldServerMode,
) -> Result<(ParamVector, ParamVector)> {
    input
        .global_prev()
        .check_same_shape(server_c, "server control variate")?;
    let model = agg_nwfedavg(input)?;
    let mut sum = ParamVector::zeros(Arc::clone(server_c.layout()));
    for client in input.clients() {
        match mode {
            ScaffoldServerMode::Standard => {
                let delta = client.control_delta.as_ref().ok_or_else(|| {
                    Error::invalid(
                        "control-variate aggregation",
                        format!("client {} reported no variate change", client.id),
                    )
                })?;
                sum.add_scaled(delta, 1.0)?;
            }
            ScaffoldServerMode::GradientProbes => {
                let (local, global) = match (&client.grad_at_local, &client.grad_at_global) {
                    (Some(l), Some(g)) => (l, g),
                    _ => {
                        return Err(Error::invalid(
                            "control-variate aggregation",
                            format!("client {} reported no gradient probes", client.id),
                        ))
                    }
                };
                let sv = sum.values_mut();
                let lv = local.values();
                let gv = global.values();
                for j in 0..sv.len() {
                    sv[j] += lv[j] - gv[j];
                }
            }
        }
    }
    let mut new_c = server_c.clone();
    new_c.add_scaled(&sum, 1.0 / input.clients().len() as f64)?;
    Ok((model, new_c))
}
