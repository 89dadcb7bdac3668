//! Gradient-magnitude masks: thresholding, blending, and the
//! importance-weighted aggregation they drive.

use crate::nn::{LayerLayout, ParamVector};
use crate::{Error, Result};
use std::sync::Arc;

/// Where top-k thresholds are computed: one per tensor (weight matrix or
/// bias vector), or one over the whole flat parameter vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TopkScope {
    PerTensor,
    Global,
}

/// How clients are matched to the class whose validation gradient shapes
/// their mask.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AssignmentMethod {
    /// Each client gets the class its model scores highest on.
    DominantClass,
    /// For each class, the `top_k` best-scoring client models get that
    /// class (first match wins); clients left unselected fall back to
    /// their dominant class.
    TopModels { top_k: usize },
}

/// Mask-generation hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaskConfig {
    /// Fraction of entries retained at full weight; in (0, 1].
    pub zip_percent: f64,
    /// Scale-down value for pruned entries; in (0, 1].
    pub gamma: f64,
    /// Blend toward the previous round's mask; in [0, 1].
    pub beta: f64,
    pub scope: TopkScope,
    pub assignment: AssignmentMethod,
}

impl Default for MaskConfig {
    fn default() -> Self {
        MaskConfig {
            zip_percent: 0.5,
            gamma: 0.5,
            beta: 0.4,
            scope: TopkScope::PerTensor,
            assignment: AssignmentMethod::DominantClass,
        }
    }
}

impl MaskConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.zip_percent.is_finite() || !(0.0..=1.0).contains(&self.zip_percent) || self.zip_percent == 0.0 {
            return Err(Error::invalid("mask zip_percent", "must lie in (0, 1]"));
        }
        if !self.gamma.is_finite() || !(0.0..=1.0).contains(&self.gamma) || self.gamma == 0.0 {
            return Err(Error::invalid("mask gamma", "must lie in (0, 1]"));
        }
        if !self.beta.is_finite() || !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::invalid("mask beta", "must lie in [0, 1]"));
        }
        if let AssignmentMethod::TopModels { top_k } = self.assignment {
            if top_k == 0 {
                return Err(Error::invalid("mask top_k", "must be >= 1"));
            }
        }
        Ok(())
    }
}

/// A per-parameter weighting in [gamma, 1], shaped like the model.
#[derive(Clone, Debug, PartialEq)]
pub struct Mask {
    values: ParamVector,
    gamma: f64,
    round: u64,
}

impl Mask {
    /// The neutral round-0 mask: every entry 1.
    pub fn all_ones(layout: &Arc<LayerLayout>, gamma: f64) -> Mask {
        let mut values = ParamVector::zeros(Arc::clone(layout));
        for v in values.values_mut() {
            *v = 1.0;
        }
        Mask {
            values,
            gamma,
            round: 0,
        }
    }

    pub fn values(&self) -> &ParamVector {
        &self.values
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn round(&self) -> u64 {
        self.round
    }
}

/// The k-th largest |g| with `k = max(1, round(p * len))`. Retention uses
/// `|g| >= threshold`, so at least k entries survive and exact ties at the
/// threshold all survive.
pub fn topk_threshold(g: &[f64], p: f64) -> f64 {
    debug_assert!(!g.is_empty());
    debug_assert!(p > 0.0 && p <= 1.0);
    let k = ((p * g.len() as f64).round() as usize).clamp(1, g.len());
    let mut magnitudes: Vec<f64> = g.iter().map(|v| v.abs()).collect();
    magnitudes.sort_unstable_by(|a, b| b.total_cmp(a));
    magnitudes[k - 1]
}

/// Builds a fresh {gamma, 1}-valued mask from a gradient: 1 where the
/// magnitude reaches the top-k threshold of its scope unit, gamma elsewhere.
pub fn build_mask(g: &ParamVector, cfg: &MaskConfig) -> Mask {
    let mut values = ParamVector::zeros(Arc::clone(g.layout()));
    match cfg.scope {
        TopkScope::PerTensor => {
            for seg in g.layout().segments() {
                let slice = &g.values()[seg.range.clone()];
                let tau = topk_threshold(slice, cfg.zip_percent);
                let out = &mut values.values_mut()[seg.range.clone()];
                for (m, &gv) in out.iter_mut().zip(slice) {
                    *m = if gv.abs() >= tau { 1.0 } else { cfg.gamma };
                }
            }
        }
        TopkScope::Global => {
            let tau = topk_threshold(g.values(), cfg.zip_percent);
            for (m, &gv) in values.values_mut().iter_mut().zip(g.values()) {
                *m = if gv.abs() >= tau { 1.0 } else { cfg.gamma };
            }
        }
    }
    Mask {
        values,
        gamma: cfg.gamma,
        round: 0,
    }
}

/// Blends a fresh mask with the previous round's:
/// `(1 - beta) * new + beta * prev`, clamped into [gamma, 1] to absorb
/// rounding at the boundaries. `beta = 0` and `beta = 1` return the
/// respective operand's values bit-for-bit. The result's round counter is
/// `prev.round + 1`.
pub fn update_mask(new: &Mask, prev: &Mask, beta: f64) -> Result<Mask> {
    new.values.check_same_shape(&prev.values, "update_mask")?;
    if new.gamma.to_bits() != prev.gamma.to_bits() {
        return Err(Error::invalid(
            "update_mask",
            format!("gamma mismatch: {} vs {}", new.gamma, prev.gamma),
        ));
    }
    let round = prev.round + 1;
    let values = if beta == 0.0 {
        new.values.clone()
    } else if beta == 1.0 {
        prev.values.clone()
    } else {
        let mut blended = new.values.clone();
        let keep = 1.0 - beta;
        for (v, &p) in blended.values_mut().iter_mut().zip(prev.values.values()) {
            *v = (keep * *v + beta * p).clamp(new.gamma, 1.0);
        }
        blended
    };
    Ok(Mask {
        values,
        gamma: new.gamma,
        round,
    })
}

/// A mask's aggregation weight: the sum of its entries.
pub fn mask_importance(mask: &Mask) -> f64 {
    mask.values.values().iter().sum()
}

/// Importance-weighted aggregation of masked models:
/// `(sum_i w_i * (model_i ⊙ mask_i)) / (sum_i w_i)`, accumulated in input
/// order (callers present clients sorted by id).
pub fn masked_aggregate(models: &[&ParamVector], masks: &[&Mask]) -> Result<ParamVector> {
    if models.is_empty() {
        return Err(Error::empty("masked_aggregate models"));
    }
    if models.len() != masks.len() {
        return Err(Error::shape(
            "masked_aggregate",
            format!("{} masks", models.len()),
            masks.len().to_string(),
        ));
    }
    for (model, mask) in models.iter().zip(masks) {
        model.check_same_shape(&mask.values, "masked_aggregate")?;
        models[0].check_same_shape(model, "masked_aggregate")?;
    }
    let omegas: Vec<f64> = masks.iter().map(|m| mask_importance(m)).collect();
    let total: f64 = omegas.iter().sum();
    let mut out = ParamVector::zeros(Arc::clone(models[0].layout()));
    for ((model, mask), omega) in models.iter().zip(masks).zip(&omegas) {
        let acc = out.values_mut();
        let mv = model.values();
        let kv = mask.values.values();
        for j in 0..acc.len() {
            acc[j] += omega * (mv[j] * kv[j]);
        }
    }
    let inv = 1.0 / total;
    out.scale(inv);
    Ok(out)
}
