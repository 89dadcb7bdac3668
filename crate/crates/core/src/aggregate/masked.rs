//! Class-aware masked aggregation: match each client to a validation
//! class, shape a mask from that class's gradient, and combine the masked
//! models by mask importance.

use super::masking::{
    build_mask, masked_aggregate, update_mask, AssignmentMethod, Mask, MaskConfig,
};
use super::AggregationInput;
use crate::data::{ClassValidationSets, Dataset};
use crate::nn::{evaluate, loss_and_grad, ParamVector};
use crate::{Error, Result};

/// The class a model scores highest on, over non-empty validation sets.
/// Ties resolve to the lowest class index. Errors when every set is empty.
pub fn assign_dominant_class(
    model: &ParamVector,
    vsets: &ClassValidationSets,
) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for class in vsets.non_empty_classes() {
        let batch = vsets.get(class).expect("listed as non-empty").to_batch();
        let accuracy = evaluate(model, &batch)?.accuracy;
        match best {
            Some((_, incumbent)) if accuracy <= incumbent => {}
            _ => best = Some((class, accuracy)),
        }
    }
    best.map(|(class, _)| class)
        .ok_or_else(|| Error::empty("per-class validation sets"))
}

/// Per-class top-k assignment: walking classes in ascending order, the
/// `top_k` best-scoring models on each class's validation set are assigned
/// that class; a model already assigned keeps its first class. Models no
/// class selects fall back to their dominant class.
pub fn assign_top_models(
    models: &[&ParamVector],
    vsets: &ClassValidationSets,
    top_k: usize,
) -> Result<Vec<usize>> {
    if models.is_empty() {
        return Err(Error::empty("client models"));
    }
    if top_k == 0 {
        return Err(Error::invalid("top_k", "must be >= 1"));
    }
    let mut assignment: Vec<Option<usize>> = vec![None; models.len()];
    for class in vsets.non_empty_classes() {
        let batch = vsets.get(class).expect("listed as non-empty").to_batch();
        let mut scored = Vec::with_capacity(models.len());
        for (i, model) in models.iter().enumerate() {
            scored.push((i, evaluate(model, &batch)?.accuracy));
        }
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        for &(i, _) in scored.iter().take(top_k) {
            if assignment[i].is_none() {
                assignment[i] = Some(class);
            }
        }
    }
    assignment
        .iter()
        .enumerate()
        .map(|(i, slot)| match slot {
            Some(class) => Ok(*class),
            None => assign_dominant_class(models[i], vsets),
        })
        .collect()
}

/// Mean cross-entropy gradient of a model over one class's validation set.
pub fn class_gradient(model: &ParamVector, class_set: &Dataset) -> Result<ParamVector> {
    let (_, grad) = loss_and_grad(model, &class_set.to_batch())?;
    Ok(grad)
}

/// One full masked aggregation round. For each client in id order: assign a
/// class, take that class's gradient at the client model, threshold it into
/// a fresh mask, and blend with the client's previous mask (all-ones when
/// absent). Returns the importance-weighted global model and the new masks,
/// aligned with `input.clients()`.
pub fn masked_round(
    input: &AggregationInput,
    vsets: &ClassValidationSets,
    cfg: &MaskConfig,
) -> Result<(ParamVector, Vec<Mask>)> {
    cfg.validate()?;
    let assignments: Vec<usize> = match cfg.assignment {
        AssignmentMethod::DominantClass => input
            .clients()
            .iter()
            .map(|c| assign_dominant_class(&c.model, vsets))
            .collect::<Result<_>>()?,
        AssignmentMethod::TopModels { top_k } => {
            let models: Vec<&ParamVector> =
                input.clients().iter().map(|c| &c.model).collect();
            assign_top_models(&models, vsets, top_k)?
        }
    };
    let layout = input.global_prev().layout();
    let mut masks = Vec::with_capacity(input.clients().len());
    for (client, &class) in input.clients().iter().zip(&assignments) {
        let class_set = vsets.get(class).expect("assignments cover non-empty classes");
        let g = class_gradient(&client.model, class_set)?;
        let fresh = build_mask(&g, cfg);
        let prev = match &client.prev_mask {
            Some(m) => m.clone(),
            None => Mask::all_ones(layout, cfg.gamma),
        };
        masks.push(update_mask(&fresh, &prev, cfg.beta)?);
    }
    let models: Vec<&ParamVector> = input.clients().iter().map(|c| &c.model).collect();
    let mask_refs: Vec<&Mask> = masks.iter().collect();
    let global = masked_aggregate(&models, &mask_refs)?;
    Ok((global, masks))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregate::{agg_nwfedavg, ClientContribution, TopkScope};
    use crate::data::{generate_blobs, split_validation};
    use crate::nn::{init_he_uniform, Activation, LayerLayout, LayerSpec};
    use std::sync::Arc;

    /// Single linear layer mapping inputs straight to logits.
    fn linear_layout(dim: usize, classes: usize) -> Arc<LayerLayout> {
        Arc::new(
            LayerLayout::new(vec![LayerSpec {
                input_dim: dim,
                output_dim: classes,
                has_bias: false,
                activation: Activation::Identity,
            }])
            .unwrap(),
        )
    }

    /// Model whose weight rows are given per output class.
    fn linear_model(rows: &[&[f64]]) -> ParamVector {
        let dim = rows[0].len();
        let layout = linear_layout(dim, rows.len());
        let values = rows.iter().flat_map(|r| r.iter().copied()).collect();
        ParamVector::from_values(layout, values).unwrap()
    }

    /// One-hot samples: slot c holds `counts[c]` copies of e_c labeled c.
    fn one_hot_vsets(counts: &[usize]) -> ClassValidationSets {
        let classes = counts.len();
        let per_class = counts
            .iter()
            .enumerate()
            .map(|(c, &n)| {
                if n == 0 {
                    return None;
                }
                let mut inputs = vec![0.0; n * classes];
                for row in 0..n {
                    inputs[row * classes + c] = 1.0;
                }
                Some(Dataset::new(inputs, classes, vec![c; n], classes).unwrap())
            })
            .collect();
        ClassValidationSets::from_parts(per_class).unwrap()
    }

    #[test]
    fn dominant_class_follows_the_favored_row() {
        let vsets = one_hot_vsets(&[2, 2, 2]);
        for favored in 0..3 {
            let rows: Vec<Vec<f64>> = (0..3)
                .map(|r| {
                    if r == favored {
                        vec![1.0, 1.0, 1.0]
                    } else {
                        vec![0.0, 0.0, 0.0]
                    }
                })
                .collect();
            let row_refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
            let model = linear_model(&row_refs);
            assert_eq!(assign_dominant_class(&model, &vsets).unwrap(), favored);
        }
    }

    #[test]
    fn dominant_class_tie_takes_lowest_index() {
        // The identity model is perfect on every one-hot class set.
        let model = linear_model(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let vsets = one_hot_vsets(&[2, 2]);
        assert_eq!(assign_dominant_class(&model, &vsets).unwrap(), 0);
    }

    #[test]
    fn dominant_class_skips_empty_sets() {
        // The model favors class 0, but class 0 has no validation samples.
        let model = linear_model(&[&[1.0, 1.0, 1.0], &[0.0; 3], &[0.0; 3]]);
        let vsets = one_hot_vsets(&[0, 3, 3]);
        // Accuracy is 0 on both remaining classes; the tie keeps class 1.
        assert_eq!(assign_dominant_class(&model, &vsets).unwrap(), 1);
    }

    #[test]
    fn all_empty_sets_error() {
        let test = generate_blobs(2, 3, 2, 0.1, 5).unwrap();
        let (vsets, _) = split_validation(&test, 0).unwrap();
        assert!(vsets.is_all_empty());
        let model = linear_model(&[&[1.0, 0.0], &[0.0, 1.0]]);
        assert!(assign_dominant_class(&model, &vsets).is_err());
    }

    #[test]
    fn class_gradient_is_the_mean_over_the_set() {
        let layout = linear_layout(3, 3);
        let model = init_he_uniform(&layout, 17);
        let vsets = one_hot_vsets(&[0, 4, 0]);
        let class_set = vsets.get(1).unwrap();
        let grad = class_gradient(&model, class_set).unwrap();
        let mut mean = ParamVector::zeros(Arc::clone(&layout));
        for i in 0..class_set.len() {
            let single = class_set.subset(&[i]).unwrap();
            let (_, g) = loss_and_grad(&model, &single.to_batch()).unwrap();
            mean.add_scaled(&g, 1.0 / class_set.len() as f64).unwrap();
        }
        for (a, b) in grad.values().iter().zip(mean.values()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn top_models_rank_per_class_and_fall_back() {
        // V_0: e_0 and a 0.6/0.4 mix, both labeled 0; V_1: e_1 twice.
        let v0 = Dataset::new(vec![1.0, 0.0, 0.6, 0.4], 2, vec![0, 0], 2).unwrap();
        let v1 = Dataset::new(vec![0.0, 1.0, 0.0, 1.0], 2, vec![1, 1], 2).unwrap();
        let vsets = ClassValidationSets::from_parts(vec![Some(v0), Some(v1)]).unwrap();
        let a = linear_model(&[&[1.0, 0.0], &[0.0, 1.0]]); // 1.0 on V_0, 1.0 on V_1
        let b = linear_model(&[&[0.0, 0.0], &[1.0, 1.0]]); // 0.0 on V_0, 1.0 on V_1
        let c = linear_model(&[&[1.0, 0.0], &[0.0, 3.0]]); // 0.5 on V_0, 1.0 on V_1
        let models = [&a, &b, &c];
        // Class 0 picks a; class 1 ties at 1.0 and picks a again, which
        // keeps its first class, so b and c fall back to their dominant
        // class (1 for both).
        let got = assign_top_models(&models, &vsets, 1).unwrap();
        assert_eq!(got, vec![0, 1, 1]);
        // With top_k = 2, class 0 takes a and c, class 1 then takes b.
        let got = assign_top_models(&models, &vsets, 2).unwrap();
        assert_eq!(got, vec![0, 1, 0]);
    }

    fn round_input(seed: u64, n_clients: usize) -> (AggregationInput, ClassValidationSets) {
        let layout = Arc::new(LayerLayout::mlp(4, 6, 3).unwrap());
        let test = generate_blobs(3, 12, 4, 0.15, seed).unwrap();
        let (vsets, _) = split_validation(&test, 4).unwrap();
        let global = init_he_uniform(&layout, seed.wrapping_add(1000));
        let clients = (0..n_clients)
            .map(|id| {
                let model = init_he_uniform(&layout, seed.wrapping_add(id as u64));
                ClientContribution::new(id, model, 5 + id, 2)
            })
            .collect();
        (AggregationInput::new(clients, global).unwrap(), vsets)
    }

    #[test]
    fn neutral_gamma_reduces_to_uniform_average() {
        let (input, vsets) = round_input(3, 5);
        let cfg = MaskConfig {
            gamma: 1.0,
            ..MaskConfig::default()
        };
        let (global, masks) = masked_round(&input, &vsets, &cfg).unwrap();
        let plain = agg_nwfedavg(&input).unwrap();
        for (a, b) in global.values().iter().zip(plain.values()) {
            assert!((a - b).abs() <= 1e-12);
        }
        for mask in &masks {
            assert!(mask.values().values().iter().all(|&v| v == 1.0));
        }
    }

    #[test]
    fn full_retention_reduces_to_uniform_average() {
        let (input, vsets) = round_input(7, 4);
        let cfg = MaskConfig {
            zip_percent: 1.0,
            gamma: 0.25,
            ..MaskConfig::default()
        };
        let (global, _) = masked_round(&input, &vsets, &cfg).unwrap();
        let plain = agg_nwfedavg(&input).unwrap();
        for (a, b) in global.values().iter().zip(plain.values()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn full_inertia_keeps_the_initial_all_ones_masks() {
        let (input, vsets) = round_input(11, 4);
        let cfg = MaskConfig {
            beta: 1.0,
            gamma: 0.25,
            ..MaskConfig::default()
        };
        let (global, masks) = masked_round(&input, &vsets, &cfg).unwrap();
        let plain = agg_nwfedavg(&input).unwrap();
        for (a, b) in global.values().iter().zip(plain.values()) {
            assert!((a - b).abs() <= 1e-12);
        }
        // Feeding the returned masks back keeps them all-ones forever.
        let mut next = input.clone();
        for (client, mask) in next.clients_mut().iter_mut().zip(&masks) {
            assert_eq!(mask.round(), 1);
            assert!(mask.values().values().iter().all(|&v| v == 1.0));
            client.prev_mask = Some(mask.clone());
        }
        let (_, masks2) = masked_round(&next, &vsets, &cfg).unwrap();
        for mask in &masks2 {
            assert_eq!(mask.round(), 2);
            assert!(mask.values().values().iter().all(|&v| v == 1.0));
        }
    }

    #[test]
    fn masks_stay_in_gamma_one_range_and_rounds_advance() {
        let (mut input, vsets) = round_input(19, 6);
        let cfg = MaskConfig {
            zip_percent: 0.3,
            gamma: 0.5,
            beta: 0.4,
            scope: TopkScope::PerTensor,
            assignment: AssignmentMethod::DominantClass,
        };
        for round in 1..=3 {
            let (global, masks) = masked_round(&input, &vsets, &cfg).unwrap();
            global.ensure_finite("masked global").unwrap();
            for mask in &masks {
                assert_eq!(mask.round(), round);
                assert!(mask
                    .values()
                    .values()
                    .iter()
                    .all(|&v| (0.5..=1.0).contains(&v)));
            }
            for (client, mask) in input.clients_mut().iter_mut().zip(&masks) {
                client.prev_mask = Some(mask.clone());
            }
        }
    }

    #[test]
    fn rounds_are_deterministic() {
        let (input, vsets) = round_input(23, 5);
        let cfg = MaskConfig::default();
        let (a, _) = masked_round(&input, &vsets, &cfg).unwrap();
        let (b, _) = masked_round(&input, &vsets, &cfg).unwrap();
        assert!(a.bits_eq(&b));
    }

    #[test]
    fn top_models_variant_runs_end_to_end() {
        let (input, vsets) = round_input(29, 5);
        let cfg = MaskConfig {
            assignment: AssignmentMethod::TopModels { top_k: 2 },
            ..MaskConfig::default()
        };
        let (global, masks) = masked_round(&input, &vsets, &cfg).unwrap();
        global.ensure_finite("masked global").unwrap();
        assert_eq!(masks.len(), 5);
    }
}
