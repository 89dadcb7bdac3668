//! Adversarial client behavior: malicious-cohort selection, label
//! poisoning, and distributed backdoor triggers.

use crate::data::Dataset;
use crate::nn::{forward, ParamVector};
use crate::rng;
use crate::{Error, Result};
use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Which corner of the image a trigger patch occupies.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Corner {
    TopLeft,
    TopRight,
    BottomLeft,
    BottomRight,
}

/// A square patch of constant-value pixels anchored to one image corner.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TriggerPattern {
    pub corner: Corner,
    pub size: usize,
    pub value: f64,
}

impl TriggerPattern {
    /// The four standard 2x2 patches of value 1.0, in corner order
    /// TL, TR, BL, BR. Malicious client rank k uses patch k mod 4.
    pub fn corner_patches() -> Vec<TriggerPattern> {
        [
            Corner::TopLeft,
            Corner::TopRight,
            Corner::BottomLeft,
            Corner::BottomRight,
        ]
        .into_iter()
        .map(|corner| TriggerPattern {
            corner,
            size: 2,
            value: 1.0,
        })
        .collect()
    }

    /// Flat pixel indices this patch covers on a rows x cols image.
    pub fn pixel_indices(&self, rows: usize, cols: usize) -> Result<Vec<usize>> {
        if self.size == 0 {
            return Err(Error::invalid("trigger pattern", "patch size must be >= 1"));
        }
        if rows < self.size || cols < self.size {
            return Err(Error::invalid(
                "trigger pattern",
                format!("{}x{} patch does not fit a {rows}x{cols} image", self.size, self.size),
            ));
        }
        let (r0, c0) = match self.corner {
            Corner::TopLeft => (0, 0),
            Corner::TopRight => (0, cols - self.size),
            Corner::BottomLeft => (rows - self.size, 0),
            Corner::BottomRight => (rows - self.size, cols - self.size),
        };
        let mut indices = Vec::with_capacity(self.size * self.size);
        for r in r0..r0 + self.size {
            for c in c0..c0 + self.size {
                indices.push(r * cols + c);
            }
        }
        Ok(indices)
    }
}

/// Picks the malicious cohort: `m = min(floor(ratio * n), floor((n-1)/2))`
/// clients drawn uniformly without replacement, returned sorted. The cap
/// keeps honest clients in the strict majority.
pub fn select_malicious(n_clients: usize, ratio: f64, seed: u64) -> Result<Vec<usize>> {
    if n_clients == 0 {
        return Err(Error::empty("client pool"));
    }
    if !ratio.is_finite() || !(0.0..=1.0).contains(&ratio) {
        return Err(Error::invalid("malicious ratio", "must lie in [0, 1]"));
    }
    let m = ((ratio * n_clients as f64).floor() as usize).min((n_clients - 1) / 2);
    let mut rng = rng::stream(seed, &[rng::STREAM_ATTACK]);
    let mut chosen = sample(&mut rng, n_clients, m).into_vec();
    chosen.sort_unstable();
    Ok(chosen)
}

fn check_fraction(fraction: f64) -> Result<()> {
    if !fraction.is_finite() || !(0.0..=1.0).contains(&fraction) {
        return Err(Error::invalid("poison fraction", "must lie in [0, 1]"));
    }
    Ok(())
}

fn poisoned_rows(rng: &mut ChaCha8Rng, len: usize, fraction: f64) -> Vec<usize> {
    let count = ((fraction * len as f64).round() as usize).min(len);
    let mut rows = sample(rng, len, count).into_vec();
    rows.sort_unstable();
    rows
}

/// Flips the labels of exactly `round(fraction * len)` samples, drawn
/// uniformly without replacement; each flipped label is uniform over the
/// other classes, so every poisoned sample really changes class.
pub fn poison_labels(data: &Dataset, fraction: f64, seed: u64) -> Result<Dataset> {
    check_fraction(fraction)?;
    let classes = data.num_classes();
    if classes < 2 {
        return Err(Error::invalid(
            "label poisoning",
            "needs at least two classes to flip between",
        ));
    }
    let mut rng = rng::stream(seed, &[rng::STREAM_POISON]);
    let rows = poisoned_rows(&mut rng, data.len(), fraction);
    let mut labels = data.labels().to_vec();
    for &row in &rows {
        let old = labels[row];
        let draw = rng.gen_range(0..classes - 1);
        labels[row] = if draw >= old { draw + 1 } else { draw };
    }
    data.with_labels(labels)
}

fn stamp(inputs: &mut [f64], dim: usize, row: usize, pixels: &[usize], value: f64) {
    for &p in pixels {
        inputs[row * dim + p] = value;
    }
}

/// Poisons `round(fraction * len)` samples with a trigger patch: patch
/// pixels are set to the patch value and the label becomes `target`.
/// Requires image-shaped data. Rerunning with the same arguments is a
/// no-op on already-poisoned rows, so the operation is idempotent.
pub fn inject_backdoor(
    data: &Dataset,
    fraction: f64,
    pattern: &TriggerPattern,
    target: usize,
    seed: u64,
) -> Result<Dataset> {
    check_fraction(fraction)?;
    if target >= data.num_classes() {
        return Err(Error::invalid(
            "backdoor target",
            format!("class {target} out of range for {} classes", data.num_classes()),
        ));
    }
    let (rows_dim, cols_dim) = data.image_shape().ok_or_else(|| {
        Error::invalid("backdoor injection", "dataset has no image shape")
    })?;
    let pixels = pattern.pixel_indices(rows_dim, cols_dim)?;
    let mut rng = rng::stream(seed, &[rng::STREAM_POISON]);
    let rows = poisoned_rows(&mut rng, data.len(), fraction);
    let mut inputs = data.inputs().to_vec();
    let mut labels = data.labels().to_vec();
    for &row in &rows {
        stamp(&mut inputs, data.dim(), row, &pixels, pattern.value);
        labels[row] = target;
    }
    data.with_inputs(inputs)?.with_labels(labels)
}

/// Stamps the union of all patterns onto every sample, leaving labels
/// alone. This is the test-time trigger for measuring attack success.
pub fn apply_global_trigger(data: &Dataset, patterns: &[TriggerPattern]) -> Result<Dataset> {
    let (rows_dim, cols_dim) = data.image_shape().ok_or_else(|| {
        Error::invalid("global trigger", "dataset has no image shape")
    })?;
    let mut inputs = data.inputs().to_vec();
    for pattern in patterns {
        let pixels = pattern.pixel_indices(rows_dim, cols_dim)?;
        for row in 0..data.len() {
            stamp(&mut inputs, data.dim(), row, &pixels, pattern.value);
        }
    }
    data.with_inputs(inputs)
}

/// Attack success rate: among test samples whose true label is not the
/// target, the fraction the model sends to the target class once the
/// global trigger is stamped on. Errors when every sample already has the
/// target label, since the rate would be 0/0.
pub fn evaluate_asr(
    model: &ParamVector,
    test: &Dataset,
    patterns: &[TriggerPattern],
    target: usize,
) -> Result<f64> {
    let triggered = apply_global_trigger(test, patterns)?;
    let logits = forward(model, &triggered.to_batch())?;
    let mut eligible = 0usize;
    let mut hits = 0usize;
    for (row, &label) in test.labels().iter().enumerate() {
        if label == target {
            continue;
        }
        eligible += 1;
        let scores = logits.row(row);
        let mut arg = 0;
        for (j, &s) in scores.iter().enumerate() {
            if s > scores[arg] {
                arg = j;
            }
        }
        if arg == target {
            hits += 1;
        }
    }
    if eligible == 0 {
        return Err(Error::invalid(
            "attack success rate",
            "every test sample already has the target label",
        ));
    }
    Ok(hits as f64 / eligible as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_blobs;
    use crate::nn::{Activation, LayerLayout, LayerSpec, ParamVector};
    use proptest::prelude::*;
    use std::collections::HashSet;
    use std::sync::Arc;

    #[test]
    fn cohort_sizes_match_the_cap() {
        assert_eq!(select_malicious(10, 0.49, 1).unwrap().len(), 4);
        assert_eq!(select_malicious(10, 0.30, 1).unwrap().len(), 3);
        assert_eq!(select_malicious(10, 0.0, 1).unwrap().len(), 0);
        // floor(0.9 * 10) = 9 capped at floor(9/2) = 4.
        assert_eq!(select_malicious(10, 0.9, 1).unwrap().len(), 4);
        assert_eq!(select_malicious(1, 1.0, 1).unwrap().len(), 0);
        assert_eq!(select_malicious(2, 1.0, 1).unwrap().len(), 0);
        assert_eq!(select_malicious(3, 1.0, 1).unwrap().len(), 1);
    }

    #[test]
    fn cohort_is_seeded_and_in_range() {
        let a = select_malicious(20, 0.4, 7).unwrap();
        let b = select_malicious(20, 0.4, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 8);
        let unique: HashSet<usize> = a.iter().copied().collect();
        assert_eq!(unique.len(), 8);
        assert!(a.iter().all(|&i| i < 20));
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        let seeds_differ = (0..10).any(|s| select_malicious(20, 0.4, s).unwrap() != a);
        assert!(seeds_differ);
    }

    #[test]
    fn cohort_rejects_bad_arguments() {
        assert!(select_malicious(0, 0.3, 1).is_err());
        assert!(select_malicious(10, -0.1, 1).is_err());
        assert!(select_malicious(10, 1.5, 1).is_err());
        assert!(select_malicious(10, f64::NAN, 1).is_err());
    }

    #[test]
    fn poisoning_flips_exactly_the_budgeted_count() {
        let data = generate_blobs(4, 25, 3, 0.2, 11).unwrap();
        let poisoned = poison_labels(&data, 0.4, 5).unwrap();
        assert_eq!(poisoned.inputs(), data.inputs());
        let changed = data
            .labels()
            .iter()
            .zip(poisoned.labels())
            .filter(|(a, b)| a != b)
            .count();
        assert_eq!(changed, 40);
        assert!(poisoned.labels().iter().all(|&y| y < 4));
    }

    #[test]
    fn poisoning_extremes_and_errors() {
        let data = generate_blobs(3, 10, 2, 0.2, 3).unwrap();
        let untouched = poison_labels(&data, 0.0, 9).unwrap();
        assert_eq!(untouched, data);
        let all = poison_labels(&data, 1.0, 9).unwrap();
        let changed = data
            .labels()
            .iter()
            .zip(all.labels())
            .filter(|(a, b)| a != b)
            .count();
        assert_eq!(changed, 30);
        let single_class = generate_blobs(1, 10, 2, 0.2, 3).unwrap();
        assert!(poison_labels(&single_class, 0.5, 9).is_err());
        assert!(poison_labels(&data, 1.2, 9).is_err());
    }

    #[test]
    fn poisoned_labels_cover_all_alternatives() {
        // With one original class and many flips, every other class should
        // show up: the draw is uniform over the remaining three.
        let data = generate_blobs(4, 100, 2, 0.0, 2)
            .unwrap()
            .subset(&(0..100).collect::<Vec<_>>())
            .unwrap();
        assert!(data.labels().iter().all(|&y| y == 0));
        let poisoned = poison_labels(&data, 1.0, 13).unwrap();
        let mut seen = [0usize; 4];
        for &y in poisoned.labels() {
            seen[y] += 1;
        }
        assert_eq!(seen[0], 0);
        assert!(seen[1] > 0 && seen[2] > 0 && seen[3] > 0);
    }

    #[test]
    fn poisoning_is_deterministic_per_seed() {
        let data = generate_blobs(3, 20, 2, 0.2, 4).unwrap();
        let a = poison_labels(&data, 0.5, 21).unwrap();
        let b = poison_labels(&data, 0.5, 21).unwrap();
        assert_eq!(a, b);
        let c = poison_labels(&data, 0.5, 22).unwrap();
        assert_ne!(a, c);
    }

    fn image_dataset(n: usize, classes: usize, seed: u64) -> Dataset {
        let base = generate_blobs(classes, n, 64, 0.15, seed).unwrap();
        base.with_image_shape(8, 8).unwrap()
    }

    #[test]
    fn corner_patches_land_on_the_corners() {
        let patches = TriggerPattern::corner_patches();
        assert_eq!(patches.len(), 4);
        let tl = patches[0].pixel_indices(8, 8).unwrap();
        assert_eq!(tl, vec![0, 1, 8, 9]);
        let br = patches[3].pixel_indices(8, 8).unwrap();
        assert_eq!(br, vec![54, 55, 62, 63]);
        let tr = patches[1].pixel_indices(8, 8).unwrap();
        assert_eq!(tr, vec![6, 7, 14, 15]);
        let bl = patches[2].pixel_indices(8, 8).unwrap();
        assert_eq!(bl, vec![48, 49, 56, 57]);
        assert!(patches[0].pixel_indices(1, 8).is_err());
    }

    #[test]
    fn backdoor_poisons_the_budgeted_rows_only() {
        let data = image_dataset(30, 3, 17);
        let patch = TriggerPattern::corner_patches()[0];
        let poisoned = inject_backdoor(&data, 0.2, &patch, 0, 31).unwrap();
        let pixels = patch.pixel_indices(8, 8).unwrap();
        let mut dirty_rows = 0;
        for row in 0..data.len() {
            let before = data.input_row(row);
            let after = poisoned.input_row(row);
            let stamped = pixels.iter().all(|&p| after[p] == 1.0)
                && poisoned.labels()[row] == 0;
            let untouched_pixels: bool = (0..64)
                .filter(|p| !pixels.contains(p))
                .all(|p| before[p] == after[p]);
            assert!(untouched_pixels);
            if before != after || data.labels()[row] != poisoned.labels()[row] {
                assert!(stamped);
                dirty_rows += 1;
            }
        }
        // round(0.2 * 90) = 18 rows drawn; a drawn row that was already
        // class 0 with bright corners would not count as dirty, but the
        // stamped count can never exceed the budget.
        assert!(dirty_rows >= 1 && dirty_rows <= 18);
        let stamped_total = (0..poisoned.len())
            .filter(|&r| {
                pixels.iter().all(|&p| poisoned.input_row(r)[p] == 1.0)
                    && poisoned.labels()[r] == 0
            })
            .count();
        assert!(stamped_total >= 18);
    }

    #[test]
    fn backdoor_is_idempotent() {
        let data = image_dataset(25, 4, 19);
        let patch = TriggerPattern::corner_patches()[2];
        let once = inject_backdoor(&data, 0.3, &patch, 0, 7).unwrap();
        let twice = inject_backdoor(&once, 0.3, &patch, 0, 7).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn backdoor_rejects_unshaped_or_bad_target() {
        let flat = generate_blobs(3, 10, 64, 0.15, 23).unwrap();
        let patch = TriggerPattern::corner_patches()[0];
        assert!(inject_backdoor(&flat, 0.2, &patch, 0, 1).is_err());
        let shaped = flat.with_image_shape(8, 8).unwrap();
        assert!(inject_backdoor(&shaped, 0.2, &patch, 9, 1).is_err());
        assert!(inject_backdoor(&shaped, 0.2, &patch, 0, 1).is_ok());
    }

    #[test]
    fn global_trigger_stamps_every_sample_with_every_patch() {
        let data = image_dataset(12, 3, 29);
        let patches = TriggerPattern::corner_patches();
        let triggered = apply_global_trigger(&data, &patches).unwrap();
        assert_eq!(triggered.labels(), data.labels());
        let mut all_pixels = Vec::new();
        for p in &patches {
            all_pixels.extend(p.pixel_indices(8, 8).unwrap());
        }
        for row in 0..triggered.len() {
            let values = triggered.input_row(row);
            assert!(all_pixels.iter().all(|&p| values[p] == 1.0));
        }
    }

    /// A model that ignores its input: zero weights, one large bias entry.
    fn constant_predictor(dim: usize, classes: usize, winner: usize) -> ParamVector {
        let layout = Arc::new(
            LayerLayout::new(vec![LayerSpec {
                input_dim: dim,
                output_dim: classes,
                has_bias: true,
                activation: Activation::Identity,
            }])
            .unwrap(),
        );
        let mut model = ParamVector::zeros(layout);
        let bias_start = dim * classes;
        model.values_mut()[bias_start + winner] = 10.0;
        model
    }

    #[test]
    fn asr_counts_only_non_target_samples() {
        let data = image_dataset(10, 3, 37);
        let patches = TriggerPattern::corner_patches();
        let always_target = constant_predictor(64, 3, 0);
        let asr = evaluate_asr(&always_target, &data, &patches, 0).unwrap();
        assert_eq!(asr, 1.0);
        let never_target = constant_predictor(64, 3, 2);
        let asr = evaluate_asr(&never_target, &data, &patches, 0).unwrap();
        assert_eq!(asr, 0.0);
    }

    #[test]
    fn asr_errors_when_no_sample_can_flip() {
        let data = image_dataset(10, 1, 41);
        let patches = TriggerPattern::corner_patches();
        let model = constant_predictor(64, 1, 0);
        assert!(evaluate_asr(&model, &data, &patches, 0).is_err());
    }

    proptest! {
        #[test]
        fn honest_majority_always_holds(
            n in 1usize..60,
            ratio in 0.0f64..=1.0,
            seed in 0u64..200,
        ) {
            let cohort = select_malicious(n, ratio, seed).unwrap();
            prop_assert!(cohort.len() <= (n - 1) / 2);
            prop_assert!(cohort.len() <= (ratio * n as f64).floor() as usize);
            let unique: HashSet<usize> = cohort.iter().copied().collect();
            prop_assert_eq!(unique.len(), cohort.len());
            prop_assert!(cohort.iter().all(|&i| i < n));
        }

        #[test]
        fn poison_budget_is_exact(
            per_class in 2usize..12,
            fraction in 0.0f64..=1.0,
            seed in 0u64..100,
        ) {
            let data = generate_blobs(3, per_class, 2, 0.2, 5).unwrap();
            let poisoned = poison_labels(&data, fraction, seed).unwrap();
            let changed = data
                .labels()
                .iter()
                .zip(poisoned.labels())
                .filter(|(a, b)| a != b)
                .count();
            let expected = (fraction * data.len() as f64).round() as usize;
            prop_assert_eq!(changed, expected.min(data.len()));
        }
    }
}
