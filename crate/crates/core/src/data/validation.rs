//! Server-side per-class validation sets.

use super::dataset::Dataset;
use crate::{Error, Result};

/// One small validation set per class, carved from the test pool. Classes
/// with no samples available hold `None`.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassValidationSets {
    per_class: Vec<Option<Dataset>>,
}

impl ClassValidationSets {
    /// Builds validation sets from already-split per-class data. Slot `c`
    /// must hold only class-`c` samples; at least one slot must be filled.
    pub fn from_parts(per_class: Vec<Option<Dataset>>) -> Result<Self> {
        if per_class.iter().all(Option::is_none) {
            return Err(Error::empty("per-class validation sets"));
        }
        let mut dim = None;
        for (c, slot) in per_class.iter().enumerate() {
            let Some(data) = slot else { continue };
            if data.labels().iter().any(|&y| y != c) {
                return Err(Error::invalid(
                    "per-class validation sets",
                    format!("slot {c} holds samples of another class"),
                ));
            }
            match dim {
                None => dim = Some(data.dim()),
                Some(d) if d != data.dim() => {
                    return Err(Error::shape(
                        "per-class validation sets",
                        d.to_string(),
                        data.dim().to_string(),
                    ))
                }
                _ => {}
            }
        }
        Ok(ClassValidationSets { per_class })
    }

    pub fn num_classes(&self) -> usize {
        self.per_class.len()
    }

    pub fn get(&self, class: usize) -> Option<&Dataset> {
        self.per_class.get(class).and_then(Option::as_ref)
    }

    /// Classes that actually have validation samples, ascending.
    pub fn non_empty_classes(&self) -> Vec<usize> {
        self.per_class
            .iter()
            .enumerate()
            .filter_map(|(c, d)| d.as_ref().map(|_| c))
            .collect()
    }

    pub fn is_all_empty(&self) -> bool {
        self.per_class.iter().all(Option::is_none)
    }
}

/// Carves per-class validation sets from a test dataset: for each class, the
/// first `cap` of its samples (in dataset order) form that class's set; all
/// remaining samples form the returned holdout used for reported accuracy.
///
/// Deterministic and idempotent. `cap == 0` leaves every class empty.
/// Errors only if nothing would remain in the holdout.
pub fn split_validation(test: &Dataset, cap: usize) -> Result<(ClassValidationSets, Dataset)> {
    let classes = test.num_classes();
    let mut taken = vec![0usize; classes];
    let mut val_indices: Vec<Vec<usize>> = vec![Vec::new(); classes];
    let mut holdout_indices: Vec<usize> = Vec::new();
    for (i, &y) in test.labels().iter().enumerate() {
        if taken[y] < cap {
            taken[y] += 1;
            val_indices[y].push(i);
        } else {
            holdout_indices.push(i);
        }
    }
    if holdout_indices.is_empty() {
        return Err(Error::empty("holdout test set (validation cap took every sample)"));
    }
    let per_class = val_indices
        .iter()
        .map(|idx| {
            if idx.is_empty() {
                Ok(None)
            } else {
                test.subset(idx).map(Some)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let holdout = test.subset(&holdout_indices)?;
    Ok((ClassValidationSets { per_class }, holdout))
}
