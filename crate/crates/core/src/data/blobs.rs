//! Synthetic Gaussian-blob classification data.

use super::dataset::Dataset;
use crate::rng::standard_normal;
use crate::{Error, Result};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn check_args(num_classes: usize, per_class: usize, dim: usize, spread: f64) -> Result<()> {
    if num_classes == 0 {
        return Err(Error::invalid("generate_blobs", "num_classes must be >= 1"));
    }
    if per_class == 0 {
        return Err(Error::invalid("generate_blobs", "per_class must be >= 1"));
    }
    if dim == 0 {
        return Err(Error::invalid("generate_blobs", "dim must be >= 1"));
    }
    if !spread.is_finite() || spread < 0.0 {
        return Err(Error::invalid("generate_blobs", "spread must be finite and >= 0"));
    }
    Ok(())
}

/// Centers live in [0.2, 0.8]^dim, keeping room on both sides so moderate
/// noise rarely saturates the clamp to [0, 1].
fn draw_centers(rng: &mut ChaCha8Rng, num_classes: usize, dim: usize) -> Vec<f64> {
    let mut centers = vec![0.0f64; num_classes * dim];
    for c in &mut centers {
        *c = rng.gen_range(0.2..0.8);
    }
    centers
}

/// Draws `per_class` rows around each center, class-major, sample-minor.
fn sample_rows(
    rng: &mut ChaCha8Rng,
    centers: &[f64],
    num_classes: usize,
    per_class: usize,
    dim: usize,
    spread: f64,
) -> Result<Dataset> {
    let n = num_classes * per_class;
    let mut inputs = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for class in 0..num_classes {
        let center = &centers[class * dim..(class + 1) * dim];
        for _ in 0..per_class {
            for &c in center {
                let x = c + spread * standard_normal(rng);
                inputs.push(x.clamp(0.0, 1.0));
            }
            labels.push(class);
        }
    }
    Dataset::new(inputs, dim, labels, num_classes)
}

/// Generates `num_classes * per_class` samples: one uniformly drawn center
/// per class, plus isotropic Gaussian noise of scale `spread`, clamped to
/// [0, 1] so values behave like pixel intensities.
///
/// Draw order is fixed: first every center coordinate (class-major), then
/// every sample coordinate (class-major, sample-minor). Rows are emitted
/// class-major, so `labels[i] == i / per_class`. With `spread == 0` every
/// sample equals its class center.
pub fn generate_blobs(
    num_classes: usize,
    per_class: usize,
    dim: usize,
    spread: f64,
    seed: u64,
) -> Result<Dataset> {
    check_args(num_classes, per_class, dim, spread)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = draw_centers(&mut rng, num_classes, dim);
    sample_rows(&mut rng, &centers, num_classes, per_class, dim, spread)
}

/// Generates a train/test pair that shares one set of class centers, so the
/// test split measures generalization on the same task rather than on a
/// freshly drawn one. The train split is bitwise identical to
/// `generate_blobs` with the same arguments; test rows continue the same
/// stream.
pub fn generate_blobs_split(
    num_classes: usize,
    per_class: usize,
    test_per_class: usize,
    dim: usize,
    spread: f64,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    check_args(num_classes, per_class, dim, spread)?;
    if test_per_class == 0 {
        return Err(Error::invalid("generate_blobs", "test_per_class must be >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = draw_centers(&mut rng, num_classes, dim);
    let train = sample_rows(&mut rng, &centers, num_classes, per_class, dim, spread)?;
    let test = sample_rows(&mut rng, &centers, num_classes, test_per_class, dim, spread)?;
    Ok((train, test))
}
