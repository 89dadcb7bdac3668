//! Dirichlet non-IID partitioning.
//!
//! Class-balance skew is controlled by a symmetric Dirichlet draw per class:
//! small alpha concentrates a class on few clients, large alpha approaches a
//! uniform spread. The sampler is written out here (rather than taken from a
//! distributions crate) so the exact draw sequence is part of this crate's
//! contract and can be replayed by an independent oracle:
//!
//! 1. Per attempt, a fresh ChaCha8 generator is seeded with
//!    `seed + attempt`.
//! 2. For each class with at least one sample, in class order, draw
//!    `n_clients` Gamma(alpha, 1) variates and normalise them to
//!    proportions. Gamma uses Marsaglia-Tsang: for shape >= 1, repeat
//!    { x = standard normal (Box-Muller cosine branch, two uniforms);
//!    t = 1 + c*x; reject if t <= 0; v = t^3; u = uniform; accept if
//!    u < 1 - 0.0331*x^4, else accept if ln(u) < x^2/2 + d*(1 - v + ln v) }
//!    with d = shape - 1/3, c = 1/sqrt(9d), returning d*v. For shape < 1,
//!    draw Gamma(shape + 1) and multiply by uniform^(1/shape).
//! 3. Convert proportions to integer counts by largest remainder: floor
//!    every share, then hand the leftover samples to the largest fractional
//!    remainders (ties to the lower client index).
//! 4. Assign that class's sample indices contiguously, in dataset order,
//!    client 0 first.
//! 5. If some client ended up with no samples at all, redo everything with
//!    the next attempt seed, up to 100 attempts.

use super::dataset::Dataset;
use crate::rng::standard_normal;
use crate::{Error, Result};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Which sample indices each client owns. Assignments are disjoint, cover
/// the whole dataset, are sorted per client, and every client is non-empty.
#[derive(Clone, Debug, PartialEq)]
pub struct PartitionPlan {
    assignments: Vec<Vec<usize>>,
    alpha: f64,
    seed: u64,
}

impl PartitionPlan {
    pub fn n_clients(&self) -> usize {
        self.assignments.len()
    }

    pub fn client(&self, id: usize) -> &[usize] {
        &self.assignments[id]
    }

    pub fn assignments(&self) -> &[Vec<usize>] {
        &self.assignments
    }

    pub fn client_sizes(&self) -> Vec<usize> {
        self.assignments.iter().map(Vec::len).collect()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// One Gamma(shape, 1) draw via Marsaglia-Tsang (see module docs).
fn gamma_sample<R: Rng + ?Sized>(rng: &mut R, shape: f64) -> f64 {
    if shape < 1.0 {
        let boosted = gamma_sample(rng, shape + 1.0);
        let u: f64 = rng.gen();
        return boosted * u.powf(1.0 / shape);
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x = standard_normal(rng);
        let t = 1.0 + c * x;
        if t <= 0.0 {
            continue;
        }
        let v = t * t * t;
        let u: f64 = rng.gen();
        if u < 1.0 - 0.0331 * x.powi(4) {
            return d * v;
        }
        if u.ln() < 0.5 * x * x + d * (1.0 - v + v.ln()) {
            return d * v;
        }
    }
}

/// `n` shares from a symmetric Dirichlet(alpha). Falls back to uniform
/// shares in the measure-zero case where every gamma draw is zero.
fn dirichlet_proportions<R: Rng + ?Sized>(rng: &mut R, alpha: f64, n: usize) -> Vec<f64> {
    let draws: Vec<f64> = (0..n).map(|_| gamma_sample(rng, alpha)).collect();
    let total: f64 = draws.iter().sum();
    if total <= 0.0 || !total.is_finite() {
        return vec![1.0 / n as f64; n];
    }
    draws.iter().map(|g| g / total).collect()
}

/// Largest-remainder rounding of `proportions * total` to integer counts
/// that sum to `total`. Remainder ties go to the lower index.
fn largest_remainder(proportions: &[f64], total: usize) -> Vec<usize> {
    let mut counts: Vec<usize> = Vec::with_capacity(proportions.len());
    let mut remainders: Vec<(usize, f64)> = Vec::with_capacity(proportions.len());
    let mut assigned = 0usize;
    for (i, &p) in proportions.iter().enumerate() {
        let raw = p * total as f64;
        let base = raw.floor() as usize;
        counts.push(base);
        remainders.push((i, raw - base as f64));
        assigned += base;
    }
    // Distribute what the floors left over; descending remainder, ascending
    // index on ties. Floating error can only leave a handful of leftovers.
    remainders.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let mut leftover = total.saturating_sub(assigned);
    let mut k = 0;
    while leftover > 0 {
        counts[remainders[k % remainders.len()].0] += 1;
        leftover -= 1;
        k += 1;
    }
    // The mirror case (floors overshooting the total) needs proportions
    // summing above 1, which normalisation prevents; keep a hard check.
    let sum: usize = counts.iter().sum();
    debug_assert_eq!(sum, total);
    counts
}

/// Splits `data`'s sample indices over `n_clients` clients, one Dirichlet
/// draw per class. Deterministic for fixed `(data, n_clients, alpha, seed)`.
pub fn dirichlet_partition(
    data: &Dataset,
    n_clients: usize,
    alpha: f64,
    seed: u64,
) -> Result<PartitionPlan> {
    if n_clients == 0 {
        return Err(Error::invalid("dirichlet_partition", "n_clients must be >= 1"));
    }
    if n_clients > data.len() {
        return Err(Error::invalid(
            "dirichlet_partition",
            format!(
                "cannot give {} clients at least one of {} samples",
                n_clients,
                data.len()
            ),
        ));
    }
    if !alpha.is_finite() || alpha <= 0.0 {
        return Err(Error::invalid("dirichlet_partition", "alpha must be finite and > 0"));
    }

    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); data.num_classes()];
    for (i, &y) in data.labels().iter().enumerate() {
        by_class[y].push(i);
    }

    const MAX_ATTEMPTS: u64 = 100;
    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(attempt));
        let mut assignments: Vec<Vec<usize>> = vec![Vec::new(); n_clients];
        for class_indices in by_class.iter().filter(|c| !c.is_empty()) {
            let shares = dirichlet_proportions(&mut rng, alpha, n_clients);
            let counts = largest_remainder(&shares, class_indices.len());
            let mut cursor = 0usize;
            for (client, &count) in counts.iter().enumerate() {
                assignments[client].extend_from_slice(&class_indices[cursor..cursor + count]);
                cursor += count;
            }
        }
        if assignments.iter().all(|a| !a.is_empty()) {
            for a in &mut assignments {
                a.sort_unstable();
            }
            return Ok(PartitionPlan {
                assignments,
                alpha,
                seed,
            });
        }
    }
    Err(Error::invalid(
        "dirichlet_partition",
        format!("no attempt in {MAX_ATTEMPTS} left every client non-empty"),
    ))
}
