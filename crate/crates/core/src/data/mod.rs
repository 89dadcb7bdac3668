//! Datasets: in-memory container, synthetic blob generator, IDX file I/O,
//! non-IID partitioning, and per-class validation splits.

mod blobs;
mod dataset;
mod idx;
mod partition;
mod validation;

pub use blobs::{generate_blobs, generate_blobs_split};
pub use dataset::Dataset;
pub use idx::{load_idx, write_idx};
pub use partition::{dirichlet_partition, PartitionPlan};
pub use validation::{split_validation, ClassValidationSets};
