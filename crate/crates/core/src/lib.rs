//! Deterministic federated-learning simulator.
//!
//! The crate simulates synchronous federated training rounds on small
//! multilayer perceptrons: clients train locally on non-IID partitions of a
//! dataset, a server-side aggregation strategy combines the client models,
//! and optional adversaries poison a subset of clients. Six interchangeable
//! aggregation strategies are registered by name (see [`aggregate`]); the
//! headline strategy masks each client model by the top-k magnitude entries
//! of a per-class validation gradient before averaging.
//!
//! Every run is a pure function of its configuration: all randomness flows
//! from one master seed through named sub-streams, and reductions run in a
//! fixed client order, so repeated runs produce bit-identical metrics
//! regardless of thread count.

pub mod aggregate;
pub mod attack;
pub mod data;
pub mod error;
pub mod exp;
pub mod nn;
pub mod rng;
pub mod train;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
