//! Minimal neural-network core.
//!
//! Models are flat `f64` parameter vectors interpreted through a
//! [`LayerLayout`]. The only architecture is a small fully-connected
//! classifier trained with softmax cross-entropy; forward and backward
//! passes are written out by hand so the whole pipeline stays dependency-free
//! and bit-reproducible.

mod batch;
mod layout;
mod mlp;
mod optim;
mod params;

pub use batch::Batch;
pub use layout::{Activation, LayerLayout, LayerSpec, Segment, SegmentKind};
pub use mlp::{evaluate, forward, loss_and_grad, EvalReport, Logits};
pub use optim::{OptimState, SgdConfig};
pub use params::{init_he_uniform, ParamVector};
