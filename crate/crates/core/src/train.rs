//! Per-client local training for one federated round.
//!
//! Three regimes share one mini-batch SGD loop and differ only in how the
//! raw batch gradient is adjusted before the optimizer step: plain SGD,
//! proximal SGD (gradient gains `mu * (w - global)`), and control-variate
//! corrected SGD (gradient gains `c - c_i`, momentum disabled).

use crate::data::Dataset;
use crate::nn::{loss_and_grad, OptimState, ParamVector, SgdConfig};
use crate::{Error, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Hyperparameters for one client's local pass.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub local_epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Proximal coefficient; only the proximal regime reads it.
    pub mu: f64,
    /// Seed for this client's shuffling stream this round.
    pub rng_stream: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.local_epochs == 0 {
            return Err(Error::invalid("train config", "local_epochs must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("train config", "batch_size must be >= 1"));
        }
        if !self.mu.is_finite() || self.mu < 0.0 {
            return Err(Error::invalid("train config", "mu must be finite and >= 0"));
        }
        SgdConfig {
            lr: self.lr,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
        }
        .validate()
    }

    fn sgd(&self, momentum: f64) -> SgdConfig {
        SgdConfig {
            lr: self.lr,
            momentum,
            weight_decay: self.weight_decay,
        }
    }
}

/// SCAFFOLD control variates: the client's own `c_i` and the server's `c`.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlVariate {
    pub client_c: ParamVector,
    pub server_c: ParamVector,
}

impl ControlVariate {
    pub fn zeros(layout: &std::sync::Arc<crate::nn::LayerLayout>) -> Self {
        ControlVariate {
            client_c: ParamVector::zeros(std::sync::Arc::clone(layout)),
            server_c: ParamVector::zeros(std::sync::Arc::clone(layout)),
        }
    }
}

/// What a client hands back to the server.
#[derive(Clone, Debug)]
pub struct LocalResult {
    pub model: ParamVector,
    /// Optimizer steps taken: `local_epochs * ceil(n / batch_size)`.
    pub tau: usize,
    /// Local sample count.
    pub samples: usize,
    /// New client control variate (control-variate regime only).
    pub updated_client_c: Option<ParamVector>,
}

enum Regime<'a> {
    Plain,
    Prox { global: &'a ParamVector, mu: f64 },
    Scaffold { correction: &'a ParamVector },
}

/// Adds the regime's term to a raw batch gradient. Zero-valued adjustments
/// are skipped entirely so degenerate cases (mu == 0, c_i == c) reproduce
/// the plain trajectory bit-for-bit.
fn augment_gradient(grad: &mut ParamVector, model: &ParamVector, regime: &Regime) -> Result<()> {
    match regime {
        Regime::Plain => Ok(()),
        Regime::Prox { global, mu } => {
            if *mu != 0.0 {
                let g = grad.values_mut();
                let w = model.values();
                let anchor = global.values();
                for j in 0..g.len() {
                    g[j] += mu * (w[j] - anchor[j]);
                }
            }
            Ok(())
        }
        Regime::Scaffold { correction } => {
            if correction.values().iter().any(|&v| v != 0.0) {
                grad.add_scaled(correction, 1.0)?;
            }
            Ok(())
        }
    }
}

fn run_local(
    global: &ParamVector,
    data: &Dataset,
    cfg: &TrainConfig,
    momentum: f64,
    regime: Regime<'_>,
) -> Result<LocalResult> {
    cfg.validate()?;
    let mut model = global.clone();
    let mut opt = OptimState::new(cfg.sgd(momentum), model.len())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_stream);
    let mut indices: Vec<usize> = (0..data.len()).collect();
    let mut tau = 0usize;
    for _ in 0..cfg.local_epochs {
        indices.shuffle(&mut rng);
        for chunk in indices.chunks(cfg.batch_size) {
            let batch = data.batch_of(chunk)?;
            let (_, mut grad) = loss_and_grad(&model, &batch)?;
            augment_gradient(&mut grad, &model, &regime)?;
            opt.step(&mut model, &grad)?;
            tau += 1;
        }
    }
    debug_assert_eq!(
        tau,
        cfg.local_epochs * data.len().div_ceil(cfg.batch_size)
    );
    Ok(LocalResult {
        model,
        tau,
        samples: data.len(),
        updated_client_c: None,
    })
}

/// Plain mini-batch SGD from the global weights.
pub fn train_plain(global: &ParamVector, data: &Dataset, cfg: &TrainConfig) -> Result<LocalResult> {
    run_local(global, data, cfg, cfg.momentum, Regime::Plain)
}

/// Proximal SGD: each step's gradient is augmented with
/// `mu * (w - global)` before momentum and decay.
pub fn train_prox(global: &ParamVector, data: &Dataset, cfg: &TrainConfig) -> Result<LocalResult> {
    run_local(
        global,
        data,
        cfg,
        cfg.momentum,
        Regime::Prox {
            global,
            mu: cfg.mu,
        },
    )
}

/// Control-variate corrected SGD: each step uses `g - c_i + c`, with
/// momentum disabled. The returned `updated_client_c` follows
/// `c_i <- c_i - c + (global - model) / (tau * lr)`, which needs `lr > 0`.
pub fn train_scaffold(
    global: &ParamVector,
    data: &Dataset,
    cfg: &TrainConfig,
    cv: &ControlVariate,
) -> Result<LocalResult> {
    if cfg.lr <= 0.0 {
        return Err(Error::invalid(
            "train config",
            "control-variate training requires lr > 0",
        ));
    }
    global.check_same_shape(&cv.client_c, "client control variate")?;
    global.check_same_shape(&cv.server_c, "server control variate")?;
    let correction = cv.server_c.sub(&cv.client_c)?;
    let mut result = run_local(
        global,
        data,
        cfg,
        0.0,
        Regime::Scaffold {
            correction: &correction,
        },
    )?;
    let scale = 1.0 / (result.tau as f64 * cfg.lr);
    let mut new_c = cv.client_c.clone();
    new_c.add_scaled(&cv.server_c, -1.0)?;
    let drift = global.sub(&result.model)?;
    new_c.add_scaled(&drift, scale)?;
    result.updated_client_c = Some(new_c);
    Ok(result)
}
