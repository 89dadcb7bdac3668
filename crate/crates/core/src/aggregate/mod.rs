//! Server-side aggregation: plain averaging baselines, control-variate
//! correction, and class-gradient masking. Each algorithm sits behind
//! [`AggregationStrategy`] and is built by name through [`build_strategy`],
//! so configs and the CLI select them at runtime.

mod baseline;
mod masked;
mod masking;

pub use baseline::{agg_fedavg, agg_fednova, agg_nwfedavg, agg_scaffold, ScaffoldServerMode};
pub use masked::{assign_dominant_class, assign_top_models, class_gradient, masked_round};
pub use masking::{
    build_mask, mask_importance, masked_aggregate, topk_threshold, update_mask, AssignmentMethod,
    Mask, MaskConfig, TopkScope,
};

use crate::data::ClassValidationSets;
use crate::nn::ParamVector;
use crate::{Error, Result};
use std::collections::BTreeMap;

/// What the local-training loop must do for a strategy's clients.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrainingRegime {
    Plain,
    /// Plain loss plus a proximal pull toward the round's global model.
    Proximal,
    /// Variance-reduced steps driven by client and server control variates.
    ControlVariate,
}

/// One client's round output as the server sees it.
#[derive(Clone, Debug)]
pub struct ClientContribution {
    pub id: usize,
    pub model: ParamVector,
    /// Local training-set size.
    pub samples: usize,
    /// Local optimization steps taken this round.
    pub tau: usize,
    /// Previous-round mask; the masked strategy fills this from its store.
    pub prev_mask: Option<Mask>,
    /// Control-variate change this round (new client variate minus old).
    pub control_delta: Option<ParamVector>,
    /// Full-batch local gradient at the client's final model.
    pub grad_at_local: Option<ParamVector>,
    /// Full-batch local gradient at the previous global model.
    pub grad_at_global: Option<ParamVector>,
}

impl ClientContribution {
    pub fn new(id: usize, model: ParamVector, samples: usize, tau: usize) -> Self {
        ClientContribution {
            id,
            model,
            samples,
            tau,
            prev_mask: None,
            control_delta: None,
            grad_at_local: None,
            grad_at_global: None,
        }
    }
}

/// Validated aggregation input: at least one client, ids strictly
/// increasing, every vector shaped like the previous global model.
#[derive(Clone, Debug)]
pub struct AggregationInput {
    clients: Vec<ClientContribution>,
    global_prev: ParamVector,
}

impl AggregationInput {
    pub fn new(clients: Vec<ClientContribution>, global_prev: ParamVector) -> Result<Self> {
        if clients.is_empty() {
            return Err(Error::empty("aggregation input"));
        }
        for pair in clients.windows(2) {
            if pair[0].id >= pair[1].id {
                return Err(Error::invalid(
                    "aggregation input",
                    format!(
                        "client ids must be strictly increasing, got {} then {}",
                        pair[0].id, pair[1].id
                    ),
                ));
            }
        }
        for client in &clients {
            if client.samples == 0 {
                return Err(Error::invalid(
                    "aggregation input",
                    format!("client {} reports zero samples", client.id),
                ));
            }
            if client.tau == 0 {
                return Err(Error::invalid(
                    "aggregation input",
                    format!("client {} reports zero local steps", client.id),
                ));
            }
            global_prev.check_same_shape(&client.model, "aggregation input model")?;
            if let Some(mask) = &client.prev_mask {
                global_prev.check_same_shape(mask.values(), "aggregation input mask")?;
            }
            for (field, name) in [
                (&client.control_delta, "control delta"),
                (&client.grad_at_local, "local gradient"),
                (&client.grad_at_global, "global gradient"),
            ] {
                if let Some(v) = field {
                    global_prev.check_same_shape(v, name)?;
                }
            }
        }
        Ok(AggregationInput {
            clients,
            global_prev,
        })
    }

    pub fn clients(&self) -> &[ClientContribution] {
        &self.clients
    }

    pub fn clients_mut(&mut self) -> &mut [ClientContribution] {
        &mut self.clients
    }

    pub fn global_prev(&self) -> &ParamVector {
        &self.global_prev
    }
}

/// Server-held resources a strategy may draw on during aggregation.
#[derive(Clone, Copy, Default)]
pub struct ServerContext<'a> {
    pub validation: Option<&'a ClassValidationSets>,
}

/// A pluggable server aggregation rule. Implementations may carry state
/// across rounds (mask stores, control variates), so `aggregate` takes
/// `&mut self` and must be called once per round in round order.
pub trait AggregationStrategy: Send {
    fn name(&self) -> &'static str;

    /// Which local-training variant this strategy's clients run.
    fn regime(&self) -> TrainingRegime {
        TrainingRegime::Plain
    }

    /// Whether the server must hold per-class validation sets.
    fn needs_validation(&self) -> bool {
        false
    }

    /// Whether clients must report full-batch gradients at the local and
    /// global points alongside their models.
    fn needs_gradient_probes(&self) -> bool {
        false
    }

    /// The server control variate to broadcast, if this strategy keeps one.
    fn server_control(&self) -> Option<&ParamVector> {
        None
    }

    fn aggregate(&mut self, input: AggregationInput, ctx: &ServerContext) -> Result<ParamVector>;
}

struct NwFedAvgStrategy;

impl AggregationStrategy for NwFedAvgStrategy {
    fn name(&self) -> &'static str {
        "nwfedavg"
    }

    fn aggregate(&mut self, input: AggregationInput, _ctx: &ServerContext) -> Result<ParamVector> {
        agg_nwfedavg(&input)
    }
}

struct FedAvgStrategy;

impl AggregationStrategy for FedAvgStrategy {
    fn name(&self) -> &'static str {
        "fedavg"
    }

    fn aggregate(&mut self, input: AggregationInput, _ctx: &ServerContext) -> Result<ParamVector> {
        agg_fedavg(&input)
    }
}

struct FedProxStrategy;

impl AggregationStrategy for FedProxStrategy {
    fn name(&self) -> &'static str {
        "fedprox"
    }

    fn regime(&self) -> TrainingRegime {
        TrainingRegime::Proximal
    }

    fn aggregate(&mut self, input: AggregationInput, _ctx: &ServerContext) -> Result<ParamVector> {
        agg_fedavg(&input)
    }
}

struct FedNovaStrategy;

impl AggregationStrategy for FedNovaStrategy {
    fn name(&self) -> &'static str {
        "fednova"
    }

    fn aggregate(&mut self, input: AggregationInput, _ctx: &ServerContext) -> Result<ParamVector> {
        agg_fednova(&input)
    }
}

struct ScaffoldStrategy {
    mode: ScaffoldServerMode,
    server_c: Option<ParamVector>,
}

impl AggregationStrategy for ScaffoldStrategy {
    fn name(&self) -> &'static str {
        "scaffold"
    }

    fn regime(&self) -> TrainingRegime {
        TrainingRegime::ControlVariate
    }

    fn needs_gradient_probes(&self) -> bool {
        self.mode == ScaffoldServerMode::GradientProbes
    }

    fn server_control(&self) -> Option<&ParamVector> {
        self.server_c.as_ref()
    }

    fn aggregate(&mut self, input: AggregationInput, _ctx: &ServerContext) -> Result<ParamVector> {
        let server_c = match &self.server_c {
            Some(c) => c.clone(),
            None => ParamVector::zeros(std::sync::Arc::clone(input.global_prev().layout())),
        };
        let (model, new_c) = agg_scaffold(&input, &server_c, self.mode)?;
        self.server_c = Some(new_c);
        Ok(model)
    }
}

struct MaskedStrategy {
    cfg: MaskConfig,
    masks: BTreeMap<usize, Mask>,
}

impl AggregationStrategy for MaskedStrategy {
    fn name(&self) -> &'static str {
        "masked"
    }

    fn needs_validation(&self) -> bool {
        true
    }

    fn aggregate(&mut self, mut input: AggregationInput, ctx: &ServerContext) -> Result<ParamVector> {
        let vsets = ctx.validation.ok_or_else(|| {
            Error::invalid(
                "masked aggregation",
                "server holds no per-class validation sets",
            )
        })?;
        for client in input.clients_mut() {
            if client.prev_mask.is_none() {
                client.prev_mask = self.masks.get(&client.id).cloned();
            }
        }
        let (global, new_masks) = masked_round(&input, vsets, &self.cfg)?;
        for (client, mask) in input.clients().iter().zip(new_masks) {
            self.masks.insert(client.id, mask);
        }
        Ok(global)
    }
}

type BuildFn = fn(&StrategyConfig) -> Result<Box<dyn AggregationStrategy>>;

/// Per-strategy knobs carried by the experiment config.
#[derive(Clone, Debug, Default)]
pub struct StrategyConfig {
    pub mask: MaskConfig,
    pub scaffold_mode: ScaffoldServerMode,
}

const STRATEGIES: &[(&str, BuildFn)] = &[
    ("nwfedavg", |_| Ok(Box::new(NwFedAvgStrategy))),
    ("fedavg", |_| Ok(Box::new(FedAvgStrategy))),
    ("fedprox", |_| Ok(Box::new(FedProxStrategy))),
    ("fednova", |_| Ok(Box::new(FedNovaStrategy))),
    ("scaffold", |cfg| {
        Ok(Box::new(ScaffoldStrategy {
            mode: cfg.scaffold_mode,
            server_c: None,
        }))
    }),
    ("masked", |cfg| {
        cfg.mask.validate()?;
        Ok(Box::new(MaskedStrategy {
            cfg: cfg.mask,
            masks: BTreeMap::new(),
        }))
    }),
];

pub fn strategy_names() -> Vec<&'static str> {
    STRATEGIES.iter().map(|(name, _)| *name).collect()
}

pub fn build_strategy(name: &str, cfg: &StrategyConfig) -> Result<Box<dyn AggregationStrategy>> {
    for (candidate, build) in STRATEGIES {
        if *candidate == name {
            return build(cfg);
        }
    }
    Err(Error::UnknownStrategy {
        name: name.to_string(),
        available: strategy_names().join(", "),
    })
}
