//! The round loop: build the federation from a config, train clients in
//! parallel between round barriers, aggregate, and evaluate.
//!
//! Determinism contract: every random draw comes from a stream derived
//! from the master seed and fixed tags (dataset, partition, init, attack,
//! and per-client per-round training), clients are reduced in id order,
//! and aggregation runs single-threaded. Metrics are therefore a pure
//! function of the config, bit-for-bit, at any worker count. The one
//! exception is the measured aggregation wall time.

use crate::aggregate::{
    build_strategy, AggregationInput, ClientContribution, ServerContext, TrainingRegime,
};
use crate::attack::{self, TriggerPattern};
use crate::data::{
    dirichlet_partition, generate_blobs_split, load_idx, split_validation, ClassValidationSets,
    Dataset,
};
use crate::exp::config::{AttackKind, DatasetKind, ExperimentConfig};
use crate::exp::metrics::RoundMetrics;
use crate::nn::{evaluate, init_he_uniform, loss_and_grad, LayerLayout, ParamVector};
use crate::rng;
use crate::train::{train_plain, train_prox, train_scaffold, ControlVariate, TrainConfig};
use crate::{Error, Result};
use rayon::prelude::*;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

fn load_sources(cfg: &ExperimentConfig) -> Result<(Dataset, Dataset)> {
    let d = &cfg.dataset;
    match d.kind {
        DatasetKind::Blobs => {
            let seed = rng::derive(cfg.master_seed, &[rng::STREAM_DATASET]);
            let (mut train, mut test) =
                generate_blobs_split(d.classes, d.per_class, d.test_per_class, d.dim, d.spread, seed)?;
            if let (Some(rows), Some(cols)) = (d.image_rows, d.image_cols) {
                train = train.with_image_shape(rows, cols)?;
                test = test.with_image_shape(rows, cols)?;
            }
            Ok((train, test))
        }
        DatasetKind::Idx => {
            fn path(s: &Option<String>) -> &Path {
                Path::new(s.as_deref().unwrap_or(""))
            }
            let train = load_idx(path(&d.train_images), path(&d.train_labels))?;
            let test = load_idx(path(&d.test_images), path(&d.test_labels))?;
            if train.dim() != test.dim() {
                return Err(Error::shape(
                    "train/test inputs",
                    format!("{} pixels", train.dim()),
                    format!("{} pixels", test.dim()),
                ));
            }
            // Labels may not cover the same range in both files; widen the
            // smaller class count so both sets agree with the model head.
            let classes = train.num_classes().max(test.num_classes());
            Ok((
                train.with_num_classes(classes)?,
                test.with_num_classes(classes)?,
            ))
        }
    }
}

/// Client shards in id order, with malicious shards already poisoned.
fn build_shards(cfg: &ExperimentConfig, train: &Dataset) -> Result<Vec<Dataset>> {
    let plan = dirichlet_partition(
        train,
        cfg.n_clients,
        cfg.alpha,
        rng::derive(cfg.master_seed, &[rng::STREAM_PARTITION]),
    )?;
    let mut shards = plan
        .assignments()
        .iter()
        .map(|rows| train.subset(rows))
        .collect::<Result<Vec<_>>>()?;
    if cfg.attack.kind == AttackKind::None {
        return Ok(shards);
    }
    let malicious =
        attack::select_malicious(cfg.n_clients, cfg.attack.client_ratio, cfg.master_seed)?;
    let patterns = TriggerPattern::corner_patches();
    for (rank, &client) in malicious.iter().enumerate() {
        let seed = rng::derive(cfg.master_seed, &[rng::STREAM_POISON, client as u64]);
        shards[client] = match cfg.attack.kind {
            AttackKind::None => unreachable!(),
            AttackKind::LabelFlip => {
                attack::poison_labels(&shards[client], cfg.attack.fraction, seed)?
            }
            AttackKind::Backdoor => attack::inject_backdoor(
                &shards[client],
                cfg.attack.fraction,
                &patterns[rank % patterns.len()],
                cfg.attack.target,
                seed,
            )?,
        };
    }
    Ok(shards)
}

fn measure(
    cfg: &ExperimentConfig,
    model: &ParamVector,
    holdout: &Dataset,
    round: usize,
    agg_wall_ms: f64,
) -> Result<RoundMetrics> {
    let report = evaluate(model, &holdout.to_batch())?;
    let asr = match cfg.attack.kind {
        AttackKind::Backdoor => Some(attack::evaluate_asr(
            model,
            holdout,
            &TriggerPattern::corner_patches(),
            cfg.attack.target,
        )?),
        _ => None,
    };
    Ok(RoundMetrics {
        round,
        strategy: cfg.strategy.clone(),
        clean_accuracy: report.accuracy,
        asr,
        per_class_accuracy: report.per_class,
        agg_wall_ms,
    })
}

struct LocalOutcome {
    contribution: ClientContribution,
    new_client_c: Option<ParamVector>,
}

#[allow(clippy::too_many_arguments)]
fn run_client(
    id: usize,
    round: usize,
    cfg: &ExperimentConfig,
    shard: &Dataset,
    global: &ParamVector,
    regime: TrainingRegime,
    client_c: Option<&ParamVector>,
    server_c: Option<&ParamVector>,
    probe_gradients: bool,
) -> Result<LocalOutcome> {
    let stream = rng::derive(cfg.master_seed, &[rng::STREAM_TRAIN, id as u64, round as u64]);
    let train_cfg: TrainConfig = cfg.train_config(stream);
    let grad_at_global = if probe_gradients {
        Some(loss_and_grad(global, &shard.to_batch())?.1)
    } else {
        None
    };
    let result = match regime {
        TrainingRegime::Plain => train_plain(global, shard, &train_cfg)?,
        TrainingRegime::Proximal => train_prox(global, shard, &train_cfg)?,
        TrainingRegime::ControlVariate => {
            let cv = ControlVariate {
                client_c: client_c.expect("control regime keeps client variates").clone(),
                server_c: server_c.expect("control regime keeps a server variate").clone(),
            };
            train_scaffold(global, shard, &train_cfg, &cv)?
        }
    };
    let grad_at_local = if probe_gradients {
        Some(loss_and_grad(&result.model, &shard.to_batch())?.1)
    } else {
        None
    };
    let control_delta = match (&result.updated_client_c, client_c) {
        (Some(new), Some(old)) => Some(new.sub(old)?),
        _ => None,
    };
    let mut contribution = ClientContribution::new(id, result.model, result.samples, result.tau);
    contribution.control_delta = control_delta;
    contribution.grad_at_local = grad_at_local;
    contribution.grad_at_global = grad_at_global;
    Ok(LocalOutcome {
        contribution,
        new_client_c: result.updated_client_c,
    })
}

/// Runs the full experiment and returns one metrics row per round, plus a
/// leading row for the untrained initial model.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RoundMetrics>> {
    cfg.validate()?;
    let (train, test) = load_sources(cfg)?;
    let (vsets, holdout) = split_validation(&test, cfg.validation_cap)?;
    let shards = build_shards(cfg, &train)?;
    let layout = Arc::new(LayerLayout::mlp(
        train.dim(),
        cfg.model.hidden,
        train.num_classes(),
    )?);
    let mut strategy = build_strategy(&cfg.strategy, &cfg.strategy_config())?;
    if strategy.needs_validation() && vsets.is_all_empty() {
        return Err(Error::config(
            "validation_cap",
            format!("strategy {} needs per-class validation samples", cfg.strategy),
        ));
    }
    let mut global = init_he_uniform(&layout, rng::derive(cfg.master_seed, &[rng::STREAM_INIT]));
    let regime = strategy.regime();
    let mut client_c: Vec<ParamVector> = match regime {
        TrainingRegime::ControlVariate => (0..cfg.n_clients)
            .map(|_| ParamVector::zeros(Arc::clone(&layout)))
            .collect(),
        _ => Vec::new(),
    };
    let mut rows = Vec::with_capacity(cfg.rounds + 1);
    rows.push(measure(cfg, &global, &holdout, 0, 0.0)?);
    for round in 1..=cfg.rounds {
        let in_round = |e: Error| Error::invalid(format!("round {round}"), e.to_string());
        let server_c = match regime {
            TrainingRegime::ControlVariate => Some(
                strategy
                    .server_control()
                    .cloned()
                    .unwrap_or_else(|| ParamVector::zeros(Arc::clone(&layout))),
            ),
            _ => None,
        };
        let probe = strategy.needs_gradient_probes();
        let outcomes: Vec<Result<LocalOutcome>> = (0..cfg.n_clients)
            .into_par_iter()
            .map(|id| {
                run_client(
                    id,
                    round,
                    cfg,
                    &shards[id],
                    &global,
                    regime,
                    client_c.get(id),
                    server_c.as_ref(),
                    probe,
                )
            })
            .collect();
        let mut contributions = Vec::with_capacity(cfg.n_clients);
        for (id, outcome) in outcomes.into_iter().enumerate() {
            let outcome = outcome.map_err(in_round)?;
            if let Some(new_c) = outcome.new_client_c {
                client_c[id] = new_c;
            }
            contributions.push(outcome.contribution);
        }
        let input = AggregationInput::new(contributions, global.clone()).map_err(in_round)?;
        let ctx = ServerContext {
            validation: Some(&vsets),
        };
        let started = Instant::now();
        global = strategy.aggregate(input, &ctx).map_err(in_round)?;
        let agg_wall_ms = started.elapsed().as_secs_f64() * 1e3;
        global
            .ensure_finite("aggregated global model")
            .map_err(in_round)?;
        rows.push(measure(cfg, &global, &holdout, round, agg_wall_ms)?);
    }
    Ok(rows)
}

/// The server-side validation sets and holdout a config would produce;
/// exposed for tools that inspect a run's data without training.
pub fn prepared_validation(cfg: &ExperimentConfig) -> Result<(ClassValidationSets, Dataset)> {
    let (_, test) = load_sources(cfg)?;
    split_validation(&test, cfg.validation_cap)
}
