//! Multi-config comparison: run a sweep, tabulate final-round metrics, and
//! report the masked strategy's percentage improvement over each baseline.

use crate::exp::config::ExperimentConfig;
use crate::exp::runner::run_experiment;
use crate::{Error, Result};
use std::fmt::Write as _;

/// Final-round summary of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct CompareRow {
    pub strategy: String,
    pub alpha: f64,
    pub master_seed: u64,
    pub final_accuracy: f64,
    pub final_asr: Option<f64>,
    /// Masked accuracy relative to this row, in percent; present only in
    /// sweeps of two or more configs that include a masked run.
    pub improvement_pct: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompareTable {
    pub rows: Vec<CompareRow>,
}

/// Fields allowed to vary across a sweep are neutralized before checking
/// that everything else matches.
fn sweep_key(cfg: &ExperimentConfig) -> ExperimentConfig {
    let mut key = cfg.clone();
    key.strategy = String::new();
    key.alpha = 0.0;
    key.master_seed = 0;
    key.output_path = None;
    key
}

/// Runs every config and tabulates final-round accuracy and ASR. Configs
/// may differ only in strategy, alpha, master_seed, and output_path; any
/// other difference is an error. When the sweep holds at least two configs
/// and one of them runs the masked strategy, each row carries the first
/// masked run's accuracy improvement over that row in percent.
pub fn compare_runs(configs: &[ExperimentConfig]) -> Result<CompareTable> {
    if configs.is_empty() {
        return Err(Error::empty("comparison sweep"));
    }
    let reference = sweep_key(&configs[0]);
    for cfg in &configs[1..] {
        if sweep_key(cfg) != reference {
            return Err(Error::invalid(
                "comparison sweep",
                "configs may differ only in strategy, alpha, master_seed, and output_path",
            ));
        }
    }
    let mut rows = Vec::with_capacity(configs.len());
    for cfg in configs {
        let metrics = run_experiment(cfg)?;
        let last = metrics.last().expect("runs always emit a round-zero row");
        rows.push(CompareRow {
            strategy: cfg.strategy.clone(),
            alpha: cfg.alpha,
            master_seed: cfg.master_seed,
            final_accuracy: last.clean_accuracy,
            final_asr: last.asr,
            improvement_pct: None,
        });
    }
    if rows.len() >= 2 {
        let masked_acc = rows
            .iter()
            .find(|r| r.strategy == "masked")
            .map(|r| r.final_accuracy);
        if let Some(masked) = masked_acc {
            for row in &mut rows {
                if row.final_accuracy > 0.0 {
                    row.improvement_pct =
                        Some((masked - row.final_accuracy) / row.final_accuracy * 100.0);
                }
            }
        }
    }
    Ok(CompareTable { rows })
}

impl CompareTable {
    /// Plain-text table, one run per line.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<10} {:>7} {:>12} {:>10} {:>8} {:>12}",
            "strategy", "alpha", "seed", "accuracy", "asr", "masked_gain"
        );
        for row in &self.rows {
            let asr = row
                .final_asr
                .map(|v| format!("{v:.4}"))
                .unwrap_or_else(|| "-".into());
            let gain = row
                .improvement_pct
                .map(|v| format!("{v:+.2}%"))
                .unwrap_or_else(|| "-".into());
            let _ = writeln!(
                out,
                "{:<10} {:>7} {:>12} {:>10.4} {:>8} {:>12}",
                row.strategy, row.alpha, row.master_seed, row.final_accuracy, asr, gain
            );
        }
        out
    }
}
