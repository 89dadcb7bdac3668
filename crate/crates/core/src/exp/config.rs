//! Declarative experiment configuration: a TOML document with nested
//! sections, unknown fields rejected, and every field defaulted except
//! `strategy`.

use crate::aggregate::{self, AssignmentMethod, MaskConfig, ScaffoldServerMode, TopkScope};
use crate::train::TrainConfig;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Aggregation strategy name; must match a registered strategy.
    pub strategy: String,
    pub n_clients: usize,
    pub rounds: usize,
    /// Dirichlet concentration for the label-skew partition.
    pub alpha: f64,
    pub master_seed: u64,
    /// Per-class cap on server validation samples carved from the test set.
    pub validation_cap: usize,
    /// Default metrics destination; the CLI's --out overrides it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_path: Option<String>,
    pub dataset: DatasetConfig,
    pub model: ModelConfig,
    pub train: TrainSection,
    pub mask: MaskSection,
    pub scaffold: ScaffoldSection,
    pub attack: AttackSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            strategy: String::new(),
            n_clients: 10,
            rounds: 100,
            alpha: 0.3,
            master_seed: 42,
            validation_cap: 32,
            output_path: None,
            dataset: DatasetConfig::default(),
            model: ModelConfig::default(),
            train: TrainSection::default(),
            mask: MaskSection::default(),
            scaffold: ScaffoldSection::default(),
            attack: AttackSection::default(),
        }
    }
}

/// Dataset source: synthetic Gaussian blobs or IDX files on disk. The
/// `kind` field selects which group of fields applies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub kind: DatasetKind,
    // Blob fields.
    pub classes: usize,
    pub per_class: usize,
    pub test_per_class: usize,
    pub dim: usize,
    pub spread: f64,
    /// Optional image geometry for blob data (needed by backdoor attacks).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub image_rows: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub image_cols: Option<usize>,
    // IDX fields.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_images: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_labels: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_images: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_labels: Option<String>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            kind: DatasetKind::Blobs,
            classes: 4,
            per_class: 200,
            test_per_class: 50,
            dim: 16,
            spread: 0.15,
            image_rows: None,
            image_cols: None,
            train_images: None,
            train_labels: None,
            test_images: None,
            test_labels: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Blobs,
    Idx,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Hidden width of the two-layer MLP.
    pub hidden: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig { hidden: 64 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub local_epochs: usize,
    /// Proximal coefficient; read only by the proximal strategy's clients.
    pub mu: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            lr: 0.01,
            momentum: 0.9,
            weight_decay: 1e-4,
            batch_size: 64,
            local_epochs: 10,
            mu: 0.01,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaskSection {
    pub zip_percent: f64,
    pub gamma: f64,
    pub beta: f64,
    pub scope: ScopeField,
    pub assignment: AssignmentField,
    /// Models per class under the top-models assignment.
    pub top_k: usize,
}

impl Default for MaskSection {
    fn default() -> Self {
        MaskSection {
            zip_percent: 0.5,
            gamma: 0.5,
            beta: 0.4,
            scope: ScopeField::PerTensor,
            assignment: AssignmentField::DominantClass,
            top_k: 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScopeField {
    PerTensor,
    Global,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssignmentField {
    DominantClass,
    TopModels,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScaffoldSection {
    pub server_mode: ServerModeField,
}

impl Default for ScaffoldSection {
    fn default() -> Self {
        ScaffoldSection {
            server_mode: ServerModeField::Standard,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ServerModeField {
    Standard,
    GradientProbes,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackSection {
    pub kind: AttackKind,
    /// Fraction of clients turned malicious.
    pub client_ratio: f64,
    /// Fraction of each malicious client's samples poisoned.
    pub fraction: f64,
    /// Backdoor target class.
    pub target: usize,
}

impl Default for AttackSection {
    fn default() -> Self {
        AttackSection {
            kind: AttackKind::None,
            client_ratio: 0.0,
            fraction: 0.0,
            target: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    None,
    /// Convergence prevention: flip poisoned labels uniformly at random.
    LabelFlip,
    /// Distributed backdoor: corner triggers plus a target label.
    Backdoor,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::ConfigParse(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.strategy.is_empty() {
            return Err(Error::config("strategy", "must name an aggregation strategy"));
        }
        if !aggregate::strategy_names().contains(&self.strategy.as_str()) {
            return Err(Error::UnknownStrategy {
                name: self.strategy.clone(),
                available: aggregate::strategy_names().join(", "),
            });
        }
        if self.n_clients == 0 {
            return Err(Error::config("n_clients", "must be at least 1"));
        }
        if !self.alpha.is_finite() || self.alpha <= 0.0 {
            return Err(Error::config("alpha", "must be finite and positive"));
        }
        if self.model.hidden == 0 {
            return Err(Error::config("model.hidden", "must be at least 1"));
        }
        self.dataset.validate()?;
        self.train_config(0).validate()?;
        if self.strategy == "masked" {
            self.mask_config()
                .validate()
                .map_err(|e| Error::config("mask", e.to_string()))?;
        }
        self.attack.validate()?;
        Ok(())
    }

    /// Training hyperparameters for one client-round; `rng_stream` is the
    /// caller-derived shuffle seed.
    pub fn train_config(&self, rng_stream: u64) -> TrainConfig {
        TrainConfig {
            local_epochs: self.train.local_epochs,
            batch_size: self.train.batch_size,
            lr: self.train.lr,
            momentum: self.train.momentum,
            weight_decay: self.train.weight_decay,
            mu: self.train.mu,
            rng_stream,
        }
    }

    pub fn mask_config(&self) -> MaskConfig {
        MaskConfig {
            zip_percent: self.mask.zip_percent,
            gamma: self.mask.gamma,
            beta: self.mask.beta,
            scope: match self.mask.scope {
                ScopeField::PerTensor => TopkScope::PerTensor,
                ScopeField::Global => TopkScope::Global,
            },
            assignment: match self.mask.assignment {
                AssignmentField::DominantClass => AssignmentMethod::DominantClass,
                AssignmentField::TopModels => AssignmentMethod::TopModels {
                    top_k: self.mask.top_k,
                },
            },
        }
    }

    pub fn strategy_config(&self) -> aggregate::StrategyConfig {
        aggregate::StrategyConfig {
            mask: self.mask_config(),
            scaffold_mode: match self.scaffold.server_mode {
                ServerModeField::Standard => ScaffoldServerMode::Standard,
                ServerModeField::GradientProbes => ScaffoldServerMode::GradientProbes,
            },
        }
    }
}

impl DatasetConfig {
    fn validate(&self) -> Result<()> {
        match self.kind {
            DatasetKind::Blobs => {
                if self.classes == 0 {
                    return Err(Error::config("dataset.classes", "must be at least 1"));
                }
                if self.per_class == 0 || self.test_per_class == 0 {
                    return Err(Error::config(
                        "dataset.per_class",
                        "train and test sets both need samples",
                    ));
                }
                if self.dim == 0 {
                    return Err(Error::config("dataset.dim", "must be at least 1"));
                }
                if !self.spread.is_finite() || self.spread < 0.0 {
                    return Err(Error::config("dataset.spread", "must be finite and >= 0"));
                }
                match (self.image_rows, self.image_cols) {
                    (None, None) => {}
                    (Some(r), Some(c)) if r * c == self.dim => {}
                    _ => {
                        return Err(Error::config(
                            "dataset.image_rows",
                            "image_rows * image_cols must equal dim",
                        ))
                    }
                }
            }
            DatasetKind::Idx => {
                for (field, value) in [
                    ("dataset.train_images", &self.train_images),
                    ("dataset.train_labels", &self.train_labels),
                    ("dataset.test_images", &self.test_images),
                    ("dataset.test_labels", &self.test_labels),
                ] {
                    if value.is_none() {
                        return Err(Error::config(field, "required when kind = \"idx\""));
                    }
                }
            }
        }
        Ok(())
    }
}

impl AttackSection {
    fn validate(&self) -> Result<()> {
        if self.kind == AttackKind::None {
            return Ok(());
        }
        if !self.client_ratio.is_finite() || !(0.0..=1.0).contains(&self.client_ratio) {
            return Err(Error::config("attack.client_ratio", "must lie in [0, 1]"));
        }
        if !self.fraction.is_finite() || !(0.0..=1.0).contains(&self.fraction) {
            return Err(Error::config("attack.fraction", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = ExperimentConfig::from_toml("strategy = \"fedavg\"\nalpha = 0.125\n").unwrap();
        assert_eq!(cfg.strategy, "fedavg");
        assert_eq!(cfg.alpha, 0.125);
        assert_eq!(cfg.n_clients, 10);
        assert_eq!(cfg.rounds, 100);
        assert_eq!(cfg.train.lr, 0.01);
        assert_eq!(cfg.train.momentum, 0.9);
        assert_eq!(cfg.train.weight_decay, 1e-4);
        assert_eq!(cfg.train.batch_size, 64);
        assert_eq!(cfg.train.local_epochs, 10);
        assert_eq!(cfg.train.mu, 0.01);
        assert_eq!(cfg.mask.zip_percent, 0.5);
        assert_eq!(cfg.mask.gamma, 0.5);
        assert_eq!(cfg.mask.beta, 0.4);
        assert_eq!(cfg.validation_cap, 32);
        assert_eq!(cfg.dataset.kind, DatasetKind::Blobs);
        assert_eq!(cfg.attack.kind, AttackKind::None);
    }

    #[test]
    fn missing_strategy_names_the_field() {
        let err = ExperimentConfig::from_toml("alpha = 0.5\n").unwrap_err();
        assert!(err.to_string().contains("strategy"));
        let err = ExperimentConfig::from_toml("strategy = \"\"\n").unwrap_err();
        assert!(err.to_string().contains("strategy"));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(ExperimentConfig::from_toml("strategy = \"fedavg\"\nlearning_rate = 3\n").is_err());
        assert!(
            ExperimentConfig::from_toml("strategy = \"fedavg\"\n[train]\nlrr = 0.1\n").is_err()
        );
    }

    #[test]
    fn unknown_strategy_is_rejected() {
        let err = ExperimentConfig::from_toml("strategy = \"median\"\n").unwrap_err();
        assert!(err.to_string().contains("median"));
    }

    #[test]
    fn toml_round_trip_is_identity() {
        let cfg = ExperimentConfig::from_toml(
            "strategy = \"masked\"\nrounds = 7\n[mask]\nscope = \"global\"\nassignment = \"top_models\"\ntop_k = 2\n[attack]\nkind = \"backdoor\"\nclient_ratio = 0.1\nfraction = 0.2\n",
        )
        .unwrap();
        let text = cfg.to_toml();
        let reparsed = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(cfg, reparsed);
    }

    #[test]
    fn idx_kind_requires_all_four_paths() {
        let err = ExperimentConfig::from_toml(
            "strategy = \"fedavg\"\n[dataset]\nkind = \"idx\"\ntrain_images = \"a\"\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("train_labels"));
    }

    #[test]
    fn image_geometry_must_match_dim() {
        let err = ExperimentConfig::from_toml(
            "strategy = \"fedavg\"\n[dataset]\ndim = 16\nimage_rows = 8\nimage_cols = 8\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("image_rows"));
        let ok = ExperimentConfig::from_toml(
            "strategy = \"fedavg\"\n[dataset]\ndim = 64\nimage_rows = 8\nimage_cols = 8\n",
        );
        assert!(ok.is_ok());
    }

    #[test]
    fn bad_hyperparameters_name_their_section() {
        for (text, needle) in [
            ("strategy = \"fedavg\"\nn_clients = 0\n", "n_clients"),
            ("strategy = \"fedavg\"\nalpha = 0.0\n", "alpha"),
            ("strategy = \"fedavg\"\n[model]\nhidden = 0\n", "hidden"),
            ("strategy = \"masked\"\n[mask]\ngamma = 0.0\n", "mask"),
            (
                "strategy = \"fedavg\"\n[attack]\nkind = \"label_flip\"\nclient_ratio = 1.4\n",
                "client_ratio",
            ),
            ("strategy = \"fedavg\"\n[dataset]\nspread = -1.0\n", "spread"),
        ] {
            let err = ExperimentConfig::from_toml(text).unwrap_err();
            assert!(err.to_string().contains(needle), "{text} -> {err}");
        }
        // A bad mask section is ignored unless the masked strategy runs.
        assert!(ExperimentConfig::from_toml("strategy = \"fedavg\"\n[mask]\ngamma = 0.0\n").is_ok());
    }

    #[test]
    fn validation_errors_map_to_exit_one() {
        let err = ExperimentConfig::from_toml("strategy = \"nope\"\n").unwrap_err();
        assert!(err.is_validation());
        let err = ExperimentConfig::from_toml("not toml [[[").unwrap_err();
        assert!(err.is_validation());
    }
}
