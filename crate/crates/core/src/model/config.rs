use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::ApMode;
use crate::positional::SkipGramConfig;
use crate::propagation::{Activation, Padding};

/// Readout family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Identity propagation, frozen features, one affine layer.
    Linear,
    /// ReLU propagation, learned feature transform, one affine layer.
    Mlp1,
    /// ReLU propagation, learned feature transform, three affine layers.
    Mlp3,
}

impl Variant {
    pub fn feature_activation(self) -> Activation {
        match self {
            Variant::Linear => Activation::Identity,
            Variant::Mlp1 | Variant::Mlp3 => Activation::Relu,
        }
    }

    pub fn has_feature_transform(self) -> bool {
        self != Variant::Linear
    }

    pub fn readout_layers(self) -> usize {
        match self {
            Variant::Linear | Variant::Mlp1 => 1,
            Variant::Mlp3 => 3,
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Variant::Linear),
            "mlp1" => Ok(Variant::Mlp1),
            "mlp3" => Ok(Variant::Mlp3),
            other => Err(Error::Config(format!("unknown variant {other:?}"))),
        }
    }
}

/// What to feed the feature module when a dataset has no node features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeaturePolicy {
    /// One-hot identity rows (`D = n`).
    Identity,
    /// A single column holding the node degree.
    Degree,
    /// Refuse featureless datasets.
    None,
}

/// Random-walk and skip-gram settings for the positional module.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PositionalConfig {
    pub walk_len: usize,
    pub walks_per_node: usize,
    pub window: usize,
    pub negative: usize,
    pub epochs: usize,
    pub lr: f64,
    pub threads: usize,
}

impl Default for PositionalConfig {
    fn default() -> Self {
        Self {
            walk_len: 10,
            walks_per_node: 10,
            window: 5,
            negative: 5,
            epochs: 5,
            lr: 0.025,
            threads: 1,
        }
    }
}

impl PositionalConfig {
    pub fn skipgram(&self, dim: usize) -> SkipGramConfig {
        SkipGramConfig {
            dim,
            window: self.window,
            negative: self.negative,
            epochs: self.epochs,
            lr: self.lr,
            threads: self.threads,
        }
    }
}

/// Adaptive-moment optimizer constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Every knob of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub variant: Variant,
    /// Feature propagation depth `K`.
    pub feature_depth: usize,
    /// Label propagation depth `N`.
    pub label_depth: usize,
    pub pe_dim: usize,
    pub hidden_dim: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub patience: usize,
    pub max_epochs: usize,
    pub enable_fr: bool,
    pub enable_lr: bool,
    pub enable_pe: bool,
    pub padding: Padding,
    pub feature_policy: FeaturePolicy,
    pub headline: ApMode,
    pub seed: u64,
    pub positional: PositionalConfig,
    pub adam: AdamConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Linear,
            feature_depth: 2,
            label_depth: 1,
            pe_dim: 64,
            hidden_dim: 256,
            lr: 0.01,
            weight_decay: 5e-4,
            patience: 100,
            max_epochs: 2000,
            enable_fr: true,
            enable_lr: true,
            enable_pe: true,
            padding: Padding::Zero,
            feature_policy: FeaturePolicy::Identity,
            headline: ApMode::Samples,
            seed: 0,
            positional: PositionalConfig::default(),
            adam: AdamConfig::default(),
        }
    }
}

/// Datasets with published hyperparameter presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    BlogCat,
    Yelp,
    Dblp,
    Pcg,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "blogcat" => Ok(Preset::BlogCat),
            "yelp" => Ok(Preset::Yelp),
            "dblp" => Ok(Preset::Dblp),
            "pcg" => Ok(Preset::Pcg),
            other => Err(Error::Config(format!("unknown preset {other:?}"))),
        }
    }
}

impl ModelConfig {
    /// Per-dataset, per-variant `(K, N, lr)`; patience 100, hidden 256 and
    /// `pe_dim` 64 throughout.
    pub fn preset(preset: Preset, variant: Variant) -> Self {
        use Preset::*;
        use Variant::*;
        let (label_depth, lr) = match (preset, variant) {
            (BlogCat, Linear) => (1, 0.03),
            (BlogCat, _) => (1, 0.01),
            (Yelp, _) => (25, 0.005),
            (Dblp, _) => (2, 0.01),
            (Pcg, Linear) => (1, 0.01),
            (Pcg, _) => (5, 0.01),
        };
        Self {
            variant,
            feature_depth: 2,
            label_depth,
            lr,
            hidden_dim: 256,
            pe_dim: 64,
            patience: 100,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.enable_fr || self.enable_lr || self.enable_pe) {
            return Err(Error::Config("at least one of FR, LR and PE must be enabled".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be at least 1".into()));
        }
        if self.enable_pe && self.pe_dim == 0 {
            return Err(Error::Config("pe_dim must be at least 1".into()));
        }
        if self.variant != Variant::Linear && self.hidden_dim == 0 {
            return Err(Error::Config("hidden_dim must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || self.weight_decay < 0.0 {
            return Err(Error::Config("lr must be positive and weight decay nonnegative".into()));
        }
        Ok(())
    }
}
