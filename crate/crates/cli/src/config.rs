//! Run configuration: built-in defaults, then an optional dataset preset,
//! then the JSON file, then command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use multifix::io::DatasetFiles;
use multifix::model::{ModelConfig, Preset, Variant};
use multifix::synth::SynthSpec;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetPaths {
    /// Directory with `edges.tsv`, `labels.tsv` and optional
    /// `features.{csv,bin}` / `splits.tsv`.
    pub dir: Option<PathBuf>,
    pub edges: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub splits: Option<PathBuf>,
}

impl DatasetPaths {
    pub fn files(&self) -> Result<DatasetFiles> {
        let files = match (&self.edges, &self.labels, &self.dir) {
            (Some(edges), Some(labels), _) => DatasetFiles {
                edges: edges.clone(),
                labels: labels.clone(),
                features: self.features.clone(),
                splits: self.splits.clone(),
            },
            (None, None, Some(dir)) => DatasetFiles::in_dir(dir),
            _ => bail!("no dataset configured: set dataset.dir, or dataset.edges and dataset.labels"),
        };
        let paths = [Some(&files.edges), Some(&files.labels), files.features.as_ref(), files.splits.as_ref()];
        for p in paths.into_iter().flatten() {
            if !p.exists() {
                bail!("dataset file {} does not exist", p.display());
            }
        }
        Ok(files)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub preset: Option<Preset>,
    pub model: ModelConfig,
    pub synth: SynthSpec,
    pub dataset: DatasetPaths,
    pub out_dir: PathBuf,
    pub n_splits: usize,
    /// One seed per split; derived from `model.seed` when empty.
    pub seeds: Vec<u64>,
    pub train_frac: f64,
    pub val_frac: f64,
    pub atypical_k: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            preset: None,
            model: ModelConfig::default(),
            synth: SynthSpec::default(),
            dataset: DatasetPaths::default(),
            out_dir: PathBuf::from("runs"),
            n_splits: 3,
            seeds: Vec::new(),
            train_frac: 0.6,
            val_frac: 0.2,
            atypical_k: 20,
        }
    }
}

/// Module switches of the ablation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Ablation {
    NoFr,
    NoLr,
    NoPe,
}

/// Command-line values that take precedence over the JSON file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub homophily: Option<f64>,
    pub feat_quality: Option<f64>,
    pub nodes: Option<usize>,
    pub variant: Option<Variant>,
    pub ablate: Vec<Ablation>,
    /// Skip-gram worker threads.
    pub threads: Option<usize>,
}

fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

impl RunConfig {
    /// Reads the optional JSON file and applies `flags` on top.
    pub fn resolve(path: Option<&Path>, flags: &Overrides) -> Result<Self> {
        let file: Value = match path {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
            }
            None => Value::Object(Default::default()),
        };
        let preset: Option<Preset> = match file.get("preset") {
            Some(v) if !v.is_null() => Some(serde_json::from_value(v.clone()).context("unknown preset")?),
            _ => None,
        };
        let variant = match (flags.variant, file.pointer("/model/variant")) {
            (Some(v), _) => v,
            (None, Some(v)) => serde_json::from_value(v.clone()).context("unknown variant")?,
            (None, None) => Variant::Linear,
        };
        let mut base = RunConfig::default();
        if let Some(p) = preset {
            base.model = ModelConfig::preset(p, variant);
        }
        let mut value = serde_json::to_value(&base)?;
        merge(&mut value, file);
        let mut cfg: RunConfig = serde_json::from_value(value).context("invalid run configuration")?;
        cfg.apply(flags);
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, flags: &Overrides) {
        if let Some(v) = flags.variant {
            self.model.variant = v;
        }
        if let Some(seed) = flags.seed {
            self.model.seed = seed;
            self.synth.seed = seed;
            self.seeds.clear();
        }
        if let Some(out) = &flags.out {
            self.out_dir = out.clone();
        }
        if let Some(dir) = &flags.data {
            self.dataset = DatasetPaths {
                dir: Some(dir.clone()),
                ..Default::default()
            };
        }
        if let Some(h) = flags.homophily {
            self.synth.target_homophily = h;
        }
        if let Some(r) = flags.feat_quality {
            self.synth.r_ori_feat = r;
        }
        if let Some(n) = flags.nodes {
            self.synth.n = n;
        }
        if let Some(t) = flags.threads {
            self.model.positional.threads = t;
        }
        for a in &flags.ablate {
            match a {
                Ablation::NoFr => self.model.enable_fr = false,
                Ablation::NoLr => self.model.enable_lr = false,
                Ablation::NoPe => self.model.enable_pe = false,
            }
        }
        if self.seeds.is_empty() {
            self.seeds = (0..self.n_splits as u64).map(|i| self.model.seed + i).collect();
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.synth.validate()?;
        if self.n_splits == 0 {
            bail!("n_splits must be at least 1");
        }
        if self.seeds.len() != self.n_splits {
            bail!("{} seeds given for {} splits", self.seeds.len(), self.n_splits);
        }
        Ok(())
    }

    /// Model settings for split `i`.
    pub fn split_model(&self, i: usize) -> ModelConfig {
        ModelConfig {
            seed: self.seeds[i],
            ..self.model.clone()
        }
    }

    pub fn write_effective(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let path = dir.join("effective_config.json");
        fs::write(&path, serde_json::to_string_pretty(self)? + "\n")
            .with_context(|| format!("writing {}", path.display()))
    }
}
