//! TOML experiment configuration.
//!
//! Relative paths are resolved against the directory holding the config
//! file. `model.feature_dim` and `model.n_domains` are taken from the data,
//! and `model.variant` from the run being trained, so those keys may be
//! omitted.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use ddsrank_core::data::SyntheticSpec;
use ddsrank_core::metrics::DEFAULT_K;
use ddsrank_core::model::{ModelConfig, Variant};
use ddsrank_core::train::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub out_dir: PathBuf,
    pub seeds: Vec<u64>,
    /// NDCG cutoff, also the interleaving page size.
    pub k: usize,
    /// Run names: `baseline` expands to one single-domain baseline per
    /// domain, `baseline@D` names one of them; `multihead`, `dda`, `dds`.
    pub variants: Vec<String>,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub interleave: InterleaveConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("out"),
            seeds: vec![0, 1, 2, 3, 4],
            k: DEFAULT_K,
            variants: ["baseline", "multihead", "dda", "dds"].map(String::from).to_vec(),
            data: DataConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            interleave: InterleaveConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Directory with `train.jsonl`, `valid.jsonl` and `test.jsonl`. When
    /// absent the synthetic spec is generated in memory.
    pub dir: Option<PathBuf>,
    pub synthetic: SyntheticSpec,
    /// Standardise features with statistics of the training split.
    pub normalize: bool,
    /// Append query/title similarity features when items carry text.
    pub text_features: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            dir: None,
            synthetic: SyntheticSpec::default(),
            normalize: true,
            text_features: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InterleaveConfig {
    pub impressions: usize,
    pub seed: u64,
    /// `[A, B]` run names; `baseline` resolves to the baseline of the
    /// domain under test.
    pub pairs: Vec<[String; 2]>,
    /// Examination probability per position; defaults to the NDCG discount
    /// over `k` positions.
    pub examination: Option<Vec<f64>>,
}

impl Default for InterleaveConfig {
    fn default() -> Self {
        Self {
            impressions: 10_000,
            seed: 0,
            pairs: vec![
                ["multihead".into(), "baseline".into()],
                ["dda".into(), "baseline".into()],
                ["dds".into(), "baseline".into()],
            ],
            examination: None,
        }
    }
}

/// One trained model per seed: a variant, optionally restricted to a domain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RunSpec {
    pub variant: Variant,
    /// Training and evaluation domain of single-domain baselines.
    pub domain: Option<usize>,
}

impl fmt::Display for RunSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.domain {
            Some(d) => write!(f, "{}@{d}", self.variant.name()),
            None => f.write_str(self.variant.name()),
        }
    }
}

impl RunSpec {
    /// Parses a run name, expanding a bare `baseline` to every domain.
    pub fn expand(name: &str, n_domains: usize) -> Result<Vec<RunSpec>> {
        let (variant_name, domain) = match name.split_once('@') {
            Some((v, d)) => {
                let d: usize = d
                    .parse()
                    .map_err(|_| Error::Config(format!("bad domain in run name {name:?}")))?;
                (v, Some(d))
            }
            None => (name, None),
        };
        let variant = Variant::from_name(variant_name)
            .ok_or_else(|| Error::Config(format!("unknown variant {variant_name:?}")))?;
        match (variant, domain) {
            (Variant::Baseline, None) => Ok((0..n_domains)
                .map(|d| RunSpec {
                    variant,
                    domain: Some(d),
                })
                .collect()),
            (Variant::Baseline, Some(d)) if d < n_domains => Ok(vec![RunSpec { variant, domain }]),
            (Variant::Baseline, Some(d)) => Err(Error::Config(format!("{name}: domain {d} out of range"))),
            (_, Some(_)) => Err(Error::Config(format!("{name}: only baselines are tied to a domain"))),
            (_, None) => Ok(vec![RunSpec { variant, domain: None }]),
        }
    }

    /// File stem shared by the model and history of one seed.
    pub fn file_stem(&self, seed: u64) -> String {
        format!("{}_s{seed}", self.to_string().replace('@', "-d"))
    }
}

impl ExperimentConfig {
    /// Reads a config file and resolves its relative paths.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        if self.out_dir.is_relative() {
            self.out_dir = base.join(&self.out_dir);
        }
        if let Some(dir) = self.data.dir.as_mut().filter(|d| d.is_relative()) {
            *dir = base.join(&*dir);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return Err(Error::Config(format!("seeds must be distinct: {:?}", self.seeds)));
        }
        if self.variants.is_empty() {
            return Err(Error::Config("variants must not be empty".into()));
        }
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        self.train.validate()?;
        if self.data.dir.is_none() {
            self.data.synthetic.validate()?;
        }
        Ok(())
    }

    /// The runs named by `variants`, deduplicated and in a fixed order.
    pub fn runs(&self, n_domains: usize) -> Result<Vec<RunSpec>> {
        let mut set = BTreeSet::new();
        for name in &self.variants {
            set.extend(RunSpec::expand(name, n_domains)?);
        }
        Ok(set.into_iter().collect())
    }

    /// Model config of `run` for data with the given shape.
    pub fn model_config(&self, run: RunSpec, feature_dim: usize, n_domains: usize) -> ModelConfig {
        ModelConfig {
            variant: run.variant,
            feature_dim,
            n_domains,
            ..self.model.clone()
        }
    }

    /// Training config of one seed: the seed drives both initialisation and
    /// batch order.
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            seed,
            k: self.k,
            ..self.train.clone()
        }
    }
}
