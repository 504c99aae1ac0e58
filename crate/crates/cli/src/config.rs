use std::path::{Path, PathBuf};

use clap::Args;
use fairdc::dataio::{load_csv, split, standardize, BlobSpec, CsvSchema, Dataset};
use fairdc::trainer::TrainConfig;
use fairdc::{Error, Result};
use serde::{Deserialize, Serialize};

pub const DEFAULT_CONFIG: &str = include_str!("../../../configs/biased_blobs.toml");

/// A complete, reproducible description of one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSource,
    /// Held-out fraction for a stratified train/test split.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_fraction: Option<f64>,
    /// Seed of the train/test split.
    #[serde(default)]
    pub split_seed: u64,
    /// Standardize features with statistics of the training rows.
    #[serde(default)]
    pub standardize: bool,
    /// Dump last-hidden-layer activations every this many epochs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embeddings_every: Option<usize>,
    #[serde(default)]
    pub train: TrainConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum DataSource {
    Blobs(BlobSpec),
    Csv {
        path: PathBuf,
        features: Vec<String>,
        psv: String,
        #[serde(default)]
        label: Option<String>,
    },
}

/// Command-line overrides applied on top of the config file.
#[derive(Args, Clone, Debug, Default)]
pub struct Overrides {
    /// Run configuration (TOML, or the JSON config echo of a report); defaults to the shipped biased-blobs config
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seed for initialization, batching and augmentation
    #[arg(long)]
    pub seed: Option<u64>,
    /// Weight of the fairness loss
    #[arg(long)]
    pub beta: Option<f64>,
    /// Weight of the augmentation loss
    #[arg(long)]
    pub gamma: Option<f64>,
    /// L2 weight penalty
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Allowed deviation of in-cluster group proportions (relaxed quotas)
    #[arg(long)]
    pub epsilon_relax: Option<f64>,
    /// Radius of the adversarial perturbation
    #[arg(long)]
    pub vat_epsilon: Option<f64>,
    /// Number of clusters
    #[arg(long)]
    pub k: Option<usize>,
    /// Minibatch size
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Epochs of unfair pretraining
    #[arg(long)]
    pub pretrain_epochs: Option<usize>,
    /// Upper bound on fair refinement epochs
    #[arg(long)]
    pub max_refine_epochs: Option<usize>,
}

impl Overrides {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => parse_config_file(path)?,
            None => parse_config(DEFAULT_CONFIG)?,
        };
        let t = &mut cfg.train;
        if let Some(v) = self.seed {
            t.seed = v;
        }
        if let Some(v) = self.beta {
            t.weights.beta = v;
        }
        if let Some(v) = self.gamma {
            t.weights.gamma = v;
        }
        if let Some(v) = self.alpha {
            t.weights.alpha = v;
        }
        if let Some(v) = self.epsilon_relax {
            t.fairness_relax = Some(v);
        }
        if let Some(v) = self.vat_epsilon {
            t.weights.vat_epsilon = v;
        }
        if let Some(v) = self.k {
            t.k = v;
        }
        if let Some(v) = self.batch_size {
            t.batch_size = v;
        }
        if let Some(v) = self.pretrain_epochs {
            t.pretrain_epochs = v;
        }
        if let Some(v) = self.max_refine_epochs {
            t.max_refine_epochs = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
}

fn parse_config_file(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::from(e).context(path.display().to_string()))?;
    let parsed = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))
    } else {
        parse_config(&text)
    };
    let mut cfg = parsed.map_err(|e| e.context(path.display().to_string()))?;
    if let DataSource::Csv { path: data, .. } = &mut cfg.data {
        if data.is_relative() {
            if let Some(dir) = path.parent() {
                *data = dir.join(&*data);
            }
        }
    }
    Ok(cfg)
}

impl RunConfig {
    /// Every offending field, reported together.
    pub fn problems(&self) -> Vec<String> {
        let mut out: Vec<String> = self.train.problems().into_iter().map(|p| format!("train: {p}")).collect();
        if let Some(f) = self.test_fraction {
            if !(f > 0.0 && f < 1.0) {
                out.push(format!("test_fraction must lie in (0, 1), got {f}"));
            }
        }
        if self.embeddings_every == Some(0) {
            out.push("embeddings_every must be positive".into());
        }
        if let DataSource::Blobs(b) = &self.data {
            if !(0.0..=1.0).contains(&b.psv_bias) {
                out.push(format!("data.blobs.psv_bias must lie in [0, 1], got {}", b.psv_bias));
            }
            if b.n_per_blob == 0 || b.k == 0 || b.d == 0 {
                out.push("data.blobs: n_per_blob, k and d must be positive".into());
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    pub fn load_data(&self) -> Result<Dataset> {
        match &self.data {
            DataSource::Blobs(spec) => spec.generate(),
            DataSource::Csv {
                path,
                features,
                psv,
                label,
            } => {
                let schema = CsvSchema {
                    features: features.clone(),
                    psv: psv.clone(),
                    label: label.clone(),
                };
                load_csv(path, &schema)
            }
        }
    }

    /// Training rows and, when a split is configured, held-out rows.
    pub fn prepare(&self) -> Result<(Dataset, Option<Dataset>)> {
        let data = self.load_data()?;
        let (mut train, mut test) = match self.test_fraction {
            Some(f) => {
                let s = split(&data, f, self.split_seed)?;
                (s.train, Some(s.test))
            }
            None => (data, None),
        };
        if self.standardize {
            let (z, scaler) = standardize(train.features.view())?;
            train.features = z;
            if let Some(t) = test.as_mut() {
                t.features = scaler.apply(t.features.view())?;
            }
        }
        Ok((train, test))
    }
}
