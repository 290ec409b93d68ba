//! Study configuration files (JSON).
//!
//! ```json
//! {
//!   "data": { "preset": "gmm", "n": 1500 },
//!   "models": [ { "kind": "gmm", "components": 1 }, { "kind": "gmm", "components": 3 } ],
//!   "replicates": 200,
//!   "seed": 7
//! }
//! ```
//!
//! Every field except `models` has a default. `PPN_SEED` in the environment
//! replaces `seed`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::checks::CheckConfig;
use crate::data::{read_csv, split_data, CsvLayout, DataSplit, Dataset, DEFAULT_FRACTIONS};
use crate::datagen::DataPreset;
use crate::diagnostics::{DiagnosticSpec, Reduction, DEFAULT_DRAWS};
use crate::error::{Error, Result};
use crate::linear::{EmConfig, PredictiveVariance};
use crate::mixture::GibbsConfig;
use crate::model::{FitConfig, Model, ModelKind};
use crate::outcome::StudyMode;
use crate::rng::Seed;

pub const SEED_ENV: &str = "PPN_SEED";

/// Where a study's data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum DataSource {
    Preset { preset: DataPreset, n: usize },
    File {
        path: PathBuf,
        #[serde(default = "continuous")]
        layout: CsvLayout,
    },
}

fn continuous() -> CsvLayout {
    CsvLayout::Continuous
}

/// A model entry; `id`, `reduction` and `draws` fall back to the model's
/// defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(flatten)]
    pub kind: ModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reduction: Option<Reduction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub draws: Option<usize>,
}

impl ModelEntry {
    pub fn model(&self) -> Model {
        let model = Model::new(self.kind.clone());
        match &self.id {
            Some(id) => model.with_id(id.clone()),
            None => model,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub data: Option<DataSource>,
    pub models: Vec<ModelEntry>,
    /// Fractions of rows going to (in, out, val).
    pub split: [f64; 3],
    pub replicates: usize,
    /// Default number of posterior draws averaged by each diagnostic.
    pub draws: usize,
    pub alpha: f64,
    pub tau: f64,
    pub seed: u64,
    pub mode: StudyMode,
    /// Reduction applied to every model without its own.
    pub reduction: Option<Reduction>,
    pub gibbs: GibbsConfig,
    pub em: EmConfig,
    pub regression_variance: PredictiveVariance,
}

impl Default for StudyConfig {
    fn default() -> Self {
        let check = CheckConfig::default();
        StudyConfig {
            data: None,
            models: Vec::new(),
            split: DEFAULT_FRACTIONS,
            replicates: check.replicates,
            draws: DEFAULT_DRAWS,
            alpha: check.alpha,
            tau: check.tau,
            seed: 0,
            mode: check.mode,
            reduction: None,
            gibbs: GibbsConfig::default(),
            em: EmConfig::default(),
            regression_variance: PredictiveVariance::default(),
        }
    }
}

impl StudyConfig {
    /// Parse JSON text. Malformed or inconsistent files are configuration
    /// errors.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: StudyConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.check_config()?;
        Ok(cfg)
    }

    /// Read a config file, then apply `PPN_SEED` if set.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        cfg.apply_env_seed(std::env::var(SEED_ENV).ok().as_deref())?;
        Ok(cfg)
    }

    pub fn apply_env_seed(&mut self, value: Option<&str>) -> Result<()> {
        if let Some(v) = value {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV}=`{v}` is not a nonnegative integer")))?;
        }
        Ok(())
    }

    fn check_config(&self) -> Result<()> {
        self.check_config_inner().map_err(|e| match e {
            Error::Config(_) => e,
            other => Error::Config(other.to_string()),
        })
    }

    fn check_config_inner(&self) -> Result<()> {
        self.check_config_settings()?;
        let mut ids: Vec<String> = self.models.iter().map(|m| m.model().id).collect();
        ids.sort();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Config(format!("model id `{}` appears twice", w[0])));
        }
        for spec in self.specs()? {
            spec.validate()?;
        }
        Ok(())
    }

    fn check_config_settings(&self) -> Result<()> {
        self.check().validate()?;
        if self.split.iter().any(|f| !(*f > 0.0)) || (self.split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config("`split` must be three positive fractions summing to 1".into()));
        }
        Ok(())
    }

    pub fn check(&self) -> CheckConfig {
        CheckConfig {
            replicates: self.replicates,
            alpha: self.alpha,
            tau: self.tau,
            mode: self.mode,
            fit: FitConfig {
                gibbs: self.gibbs,
                em: self.em,
                regression_variance: self.regression_variance,
            },
        }
    }

    pub fn models(&self) -> Vec<Model> {
        self.models.iter().map(ModelEntry::model).collect()
    }

    /// One diagnostic per model, with per-model overrides first, then the
    /// config-wide reduction, then the model's default.
    pub fn specs(&self) -> Result<Vec<DiagnosticSpec>> {
        self.models
            .iter()
            .map(|e| self.spec_for(e))
            .collect()
    }

    pub fn spec_for(&self, entry: &ModelEntry) -> Result<DiagnosticSpec> {
        let reduction = entry
            .reduction
            .or(self.reduction)
            .unwrap_or_else(|| entry.kind.default_reduction());
        DiagnosticSpec::new(entry.model().id, reduction, entry.draws.unwrap_or(self.draws))
    }

    /// Load or generate the configured data.
    pub fn dataset(&self) -> Result<Dataset> {
        match &self.data {
            Some(DataSource::Preset { preset, n }) => preset.generate(*n, self.seed),
            Some(DataSource::File { path, layout }) => read_csv(path, layout),
            None => Err(Error::Config("no `data` given".into())),
        }
    }

    pub fn split(&self, data: &Dataset) -> Result<DataSplit> {
        split_data(data, self.split, Seed::new(self.seed))
    }
}
