//! TOML run configuration shared by the CLI and the service.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{BackendConfig, MockTask, TaskFrame};
use crate::ctrlcode::{load_lexicon, ClassifierConfig, ConfigError};
use crate::metrics::LabelMode;
use crate::pipeline::PipelineConfig;
use crate::selection::DiversityWeights;
use crate::templates::{Sparsity, TemplateError, DEFAULT_BUDGET};

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parsing {path}: {source}")]
    Toml { path: PathBuf, source: Box<toml::de::Error> },
    #[error(transparent)]
    Classifier(#[from] ConfigError),
    #[error(transparent)]
    Templates(#[from] TemplateError),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierSettings {
    /// Replaces the built-in negation list when set.
    pub negation_lexicon: Option<Vec<String>>,
    pub negation_lexicon_file: Option<PathBuf>,
    pub quantifier_lexicon: Option<Vec<String>>,
    pub quantifier_lexicon_file: Option<PathBuf>,
    pub shuffle_overlap_min: f64,
    pub global_edit_max: f64,
    pub short_phrase_max: usize,
}

impl Default for ClassifierSettings {
    fn default() -> Self {
        let d = ClassifierConfig::default();
        ClassifierSettings {
            negation_lexicon: None,
            negation_lexicon_file: None,
            quantifier_lexicon: None,
            quantifier_lexicon_file: None,
            shuffle_overlap_min: d.shuffle_overlap_min,
            global_edit_max: d.global_edit_max,
            short_phrase_max: d.short_phrase_max,
        }
    }
}

impl ClassifierSettings {
    /// Builds the classifier; lexicon files resolve relative to `base`.
    pub fn build(&self, base: &Path) -> Result<ClassifierConfig, LoadError> {
        let mut c = ClassifierConfig {
            shuffle_overlap_min: self.shuffle_overlap_min,
            global_edit_max: self.global_edit_max,
            short_phrase_max: self.short_phrase_max,
            ..ClassifierConfig::default()
        };
        let read = |p: &PathBuf| {
            let path = base.join(p);
            std::fs::read_to_string(&path).map(|t| load_lexicon(&t)).map_err(|source| LoadError::Io { path, source })
        };
        if let Some(words) = &self.negation_lexicon {
            c.negation_lexicon = words.iter().map(|w| w.to_lowercase()).collect();
        }
        if let Some(p) = &self.negation_lexicon_file {
            c.negation_lexicon = read(p)?;
        }
        if let Some(words) = &self.quantifier_lexicon {
            c.quantifier_lexicon = words.iter().map(|w| w.to_lowercase()).collect();
        }
        if let Some(p) = &self.quantifier_lexicon_file {
            c.quantifier_lexicon = read(p)?;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionSettings {
    pub weights: DiversityWeights,
    pub k: usize,
}

impl Default for SelectionSettings {
    fn default() -> Self {
        SelectionSettings { weights: DiversityWeights::default(), k: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TemplateSettings {
    pub sparsity: Sparsity,
    pub budget: f64,
}

impl Default for TemplateSettings {
    fn default() -> Self {
        TemplateSettings { sparsity: Sparsity::default(), budget: DEFAULT_BUDGET }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricSettings {
    pub label_mode: LabelMode,
    pub generations_per_request: usize,
}

impl Default for MetricSettings {
    fn default() -> Self {
        MetricSettings { label_mode: LabelMode::Deprel, generations_per_request: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct TaskSettings {
    /// Task the built-in mock backend imitates.
    pub mock_task: MockTask,
    pub frame: TaskFrame,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub backend: BackendConfig,
    pub pipeline: PipelineConfig,
    pub classifier: ClassifierSettings,
    pub selection: SelectionSettings,
    pub templates: TemplateSettings,
    pub metrics: MetricSettings,
    pub task: TaskSettings,
    /// Directory relative lexicon paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self, LoadError> {
        let text = std::fs::read_to_string(path).map_err(|source| LoadError::Io { path: path.into(), source })?;
        let mut cfg = Self::from_toml(&text).map_err(|source| LoadError::Toml { path: path.into(), source: Box::new(source) })?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), LoadError> {
        self.classifier.build(&self.base_dir)?;
        self.templates.sparsity.validate()?;
        if !(self.templates.budget > 0.0 && self.templates.budget <= 1.0) {
            return Err(TemplateError::Budget(self.templates.budget.to_string()).into());
        }
        if self.pipeline.max_in_flight == 0 {
            return Err(LoadError::Invalid("pipeline.max_in_flight must be at least 1".into()));
        }
        if !(self.pipeline.fluency_threshold.is_finite() && self.pipeline.fluency_threshold >= 0.0) {
            return Err(LoadError::Invalid("pipeline.fluency_threshold must be a non-negative number".into()));
        }
        self.pipeline.params.validate().map_err(|e| LoadError::Invalid(e.to_string()))?;
        Ok(())
    }

    pub fn classifier(&self) -> Result<ClassifierConfig, LoadError> {
        self.classifier.build(&self.base_dir)
    }

    /// Overrides the blank-placement and generation seeds.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.pipeline.seed = seed;
        self.pipeline.params.seed = Some(seed);
        self
    }
}
