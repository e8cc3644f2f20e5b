//! Pipeline configuration: one TOML document, command-line flags override
//! file values, and the effective merged config is always written next to the
//! outputs for provenance. The random seed is mandatory — there is no
//! wall-clock default, so every run is reproducible by construction.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use relm_core::corpus::{ClassSpec, SplitSpec, TaskKind, TaskSchema};
use relm_core::finetune::FinetuneSchedule;
use relm_core::langmodel::{LmConfig, LmTrainConfig, Pooling};

use crate::error::{io_at, CliError, Result};

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// Global random seed. Required: set it here or with `--seed`.
    pub seed: Option<u64>,
    /// Directory receiving generated artifacts.
    pub output_dir: Option<PathBuf>,
    pub vocab: VocabSection,
    pub split: SplitSection,
    pub synth: SynthSection,
    pub task: TaskSection,
    pub lm: LmSection,
    pub finetune: FinetuneSection,
    pub baseline: BaselineSection,
    pub project: ProjectSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VocabSection {
    pub min_count: u64,
}

impl Default for VocabSection {
    fn default() -> Self {
        VocabSection { min_count: 5 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSection {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection {
            train: 0.85,
            valid: 0.10,
            test: 0.05,
        }
    }
}

impl SplitSection {
    pub fn spec(&self, seed: u64) -> SplitSpec {
        SplitSpec::new(
            &[("train", self.train), ("valid", self.valid), ("test", self.test)],
            seed,
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassEntry {
    pub name: String,
    pub prevalence: f64,
}

impl Default for ClassEntry {
    fn default() -> Self {
        ClassEntry {
            name: String::new(),
            prevalence: 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    pub n_reports: usize,
    pub negation_rate: f64,
    pub vocab_size: usize,
    pub classes: Vec<ClassEntry>,
}

impl Default for SynthSection {
    fn default() -> Self {
        SynthSection {
            n_reports: 1000,
            negation_rate: 0.4,
            vocab_size: 120,
            classes: vec![
                ClassEntry { name: "occlusion".into(), prevalence: 0.35 },
                ClassEntry { name: "hemorrhage".into(), prevalence: 0.30 },
                ClassEntry { name: "edema".into(), prevalence: 0.25 },
            ],
        }
    }
}

impl SynthSection {
    pub fn class_specs(&self) -> Vec<ClassSpec> {
        self.classes
            .iter()
            .map(|c| ClassSpec {
                name: c.name.clone(),
                prevalence: c.prevalence,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskSection {
    pub name: String,
    /// "binary" or "multilabel".
    pub kind: String,
    /// Class columns; defaults to the synthetic generator's class names.
    pub classes: Vec<String>,
}

impl Default for TaskSection {
    fn default() -> Self {
        TaskSection {
            name: "findings".into(),
            kind: "multilabel".into(),
            classes: vec!["occlusion".into(), "hemorrhage".into(), "edema".into()],
        }
    }
}

impl TaskSection {
    pub fn schema(&self) -> Result<TaskSchema> {
        let kind = match self.kind.as_str() {
            "binary" => TaskKind::Binary,
            "multilabel" => TaskKind::Multilabel,
            other => {
                return Err(CliError::Validation(format!(
                    "task.kind must be 'binary' or 'multilabel', got '{other}'"
                )))
            }
        };
        Ok(TaskSchema::new(&self.name, self.classes.clone(), kind)?)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LmSection {
    pub embedding_dim: usize,
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub dropout: f64,
    pub bptt_window: usize,
    pub batch_size: usize,
    /// "mean", "last" or "max".
    pub pooling: String,
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2_penalty: f64,
}

impl Default for LmSection {
    fn default() -> Self {
        LmSection {
            embedding_dim: 32,
            hidden_dim: 32,
            num_layers: 1,
            dropout: 0.1,
            bptt_window: 32,
            batch_size: 32,
            pooling: "mean".into(),
            learning_rate: 1e-3,
            epochs: 30,
            l2_penalty: 0.0,
        }
    }
}

impl LmSection {
    pub fn pooling(&self) -> Result<Pooling> {
        match self.pooling.as_str() {
            "mean" => Ok(Pooling::Mean),
            "last" => Ok(Pooling::Last),
            "max" => Ok(Pooling::Max),
            other => Err(CliError::Validation(format!(
                "lm.pooling must be 'mean', 'last' or 'max', got '{other}'"
            ))),
        }
    }

    pub fn lm_config(&self, vocab_size: usize) -> Result<LmConfig> {
        let config = LmConfig {
            vocab_size,
            embedding_dim: self.embedding_dim,
            hidden_dim: self.hidden_dim,
            num_layers: self.num_layers,
            dropout: self.dropout,
            bptt_window: self.bptt_window,
            batch_size: self.batch_size,
            pooling: self.pooling()?,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn train_config(&self, seed: u64) -> LmTrainConfig {
        LmTrainConfig {
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            l2_penalty: self.l2_penalty,
            seed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FinetuneSection {
    pub total_epochs: usize,
    pub freeze_epochs: usize,
    pub learning_rate: f64,
    pub encoder_lr_scale: f64,
    pub l2_penalty: f64,
    pub head_hidden: Vec<usize>,
    pub batch_size: usize,
    /// Decision threshold used when discretizing probabilities.
    pub threshold: f64,
}

impl Default for FinetuneSection {
    fn default() -> Self {
        FinetuneSection {
            total_epochs: 150,
            freeze_epochs: 50,
            learning_rate: 1e-2,
            encoder_lr_scale: 0.3,
            l2_penalty: 0.0,
            head_hidden: vec![64],
            batch_size: 32,
            threshold: 0.5,
        }
    }
}

impl FinetuneSection {
    pub fn schedule(&self) -> FinetuneSchedule {
        FinetuneSchedule {
            total_epochs: self.total_epochs,
            freeze_epochs: self.freeze_epochs,
            learning_rate: self.learning_rate,
            encoder_lr_scale: self.encoder_lr_scale,
            l2_penalty: self.l2_penalty,
            batch_size: self.batch_size,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineSection {
    /// Subset of "nb", "logistic", "svm", "mlp".
    pub models: Vec<String>,
    /// "tfidf" (built from report text) or "embeddings" (external files).
    pub feature: String,
    /// Laplace smoothing for Naive Bayes.
    pub alpha: f64,
    pub gd_learning_rate: f64,
    pub gd_epochs: usize,
    pub gd_regularization: f64,
    pub mlp_hidden: Vec<usize>,
    pub mlp_learning_rate: f64,
    pub mlp_epochs: usize,
    pub mlp_dropout: f64,
    pub mlp_l2: f64,
}

impl Default for BaselineSection {
    fn default() -> Self {
        BaselineSection {
            models: vec!["nb".into(), "logistic".into(), "svm".into(), "mlp".into()],
            feature: "tfidf".into(),
            alpha: 1.0,
            gd_learning_rate: 0.1,
            gd_epochs: 500,
            gd_regularization: 1e-4,
            mlp_hidden: vec![64],
            mlp_learning_rate: 1e-3,
            mlp_epochs: 300,
            mlp_dropout: 0.1,
            mlp_l2: 1e-5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProjectSection {
    /// Number of output coordinates; 2 or 3.
    pub k: usize,
    /// Subtract per-column means before fitting.
    pub centered: bool,
}

impl Default for ProjectSection {
    fn default() -> Self {
        ProjectSection { k: 2, centered: true }
    }
}

impl PipelineConfig {
    /// Loads the TOML file (if given) and applies flag overrides.
    pub fn resolve(
        path: Option<&Path>,
        seed: Option<u64>,
        output_dir: Option<PathBuf>,
    ) -> Result<PipelineConfig> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| io_at(p, e))?;
                toml::from_str(&text).map_err(|e| {
                    CliError::Validation(format!("config {}: {e}", p.display()))
                })?
            }
            None => PipelineConfig::default(),
        };
        if seed.is_some() {
            cfg.seed = seed;
        }
        if output_dir.is_some() {
            cfg.output_dir = output_dir;
        }
        Ok(cfg)
    }

    /// The mandatory global seed.
    pub fn seed(&self) -> Result<u64> {
        self.seed.ok_or_else(|| {
            CliError::Validation(
                "a seed is required: set `seed` in the config file or pass --seed".into(),
            )
        })
    }

    pub fn output_dir(&self) -> Result<&Path> {
        self.output_dir.as_deref().ok_or_else(|| {
            CliError::Validation(
                "an output directory is required: set `output_dir` in the config file or pass --output-dir".into(),
            )
        })
    }

    /// Writes the effective merged config next to the outputs.
    pub fn write_effective(&self, dir: &Path, command: &str) -> Result<()> {
        let rendered = toml::to_string_pretty(self)
            .map_err(|e| CliError::Internal(format!("config serialization: {e}")))?;
        let path = dir.join(format!("{command}_config.toml"));
        std::fs::write(&path, rendered).map_err(|e| io_at(&path, e))?;
        Ok(())
    }
}
