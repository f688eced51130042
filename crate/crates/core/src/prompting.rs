//! Prompt templates, fine-tuning export and the external trainer configuration.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{DatasetSplit, Language, LexRecord};

/// Placeholder replaced by the target word.
pub const TARGET_PLACEHOLDER: &str = "<target>";

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("no built-in prompt for language `{0}`; supply a custom template")]
    UnsupportedLanguage(Language),
    #[error("template must contain `<target>` exactly once, found {0} occurrences")]
    BadTemplate(usize),
    #[error("template is for `{template}` but the record is `{record}`")]
    LanguageMismatch { template: Language, record: Language },
    #[error("invalid trainer config: {0}")]
    InvalidConfig(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PromptError + '_ {
    move |source| PromptError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub language: Language,
    pub template: String,
    /// Placed between the usage and the prompt.
    #[serde(default = "default_joiner")]
    pub joiner: String,
}

fn default_joiner() -> String {
    " ".to_owned()
}

impl PromptTemplate {
    pub fn new(language: Language, template: impl Into<String>) -> Result<Self, PromptError> {
        let template = template.into();
        let n = template.matches(TARGET_PLACEHOLDER).count();
        if n != 1 {
            return Err(PromptError::BadTemplate(n));
        }
        Ok(PromptTemplate {
            language,
            template,
            joiner: default_joiner(),
        })
    }

    pub fn with_joiner(mut self, joiner: impl Into<String>) -> Self {
        self.joiner = joiner.into();
        self
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        let n = self.template.matches(TARGET_PLACEHOLDER).count();
        if n != 1 {
            return Err(PromptError::BadTemplate(n));
        }
        Ok(())
    }
}

/// The prompt used for each supported language. The Finnish and German
/// templates start with a period because they follow the usage directly.
pub fn default_prompt(language: &Language) -> Result<PromptTemplate, PromptError> {
    let template = match language.code() {
        "ru" => "Что такое <target>?",
        "fi" => ". Mitä tarkoittaa <target>?",
        "de" => ". Was ist die Definition von <target>?",
        _ => return Err(PromptError::UnsupportedLanguage(language.clone())),
    };
    PromptTemplate::new(language.clone(), template)
}

/// Named alternatives shipped next to the defaults.
pub fn alternative_prompt(name: &str) -> Option<PromptTemplate> {
    match name {
        // tends to produce noun-style definitions for verbs and adjectives
        "fi-mika-on" => PromptTemplate::new(Language::finnish(), "Mikä on <target>?").ok(),
        "en" => PromptTemplate::new(
            Language::new("en").expect("valid code"),
            "What is the meaning of <target>?",
        )
        .ok(),
        _ => None,
    }
}

/// `usage + joiner + template`, with the placeholder replaced literally.
pub fn build_prompt(record: &LexRecord, template: &PromptTemplate) -> Result<String, PromptError> {
    if record.language != template.language {
        return Err(PromptError::LanguageMismatch {
            template: template.language.clone(),
            record: record.language.clone(),
        });
    }
    template.validate()?;
    let question = template.template.replacen(TARGET_PLACEHOLDER, &record.word, 1);
    let mut out = String::with_capacity(record.usage.len() + template.joiner.len() + question.len());
    out.push_str(&record.usage);
    out.push_str(&template.joiner);
    out.push_str(&question);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinetuneExample {
    pub input: String,
    pub output: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ExportCount {
    pub written: usize,
    pub skipped: usize,
}

/// Writes `{"input": .., "output": ..}` lines; records without a definition are skipped.
pub fn export_finetune_dataset(
    split: &DatasetSplit,
    template: &PromptTemplate,
    path: &Path,
) -> Result<ExportCount, PromptError> {
    let mut out = BufWriter::new(File::create(path).map_err(io_err(path))?);
    let mut count = ExportCount::default();
    for record in &split.records {
        let Some(definition) = record.definition.as_deref().filter(|d| !d.trim().is_empty()) else {
            count.skipped += 1;
            continue;
        };
        let example = FinetuneExample {
            input: build_prompt(record, template)?,
            output: definition.to_owned(),
        };
        let line = serde_json::to_string(&example).expect("plain strings serialize");
        writeln!(out, "{line}").map_err(io_err(path))?;
        count.written += 1;
    }
    out.flush().map_err(io_err(path))?;
    Ok(count)
}

/// QLoRA settings handed to an external trainer.
///
/// Weight decay and learning rate default to the encoder-decoder values;
/// decoder-only models were tuned with `weight_decay = 0.001` and
/// `learning_rate = 1e-4`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerConfig {
    pub epochs: u32,
    pub weight_decay: f64,
    pub learning_rate: f64,
    pub warmup_ratio: f64,
    pub batch_size: u32,
    pub optimizer: String,
    pub lora_rank: u32,
    pub lora_alpha: u32,
    pub lora_dropout: f64,
    pub notes: String,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            epochs: 1,
            weight_decay: 0.0,
            learning_rate: 5e-5,
            warmup_ratio: 0.05,
            batch_size: 16,
            optimizer: "paged_adamw_8bit".into(),
            lora_rank: 256,
            lora_alpha: 512,
            lora_dropout: 0.1,
            notes: "QLoRA adapters applied to all linear layers. Decoder-only models: \
                    weight_decay 0.001, learning_rate 1e-4."
                .into(),
        }
    }
}

/// Partial [`TrainerConfig`]; set fields replace the defaults. Numeric fields
/// are signed so that invalid values reach validation instead of failing to parse.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerOverrides {
    pub epochs: Option<i64>,
    pub weight_decay: Option<f64>,
    pub learning_rate: Option<f64>,
    pub warmup_ratio: Option<f64>,
    pub batch_size: Option<i64>,
    pub optimizer: Option<String>,
    pub lora_rank: Option<i64>,
    pub lora_alpha: Option<i64>,
    pub lora_dropout: Option<f64>,
}

fn positive_int(name: &str, v: i64) -> Result<u32, PromptError> {
    u32::try_from(v)
        .ok()
        .filter(|&v| v > 0)
        .ok_or_else(|| PromptError::InvalidConfig(format!("{name} must be a positive integer, got {v}")))
}

impl TrainerConfig {
    pub fn merged(overrides: &TrainerOverrides) -> Result<Self, PromptError> {
        let mut cfg = TrainerConfig::default();
        if let Some(v) = overrides.epochs {
            cfg.epochs = positive_int("epochs", v)?;
        }
        if let Some(v) = overrides.batch_size {
            cfg.batch_size = positive_int("batch_size", v)?;
        }
        if let Some(v) = overrides.lora_rank {
            cfg.lora_rank = positive_int("lora_rank", v)?;
        }
        if let Some(v) = overrides.lora_alpha {
            cfg.lora_alpha = positive_int("lora_alpha", v)?;
        }
        if let Some(v) = overrides.weight_decay {
            cfg.weight_decay = v;
        }
        if let Some(v) = overrides.learning_rate {
            cfg.learning_rate = v;
        }
        if let Some(v) = overrides.warmup_ratio {
            cfg.warmup_ratio = v;
        }
        if let Some(v) = overrides.lora_dropout {
            cfg.lora_dropout = v;
        }
        if let Some(v) = &overrides.optimizer {
            cfg.optimizer = v.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        let bad = |msg: String| Err(PromptError::InvalidConfig(msg));
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return bad(format!("weight_decay must be non-negative, got {}", self.weight_decay));
        }
        if !(0.0..=1.0).contains(&self.warmup_ratio) {
            return bad(format!("warmup_ratio must lie in [0, 1], got {}", self.warmup_ratio));
        }
        if !(0.0..1.0).contains(&self.lora_dropout) {
            return bad(format!("lora_dropout must lie in [0, 1), got {}", self.lora_dropout));
        }
        if self.optimizer.trim().is_empty() {
            return bad("optimizer must be named".into());
        }
        Ok(())
    }
}

pub fn export_trainer_config(overrides: &TrainerOverrides, path: &Path) -> Result<TrainerConfig, PromptError> {
    let cfg = TrainerConfig::merged(overrides)?;
    let mut body = serde_json::to_string_pretty(&cfg).expect("config serializes");
    body.push('\n');
    std::fs::write(path, body).map_err(io_err(path))?;
    Ok(cfg)
}
