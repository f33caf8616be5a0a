//! Run configuration. Every default used by the command line is defined in
//! [`Settings::default`]; config files and `--set` flags override individual keys by
//! dotted path, e.g. `recurrent.train.adam.learning_rate = 0.005`.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use guestmix::composition::{Window, DEFAULT_MIN_SUPPORT};
use guestmix::gazetteer::ExpansionConfig;
use guestmix::models::gradcheck::DEFAULT_STEP;
use guestmix::models::recurrent::{Architecture, TrainConfig};
use guestmix::models::svm::SvmConfig;
use guestmix::models::tfidf::TfidfConfig;
use guestmix::synthetic::{BenchmarkConfig, SyntheticConfig};
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    /// Base seed; stages derive their own seeds from it with fixed offsets.
    pub seed: u64,
    pub ingest: IngestSettings,
    pub expansion: ExpansionConfig,
    pub sample: SampleSettings,
    pub split: SplitSettings,
    pub tfidf: TfidfConfig,
    pub svm: SvmConfig,
    pub recurrent: RecurrentSettings,
    pub aggregate: AggregateSettings,
    pub synth: SynthSettings,
    pub gradcheck: GradcheckSettings,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IngestSettings {
    /// `jsonl` or `csv`; inferred from the file extension when unset.
    pub format: Option<String>,
    /// One abbreviation per line, replacing the built-in list.
    pub abbreviations: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSettings {
    pub size: usize,
    pub with_term_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSettings {
    pub train_fraction: f64,
    /// Share of the training file held out for early stopping of recurrent models.
    pub early_stop_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecurrentSettings {
    pub architecture: Architecture,
    pub train: TrainConfig,
    pub learned_dim: usize,
    pub min_count: usize,
    pub buckets: usize,
    pub subword_epochs: usize,
    pub subword_lr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateSettings {
    pub window: Window,
    pub min_support: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSettings {
    pub corpus: SyntheticConfig,
    pub raters: usize,
    pub rater_flip: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradcheckSettings {
    pub seeds: u64,
    pub step: f64,
    pub tolerance: f64,
}

impl Default for Settings {
    fn default() -> Self {
        let b = BenchmarkConfig::default();
        Settings {
            seed: 0,
            ingest: IngestSettings {
                format: None,
                abbreviations: None,
            },
            expansion: b.expansion,
            sample: SampleSettings {
                size: b.sample_size,
                with_term_ratio: b.with_term_ratio,
            },
            split: SplitSettings {
                train_fraction: b.train_fraction,
                early_stop_fraction: b.early_stop_fraction,
            },
            tfidf: b.tfidf,
            svm: b.svm,
            recurrent: RecurrentSettings {
                architecture: b.architecture,
                train: b.train,
                learned_dim: b.learned_dim,
                min_count: b.min_count,
                buckets: b.buckets,
                subword_epochs: b.subword_epochs,
                subword_lr: b.subword_lr,
            },
            aggregate: AggregateSettings {
                window: Window::Quarter,
                min_support: DEFAULT_MIN_SUPPORT,
            },
            synth: SynthSettings {
                corpus: b.corpus,
                raters: b.raters,
                rater_flip: b.rater_flip,
            },
            gradcheck: GradcheckSettings {
                seeds: 10,
                step: DEFAULT_STEP,
                tolerance: 1e-4,
            },
        }
    }
}

/// Seed offsets per stage, shared with the synthetic benchmark.
pub mod offset {
    pub const SAMPLE: u64 = 1;
    pub const ANNOTATORS: u64 = 2;
    pub const SPLIT: u64 = 3;
    pub const EARLY_STOP: u64 = 4;
}

impl Settings {
    pub fn stage_seed(&self, offset: u64) -> u64 {
        self.seed.wrapping_add(offset)
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("settings serialize")
    }

    /// Applies a config file: a JSON object, or `key = value` lines with `#` comments.
    pub fn apply_file_text(&mut self, text: &str) -> Result<()> {
        let trimmed = text.trim_start();
        if trimmed.starts_with('{') {
            let overlay: Value =
                serde_json::from_str(trimmed).context("config is not valid JSON")?;
            let mut base = self.to_value();
            merge(&mut base, &overlay, "")?;
            *self = from_value(base)?;
            return Ok(());
        }
        for (i, line) in text.lines().enumerate() {
            let content = line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            self.apply_assignment(content)
                .with_context(|| format!("config line {}", i + 1))?;
        }
        Ok(())
    }

    /// `dotted.key=value`. The value is read as JSON when it parses, otherwise as a string.
    pub fn apply_assignment(&mut self, assignment: &str) -> Result<()> {
        let Some((key, raw)) = assignment.split_once('=') else {
            bail!("expected key=value, got '{assignment}'");
        };
        let (key, raw) = (key.trim(), raw.trim());
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let mut base = self.to_value();
        let mut slot = &mut base;
        for part in key.split('.') {
            slot = match slot.as_object_mut().and_then(|o| o.get_mut(part)) {
                Some(v) => v,
                None => bail!("unknown setting '{key}'"),
            };
        }
        *slot = value;
        *self = from_value(base).with_context(|| format!("invalid value for '{key}'"))?;
        Ok(())
    }

    /// The synthetic end-to-end comparison under these settings.
    pub fn benchmark_config(&self) -> BenchmarkConfig {
        BenchmarkConfig {
            corpus: self.synth.corpus.clone(),
            sample_size: self.sample.size,
            with_term_ratio: self.sample.with_term_ratio,
            raters: self.synth.raters,
            rater_flip: self.synth.rater_flip,
            train_fraction: self.split.train_fraction,
            early_stop_fraction: self.split.early_stop_fraction,
            expansion: self.expansion,
            svm: self.svm,
            tfidf: self.tfidf,
            architecture: self.recurrent.architecture.clone(),
            train: self.recurrent.train,
            learned_dim: self.recurrent.learned_dim,
            min_count: self.recurrent.min_count,
            buckets: self.recurrent.buckets,
            subword_epochs: self.recurrent.subword_epochs,
            subword_lr: self.recurrent.subword_lr,
            ..BenchmarkConfig::default()
        }
    }
}

fn from_value(v: Value) -> Result<Settings> {
    serde_json::from_value(v).map_err(|e| anyhow::anyhow!("{e}"))
}

fn merge(base: &mut Value, overlay: &Value, path: &str) -> Result<()> {
    let Some(fields) = overlay.as_object() else {
        *base = overlay.clone();
        return Ok(());
    };
    if !base.is_object() {
        *base = overlay.clone();
        return Ok(());
    }
    for (k, v) in fields {
        let key = if path.is_empty() {
            k.clone()
        } else {
            format!("{path}.{k}")
        };
        match base.as_object_mut().and_then(|o| o.get_mut(k)) {
            Some(slot) => merge(slot, v, &key)?,
            None => bail!("unknown setting '{key}'"),
        }
    }
    Ok(())
}
