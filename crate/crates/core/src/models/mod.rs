//! Sentence classifiers: gazetteer dictionary, TF-IDF + linear SVM, and (Bi)LSTM variants.
//!
//! Every classifier consumes folded tokens and produces a [`Prediction`] whose label is
//! `probability >= 0.5`.

pub mod checkpoint;
pub mod dictionary;
pub mod gradcheck;
pub mod lstm;
pub mod optim;
pub mod recurrent;
pub mod svm;
pub mod tfidf;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::LabeledSentence;
use crate::embeddings::EmbeddingError;
use crate::scalar::Scalar;

pub use dictionary::DictionaryClassifier;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("the vectorizer has not been fitted")]
    NotFitted,
    #[error("training data is empty")]
    EmptyTrainingSet,
    #[error("training data contains only {0} examples; both classes are required")]
    SingleClass(&'static str),
    #[error("training diverged at epoch {epoch}, batch {batch}: loss is {loss}")]
    Diverged {
        epoch: usize,
        batch: usize,
        loss: f64,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cannot read or write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub probability: f64,
    pub label: bool,
}

impl Prediction {
    pub fn from_probability(probability: f64) -> Self {
        Prediction {
            probability,
            label: probability >= 0.5,
        }
    }
}

/// A folded token sequence with its gold label.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub tokens: Vec<String>,
    pub label: bool,
}

impl Example {
    pub fn new<S: AsRef<str>>(tokens: &[S], label: bool) -> Self {
        Example {
            tokens: tokens.iter().map(|t| t.as_ref().to_string()).collect(),
            label,
        }
    }

    /// `None` when the sentence has no gold label (an unresolved tie).
    pub fn from_labeled(s: &LabeledSentence) -> Option<Self> {
        s.gold.map(|label| Example {
            tokens: s
                .sentence
                .folded()
                .into_iter()
                .map(str::to_string)
                .collect(),
            label,
        })
    }
}

pub(crate) fn check_both_classes(examples: &[Example]) -> Result<(), ModelError> {
    if examples.is_empty() {
        return Err(ModelError::EmptyTrainingSet);
    }
    let positives = examples.iter().filter(|e| e.label).count();
    if positives == 0 {
        return Err(ModelError::SingleClass("negative"));
    }
    if positives == examples.len() {
        return Err(ModelError::SingleClass("positive"));
    }
    Ok(())
}

/// A trained model of any supported family, at 64-bit precision.
#[derive(Clone, Debug)]
pub enum Classifier {
    Dictionary(DictionaryClassifier),
    TfidfSvm(svm::TfidfSvm<f64>),
    Recurrent(recurrent::RecurrentClassifier<f64>),
}

impl Classifier {
    pub fn kind(&self) -> &'static str {
        match self {
            Classifier::Dictionary(_) => "dictionary",
            Classifier::TfidfSvm(_) => "tfidf-svm",
            Classifier::Recurrent(r) => r.kind(),
        }
    }

    pub fn predict<S: AsRef<str>>(&self, tokens: &[S]) -> Prediction {
        match self {
            Classifier::Dictionary(d) => d.predict(tokens),
            Classifier::TfidfSvm(s) => s.predict(tokens),
            Classifier::Recurrent(r) => r.predict(tokens),
        }
    }

    pub fn predict_all(&self, examples: &[Example]) -> Vec<Prediction> {
        examples.iter().map(|e| self.predict(&e.tokens)).collect()
    }
}

/// Binary predictions at the 0.5 threshold paired with gold labels.
pub fn prediction_pairs<T: Scalar>(probabilities: &[T], examples: &[Example]) -> Vec<(bool, bool)> {
    probabilities
        .iter()
        .zip(examples)
        .map(|(&p, e)| (p >= T::half(), e.label))
        .collect()
}
