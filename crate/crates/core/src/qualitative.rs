//! Fixed edge-case sentences for inspecting a trained classifier: OOV typos of demonyms,
//! slang, and nationality words that refer to restaurants or locations instead of guests.

use serde::{Deserialize, Serialize};

use crate::corpus::folded_tokens;
use crate::embeddings::EmbeddingTable;
use crate::models::Classifier;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QualitativeCase {
    pub text: &'static str,
    pub gold: bool,
    /// Cases that are only recorded do not count toward the score.
    pub scored: bool,
}

pub const CASES: [QualitativeCase; 6] = [
    QualitativeCase {
        text: "Das Hotel war komplett voll mit Andoranern.",
        gold: true,
        scored: true,
    },
    QualitativeCase {
        text: "Beim Afgahnen war das Essen vorzüglich.",
        gold: false,
        scored: true,
    },
    QualitativeCase {
        text: "Die Amis sind wieder negativ aufgefallen.",
        gold: true,
        scored: true,
    },
    QualitativeCase {
        text: "Im Zentrum gibt es auch Pubs, Pizza, Chinesen etc.",
        gold: false,
        scored: true,
    },
    QualitativeCase {
        text: "Beim Italiener war das Essen fantastisch.",
        gold: false,
        scored: true,
    },
    QualitativeCase {
        text: "Richtung inland gibt es viele Italiener die preiswert sind.",
        gold: false,
        scored: false,
    },
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualitativeRow {
    pub text: String,
    pub gold: bool,
    pub scored: bool,
    pub probability: f64,
    pub predicted: bool,
    pub correct: bool,
    /// Tokens missing from the pretrained table, when one was supplied.
    pub oov_tokens: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualitativeReport {
    pub model: String,
    pub rows: Vec<QualitativeRow>,
    pub scored_correct: usize,
    pub scored_total: usize,
}

impl QualitativeReport {
    pub fn render_text(&self) -> String {
        let mut out = format!("model: {}\n", self.model);
        for r in &self.rows {
            let mark = if !r.scored {
                " "
            } else if r.correct {
                "+"
            } else {
                "-"
            };
            out.push_str(&format!(
                "{mark} {:<5} p={:.3} gold={:<5} {}",
                r.predicted, r.probability, r.gold, r.text
            ));
            if !r.oov_tokens.is_empty() {
                out.push_str(&format!("  [oov: {}]", r.oov_tokens.join(", ")));
            }
            out.push('\n');
        }
        out.push_str(&format!(
            "scored rows correct: {}/{}\n",
            self.scored_correct, self.scored_total
        ));
        out
    }
}

pub fn run<T: Scalar>(
    classifier: &Classifier,
    table: Option<&EmbeddingTable<T>>,
) -> QualitativeReport {
    let rows: Vec<QualitativeRow> = CASES
        .iter()
        .map(|case| {
            let tokens = folded_tokens(case.text);
            let p = classifier.predict(&tokens);
            let oov_tokens = table
                .map(|t| {
                    tokens
                        .iter()
                        .filter(|w| t.index_of(w).is_none())
                        .cloned()
                        .collect()
                })
                .unwrap_or_default();
            QualitativeRow {
                text: case.text.to_string(),
                gold: case.gold,
                scored: case.scored,
                probability: p.probability,
                predicted: p.label,
                correct: p.label == case.gold,
                oov_tokens,
            }
        })
        .collect();
    QualitativeReport {
        model: classifier.kind().to_string(),
        scored_correct: rows.iter().filter(|r| r.scored && r.correct).count(),
        scored_total: rows.iter().filter(|r| r.scored).count(),
        rows,
    }
}
