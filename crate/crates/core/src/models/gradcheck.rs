//! Central-difference verification of the recurrent model's analytic gradients.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embeddings::{EmbeddingTable, SubwordHasher};

use super::optim::RowParams;
use super::recurrent::{Architecture, Readout, RecurrentClassifier};
use super::Example;

pub const DEFAULT_STEP: f64 = 1e-5;

/// Denominator floor of the relative error, so that entries where both gradients are
/// vanishingly small compare on absolute error instead.
pub const RELATIVE_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub seed: u64,
    pub checked: usize,
    pub max_relative_error: f64,
    /// Parameter with the largest error, e.g. `dense[17]` or `row[3][1]`.
    pub worst: String,
}

impl GradCheckReport {
    fn merge(mut self, other: GradCheckReport) -> Self {
        self.checked += other.checked;
        if other.max_relative_error > self.max_relative_error {
            self.max_relative_error = other.max_relative_error;
            self.worst = other.worst;
        }
        self
    }
}

/// Compares every dense parameter and every embedding row that receives gradient against
/// `(L(p + h) - L(p - h)) / 2h`.
pub fn check_model(
    model: &RecurrentClassifier<f64>,
    example: &Example,
    step: f64,
    seed: u64,
) -> GradCheckReport {
    let (_, grad) = model.loss_and_gradient(example);
    let mut probe = model.clone();
    let mut report = GradCheckReport {
        seed,
        checked: 0,
        max_relative_error: 0.0,
        worst: String::new(),
    };
    let mut record = |name: String, analytic: f64, numeric: f64| {
        let err = relative_error(analytic, numeric);
        report.checked += 1;
        if err > report.max_relative_error || report.worst.is_empty() {
            report.max_relative_error = err.max(report.max_relative_error);
            report.worst = name;
        }
    };
    for k in 0..grad.dense.len() {
        let orig = probe.params()[k];
        probe.params_mut()[k] = orig + step;
        let plus = probe.loss(example);
        probe.params_mut()[k] = orig - step;
        let minus = probe.loss(example);
        probe.params_mut()[k] = orig;
        record(
            format!("dense[{k}]"),
            grad.dense[k],
            (plus - minus) / (2.0 * step),
        );
    }
    for (&r, g) in &grad.rows {
        for (j, &analytic) in g.iter().enumerate() {
            let orig = probe.embedding_mut().row_mut(r)[j];
            probe.embedding_mut().row_mut(r)[j] = orig + step;
            let plus = probe.loss(example);
            probe.embedding_mut().row_mut(r)[j] = orig - step;
            let minus = probe.loss(example);
            probe.embedding_mut().row_mut(r)[j] = orig;
            record(
                format!("row[{r}][{j}]"),
                analytic,
                (plus - minus) / (2.0 * step),
            );
        }
    }
    report
}

fn random_tokens(rng: &mut ChaCha8Rng, vocab: &[&str], len: usize) -> Vec<String> {
    (0..len)
        .map(|_| vocab[rng.gen_range(0..vocab.len())].to_string())
        .collect()
}

/// Checks two small random models for `seed`: a two-layer BiLSTM over learned embeddings
/// with the final-state readout, and a single-layer BiLSTM over a frozen table with
/// subword buckets and mean pooling. Sequences have five tokens.
pub fn random_check(seed: u64, step: f64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = [
        "gäste",
        "aus",
        "italien",
        "viele",
        "briten",
        "und",
        "holländer",
    ];
    let corpus: Vec<Example> = (0..4)
        .map(|_| Example::new(&random_tokens(&mut rng, &vocab, 5), rng.gen_bool(0.5)))
        .collect();
    let learned = RecurrentClassifier::<f64>::learned(
        Architecture {
            layers: 2,
            hidden: 3,
            bidirectional: true,
            readout: Readout::Final,
            max_tokens: 16,
        },
        4,
        &corpus,
        1,
        seed,
    )
    .expect("valid architecture");
    let mut tokens = random_tokens(&mut rng, &vocab, 4);
    tokens.push("unbekannt".into());
    let first = check_model(
        &learned,
        &Example::new(&tokens, rng.gen_bool(0.5)),
        step,
        seed,
    );

    let rows: Vec<(String, Vec<f64>)> = vocab[..4]
        .iter()
        .map(|w| {
            (
                w.to_string(),
                (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            )
        })
        .collect();
    let (table, _) = EmbeddingTable::from_rows(4, rows).expect("distinct words");
    let mut hasher = SubwordHasher::new(4, 64).expect("power of two");
    for b in 0..64 {
        for v in hasher.row_mut(b) {
            *v = rng.gen_range(-0.5..0.5);
        }
    }
    let pretrained = RecurrentClassifier::pretrained(
        Architecture {
            layers: 1,
            hidden: 3,
            bidirectional: true,
            readout: Readout::MeanPool,
            max_tokens: 16,
        },
        Arc::new(table),
        hasher,
        None,
        seed.wrapping_add(1),
    )
    .expect("matching dimensions");
    let tokens = random_tokens(&mut rng, &vocab, 5);
    let second = check_model(
        &pretrained,
        &Example::new(&tokens, rng.gen_bool(0.5)),
        step,
        seed,
    );
    first.merge(second)
}
