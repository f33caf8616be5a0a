//! Confusion-matrix metrics, Fleiss' kappa and model comparison tables.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::SentenceId;

pub const METRICS_SCHEMA_VERSION: u32 = 1;
pub const AGREEMENT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("{predictions} predictions but {gold} gold labels")]
    LengthMismatch { predictions: usize, gold: usize },
    #[error("prediction for {predicted} aligned with gold label for {gold}")]
    IdMismatch {
        predicted: SentenceId,
        gold: SentenceId,
    },
    #[error("cannot compute metrics on an empty confusion matrix")]
    Empty,
    #[error("item {item} has {found} ratings, expected {expected}")]
    UnequalRaters {
        item: usize,
        expected: usize,
        found: usize,
    },
    #[error("at least two raters per item are required")]
    TooFewRaters,
    #[error("label {label} outside the {categories} categories")]
    Category { label: usize, categories: usize },
    #[error("kappa is undefined: expected agreement is 1 but observed agreement is not")]
    KappaUndefined,
    #[error("no items to rate")]
    NoItems,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn record(&mut self, predicted: bool, gold: bool) {
        match (predicted, gold) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fn_ += 1,
        }
    }

    pub fn from_pairs<I: IntoIterator<Item = (bool, bool)>>(pairs: I) -> Self {
        let mut m = ConfusionMatrix::default();
        for (p, g) in pairs {
            m.record(p, g);
        }
        m
    }
}

/// Counts outcomes for predictions and gold labels aligned position by position; ids must
/// agree at every position.
pub fn confusion(
    predictions: &[(SentenceId, bool)],
    gold: &[(SentenceId, bool)],
) -> Result<ConfusionMatrix, EvalError> {
    if predictions.len() != gold.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            gold: gold.len(),
        });
    }
    let mut m = ConfusionMatrix::default();
    for (&(pid, p), &(gid, g)) in predictions.iter().zip(gold) {
        if pid != gid {
            return Err(EvalError::IdMismatch {
                predicted: pid,
                gold: gid,
            });
        }
        m.record(p, g);
    }
    Ok(m)
}

/// Which ratios had a zero denominator and were reported as 0.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UndefinedFlags {
    pub precision: bool,
    pub recall: bool,
    pub f1: bool,
    pub negative_precision: bool,
    pub negative_recall: bool,
    pub negative_f1: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema_version: u32,
    pub precision: f64,
    pub recall: f64,
    pub accuracy: f64,
    pub f1_binary: f64,
    pub f1_macro: f64,
    pub confusion: ConfusionMatrix,
    pub undefined: UndefinedFlags,
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

fn harmonic(p: f64, r: f64) -> (f64, bool) {
    if p + r == 0.0 {
        (0.0, true)
    } else {
        (2.0 * p * r / (p + r), false)
    }
}

pub fn metrics(m: &ConfusionMatrix) -> Result<MetricsReport, EvalError> {
    let total = m.total();
    if total == 0 {
        return Err(EvalError::Empty);
    }
    let (precision, up) = ratio(m.tp, m.tp + m.fp);
    let (recall, ur) = ratio(m.tp, m.tp + m.fn_);
    let (f1_binary, uf) = harmonic(precision, recall);
    let (neg_precision, unp) = ratio(m.tn, m.tn + m.fn_);
    let (neg_recall, unr) = ratio(m.tn, m.tn + m.fp);
    let (neg_f1, unf) = harmonic(neg_precision, neg_recall);
    Ok(MetricsReport {
        schema_version: METRICS_SCHEMA_VERSION,
        precision,
        recall,
        accuracy: (m.tp + m.tn) as f64 / total as f64,
        f1_binary,
        f1_macro: (f1_binary + neg_f1) / 2.0,
        confusion: *m,
        undefined: UndefinedFlags {
            precision: up,
            recall: ur,
            f1: uf,
            negative_precision: unp,
            negative_recall: unr,
            negative_f1: unf,
        },
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoryAgreement {
    /// Share of all ratings in this category.
    pub proportion: f64,
    /// Per-category kappa; `None` when no or every rating falls in this category.
    pub kappa: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub schema_version: u32,
    pub fleiss_kappa: f64,
    pub observed_agreement: f64,
    pub expected_agreement: f64,
    pub items: usize,
    pub raters: usize,
    pub categories: Vec<CategoryAgreement>,
}

/// Fleiss' kappa from an items × categories count matrix; every row must sum to the same
/// rater count `n ≥ 2`.
pub fn fleiss_kappa_from_counts<R: AsRef<[usize]>>(
    counts: &[R],
) -> Result<AgreementReport, EvalError> {
    let first = counts.first().ok_or(EvalError::NoItems)?;
    let k = first.as_ref().len();
    let n: usize = first.as_ref().iter().sum();
    if n < 2 {
        return Err(EvalError::TooFewRaters);
    }
    for (i, row) in counts.iter().enumerate() {
        let row = row.as_ref();
        let found: usize = row.iter().sum();
        if row.len() != k || found != n {
            return Err(EvalError::UnequalRaters {
                item: i,
                expected: n,
                found,
            });
        }
    }
    let items = counts.len() as f64;
    let nf = n as f64;
    let mut per_item_sum = 0.0;
    let mut column_totals = vec![0usize; k];
    for row in counts {
        let row = row.as_ref();
        let agree: usize = row.iter().map(|&c| c * c.saturating_sub(1)).sum();
        per_item_sum += agree as f64 / (nf * (nf - 1.0));
        for (t, &c) in column_totals.iter_mut().zip(row) {
            *t += c;
        }
    }
    let observed = per_item_sum / items;
    let proportions: Vec<f64> = column_totals
        .iter()
        .map(|&t| t as f64 / (items * nf))
        .collect();
    let expected: f64 = proportions.iter().map(|p| p * p).sum();

    let kappa = if expected == 1.0 {
        if observed == 1.0 {
            1.0
        } else {
            return Err(EvalError::KappaUndefined);
        }
    } else {
        (observed - expected) / (1.0 - expected)
    };

    let categories = proportions
        .iter()
        .enumerate()
        .map(|(j, &p)| {
            let kappa = if p == 0.0 || p == 1.0 {
                None
            } else {
                let disagreement: f64 = counts
                    .iter()
                    .map(|row| {
                        let c = row.as_ref()[j] as f64;
                        c * (nf - c)
                    })
                    .sum();
                Some(1.0 - disagreement / (items * nf * (nf - 1.0) * p * (1.0 - p)))
            };
            CategoryAgreement {
                proportion: p,
                kappa,
            }
        })
        .collect();

    Ok(AgreementReport {
        schema_version: AGREEMENT_SCHEMA_VERSION,
        fleiss_kappa: kappa,
        observed_agreement: observed,
        expected_agreement: expected,
        items: counts.len(),
        raters: n,
        categories,
    })
}

/// Fleiss' kappa from an items × raters label matrix with labels in `0..categories`.
pub fn fleiss_kappa<R: AsRef<[usize]>>(
    labels: &[R],
    categories: usize,
) -> Result<AgreementReport, EvalError> {
    let first = labels.first().ok_or(EvalError::NoItems)?;
    let n = first.as_ref().len();
    let mut counts = Vec::with_capacity(labels.len());
    for (i, row) in labels.iter().enumerate() {
        let row = row.as_ref();
        if row.len() != n {
            return Err(EvalError::UnequalRaters {
                item: i,
                expected: n,
                found: row.len(),
            });
        }
        let mut c = vec![0usize; categories];
        for &label in row {
            if label >= categories {
                return Err(EvalError::Category { label, categories });
            }
            c[label] += 1;
        }
        counts.push(c);
    }
    fleiss_kappa_from_counts(&counts)
}

/// Fleiss' kappa for boolean labels (false = 0, true = 1).
pub fn fleiss_kappa_binary<R: AsRef<[bool]>>(labels: &[R]) -> Result<AgreementReport, EvalError> {
    let as_idx: Vec<Vec<usize>> = labels
        .iter()
        .map(|r| r.as_ref().iter().map(|&b| usize::from(b)).collect())
        .collect();
    fleiss_kappa(&as_idx, 2)
}

pub const COMPARISON_COLUMNS: [&str; 5] = ["Pr", "Re", "Acc", "F1", "F1-macro"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub model: String,
    /// Percentages rounded to one decimal, in [`COMPARISON_COLUMNS`] order.
    pub values: [f64; 5],
    pub best: [bool; 5],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub schema_version: u32,
    pub columns: Vec<String>,
    pub rows: Vec<ComparisonRow>,
}

fn percent(x: f64) -> f64 {
    (x * 1000.0).round() / 10.0
}

/// One row per report in input order; the best (rounded) value of each column is marked on
/// every row that attains it.
pub fn compare_models(reports: &[(String, MetricsReport)]) -> ComparisonTable {
    let mut rows: Vec<ComparisonRow> = reports
        .iter()
        .map(|(name, r)| ComparisonRow {
            model: name.clone(),
            values: [r.precision, r.recall, r.accuracy, r.f1_binary, r.f1_macro].map(percent),
            best: [false; 5],
        })
        .collect();
    for col in 0..COMPARISON_COLUMNS.len() {
        let best = rows
            .iter()
            .map(|r| r.values[col])
            .fold(f64::NEG_INFINITY, f64::max);
        for r in &mut rows {
            r.best[col] = r.values[col] == best;
        }
    }
    ComparisonTable {
        schema_version: METRICS_SCHEMA_VERSION,
        columns: COMPARISON_COLUMNS.iter().map(|s| s.to_string()).collect(),
        rows,
    }
}

impl ComparisonTable {
    /// Aligned plain text; best values carry a trailing `*`.
    pub fn render_text(&self) -> String {
        let width = self
            .rows
            .iter()
            .map(|r| r.model.len())
            .max()
            .unwrap_or(0)
            .max("Model".len());
        let mut out = String::new();
        let _ = write!(out, "{:<width$}", "Model");
        for c in &self.columns {
            let _ = write!(out, " | {c:>8}");
        }
        out.push('\n');
        out.push_str(&"-".repeat(width + self.columns.len() * 11));
        out.push('\n');
        for r in &self.rows {
            let _ = write!(out, "{:<width$}", r.model);
            for (v, &b) in r.values.iter().zip(&r.best) {
                let cell = format!("{v:.1}{}", if b { "*" } else { " " });
                let _ = write!(out, " | {cell:>8}");
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use std::collections::HashMap;

    /// Metrics computed one item at a time, without a confusion matrix.
    fn metrics_by_recount(pairs: &[(bool, bool)]) -> HashMap<&'static str, f64> {
        let n = pairs.len() as f64;
        let correct = pairs.iter().filter(|(p, g)| p == g).count() as f64;
        let predicted_pos: Vec<&(bool, bool)> = pairs.iter().filter(|(p, _)| *p).collect();
        let gold_pos: Vec<&(bool, bool)> = pairs.iter().filter(|(_, g)| *g).collect();
        let hits_p = predicted_pos.iter().filter(|(_, g)| *g).count() as f64;
        let hits_r = gold_pos.iter().filter(|(p, _)| *p).count() as f64;
        let precision = if predicted_pos.is_empty() {
            0.0
        } else {
            hits_p / predicted_pos.len() as f64
        };
        let recall = if gold_pos.is_empty() {
            0.0
        } else {
            hits_r / gold_pos.len() as f64
        };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        HashMap::from([
            ("precision", precision),
            ("recall", recall),
            ("accuracy", correct / n),
            ("f1", f1),
        ])
    }

    fn ids(n: usize) -> Vec<SentenceId> {
        (0..n as u64).map(SentenceId).collect()
    }

    #[test]
    fn confusion_examples() {
        let id = ids(10);
        let gold: Vec<(SentenceId, bool)> =
            id.iter().enumerate().map(|(i, &s)| (s, i < 5)).collect();
        let m = confusion(&gold, &gold).unwrap();
        assert_eq!((m.fp, m.fn_), (0, 0));
        let all_true: Vec<(SentenceId, bool)> = id.iter().map(|&s| (s, true)).collect();
        let m = confusion(&all_true, &gold).unwrap();
        assert_eq!((m.tp, m.fp), (5, 5));
        assert!(matches!(
            confusion(&all_true[..3], &gold),
            Err(EvalError::LengthMismatch { .. })
        ));
        let mut shifted = all_true.clone();
        shifted.rotate_left(1);
        assert!(matches!(
            confusion(&shifted, &gold),
            Err(EvalError::IdMismatch { .. })
        ));
    }

    #[test]
    fn confusion_matches_item_recount() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let id = ids(1000);
        let p: Vec<_> = id.iter().map(|&s| (s, rng.gen::<bool>())).collect();
        let g: Vec<_> = id.iter().map(|&s| (s, rng.gen::<bool>())).collect();
        let m = confusion(&p, &g).unwrap();
        let count = |want_p: bool, want_g: bool| {
            (0..1000)
                .filter(|&i| p[i].1 == want_p && g[i].1 == want_g)
                .count() as u64
        };
        assert_eq!(
            m,
            ConfusionMatrix {
                tp: count(true, true),
                fp: count(true, false),
                tn: count(false, false),
                fn_: count(false, true)
            }
        );
    }

    #[test]
    fn metrics_examples() {
        let perfect = metrics(&ConfusionMatrix {
            tp: 5,
            fp: 0,
            tn: 5,
            fn_: 0,
        })
        .unwrap();
        for v in [
            perfect.precision,
            perfect.recall,
            perfect.accuracy,
            perfect.f1_binary,
            perfect.f1_macro,
        ] {
            assert_eq!(v, 1.0);
        }
        let r = metrics(&ConfusionMatrix {
            tp: 3,
            fp: 1,
            tn: 5,
            fn_: 1,
        })
        .unwrap();
        assert_eq!(
            (r.precision, r.recall, r.accuracy, r.f1_binary),
            (0.75, 0.75, 0.8, 0.75)
        );
        assert_eq!(metrics(&ConfusionMatrix::default()), Err(EvalError::Empty));
    }

    #[test]
    fn dictionary_row_binary_f1_differs_from_reported() {
        // Pr 40.9, Re 100.0 give a binary F1 of 58.1, not 40.9
        let (p, r) = (0.409f64, 1.0f64);
        let f1 = 2.0 * p * r / (p + r);
        assert!((f1 - 0.581).abs() < 5e-4);
    }

    #[test]
    fn undefined_ratios_are_flagged_zeros() {
        let r = metrics(&ConfusionMatrix {
            tp: 0,
            fp: 0,
            tn: 4,
            fn_: 0,
        })
        .unwrap();
        assert_eq!((r.precision, r.recall, r.f1_binary), (0.0, 0.0, 0.0));
        assert!(r.undefined.precision && r.undefined.recall && r.undefined.f1);
        assert_eq!(r.f1_macro, 0.5);
        let json = serde_json::to_string(&r).unwrap();
        assert!(!json.contains("NaN") && json.contains("\"fn\":0"));
    }

    #[test]
    fn accuracy_is_exact_ratio() {
        let m = ConfusionMatrix {
            tp: 7,
            fp: 3,
            tn: 11,
            fn_: 2,
        };
        let r = metrics(&m).unwrap();
        let exact = Ratio::new(m.tp + m.tn, m.total());
        assert_eq!(r.accuracy, *exact.numer() as f64 / *exact.denom() as f64);
        assert_eq!(Ratio::new(18u64, 23), exact);
    }

    #[test]
    fn kappa_hand_computed_fixture() {
        // P_i = 1, 1/3, 1/3, 1 -> P = 2/3; p = (1/2, 1/2) -> Pe = 1/2; kappa = 1/3
        let counts = [[3usize, 0], [2, 1], [1, 2], [0, 3]];
        let r = fleiss_kappa_from_counts(&counts).unwrap();
        assert!((r.fleiss_kappa - 1.0 / 3.0).abs() < 1e-12);
        assert!((r.observed_agreement - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.expected_agreement - 0.5).abs() < 1e-12);
        let labels = [[0usize, 0, 0], [0, 0, 1], [0, 1, 1], [1, 1, 1]];
        assert_eq!(
            fleiss_kappa(&labels, 2).unwrap().fleiss_kappa,
            r.fleiss_kappa
        );
    }

    #[test]
    fn kappa_unanimity_and_errors() {
        let r = fleiss_kappa_binary(&[[true, true, true], [false, false, false]]).unwrap();
        assert_eq!(r.fleiss_kappa, 1.0);
        let r = fleiss_kappa_binary(&[[true, true], [true, true]]).unwrap();
        assert_eq!(r.fleiss_kappa, 1.0);
        assert!(matches!(
            fleiss_kappa(&[vec![0usize, 1, 1], vec![0, 1]], 2),
            Err(EvalError::UnequalRaters { item: 1, .. })
        ));
        assert_eq!(fleiss_kappa(&[[0usize]], 2), Err(EvalError::TooFewRaters));
        assert_eq!(
            fleiss_kappa(&[[0usize, 2]], 2),
            Err(EvalError::Category {
                label: 2,
                categories: 2
            })
        );
        assert_eq!(
            fleiss_kappa_from_counts::<[usize; 2]>(&[]),
            Err(EvalError::NoItems)
        );
    }

    #[test]
    fn kappa_permutation_invariance() {
        let labels = vec![
            vec![0usize, 1, 1, 0],
            vec![1, 1, 1, 1],
            vec![0, 0, 1, 0],
            vec![1, 0, 1, 1],
            vec![0, 0, 0, 0],
        ];
        let base = fleiss_kappa(&labels, 2).unwrap().fleiss_kappa;
        let cols: Vec<Vec<usize>> = labels
            .iter()
            .map(|r| vec![r[3], r[0], r[2], r[1]])
            .collect();
        let mut rows = labels.clone();
        rows.reverse();
        assert!((fleiss_kappa(&cols, 2).unwrap().fleiss_kappa - base).abs() < 1e-15);
        assert!((fleiss_kappa(&rows, 2).unwrap().fleiss_kappa - base).abs() < 1e-15);
    }

    #[test]
    fn kappa_of_random_raters_is_near_zero() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let labels: Vec<Vec<usize>> = (0..10_000)
            .map(|_| (0..3).map(|_| rng.gen_range(0..2)).collect())
            .collect();
        let r = fleiss_kappa(&labels, 2).unwrap();
        assert!(r.fleiss_kappa.abs() < 0.1, "{}", r.fleiss_kappa);
    }

    #[test]
    fn comparison_marks_column_maxima() {
        let a = metrics(&ConfusionMatrix {
            tp: 9,
            fp: 13,
            tn: 0,
            fn_: 0,
        })
        .unwrap();
        let single = compare_models(&[("dict".into(), a.clone())]);
        assert_eq!(single.rows.len(), 1);
        assert!(single.rows[0].best.iter().all(|&b| b));

        let b = metrics(&ConfusionMatrix {
            tp: 8,
            fp: 1,
            tn: 12,
            fn_: 1,
        })
        .unwrap();
        let t = compare_models(&[("dict".into(), a), ("lstm".into(), b)]);
        assert_eq!(t.rows[0].best, [false, true, false, false, false]);
        assert_eq!(t.rows[1].best, [true, false, true, true, true]);
        assert_eq!(t.rows[0].values[0], 40.9);
        let text = t.render_text();
        assert!(text.contains("100.0*") && text.lines().count() == 4);
    }

    #[test]
    fn comparison_json_round_trip() {
        let a = metrics(&ConfusionMatrix {
            tp: 3,
            fp: 1,
            tn: 5,
            fn_: 1,
        })
        .unwrap();
        let t = compare_models(&[("m".into(), a)]);
        let json = serde_json::to_string(&t).unwrap();
        let back: ComparisonTable = serde_json::from_str(&json).unwrap();
        assert_eq!(back, t);
        assert_eq!(serde_json::to_string(&back).unwrap(), json);
    }

    proptest! {
        #[test]
        fn metrics_match_recount(pairs in prop::collection::vec((any::<bool>(), any::<bool>()), 1..200)) {
            let r = metrics(&ConfusionMatrix::from_pairs(pairs.iter().copied())).unwrap();
            let o = metrics_by_recount(&pairs);
            prop_assert!((r.precision - o["precision"]).abs() < 1e-12);
            prop_assert!((r.recall - o["recall"]).abs() < 1e-12);
            prop_assert!((r.accuracy - o["accuracy"]).abs() < 1e-12);
            prop_assert!((r.f1_binary - o["f1"]).abs() < 1e-12);
        }

        #[test]
        fn kappa_is_bounded(rows in prop::collection::vec(prop::collection::vec(0usize..2, 3), 1..40)) {
            match fleiss_kappa(&rows, 2) {
                Ok(r) => prop_assert!((-1.0..=1.0).contains(&r.fleiss_kappa)),
                Err(e) => prop_assert_eq!(e, EvalError::KappaUndefined),
            }
        }
    }
}
