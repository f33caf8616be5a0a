//! Annotation sampling, label merging and deterministic train/validation splits.
//!
//! All randomness comes from ChaCha8 seeded with `seed_from_u64`, so a seed fixes the
//! sequence on every platform.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, Write};

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Sentence, SentenceId};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("pool '{pool}' has {available} sentences, {requested} requested")]
    PoolExhausted {
        pool: &'static str,
        requested: usize,
        available: usize,
    },
    #[error("ratio must lie in [0, 1], got {0}")]
    Ratio(f64),
    #[error("annotation for unknown sentence id {0}")]
    UnknownSentence(SentenceId),
    #[error("annotator '{annotator}' gave conflicting labels for {sentence}")]
    ConflictingLabels {
        sentence: SentenceId,
        annotator: String,
    },
    #[error("train fraction must lie strictly between 0 and 1, got {0}")]
    TrainFraction(f64),
    #[error("need at least 2 labelled sentences to split, got {0}")]
    TooSmall(usize),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `⌈x⌉` that ignores float noise such as `0.7 * 10 = 7.000000000000001`.
fn ceil_count(x: f64) -> usize {
    (x - 1e-9).ceil().max(0.0) as usize
}

fn floor_count(x: f64) -> usize {
    (x + 1e-9).floor().max(0.0) as usize
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampledSentence {
    pub sentence: Sentence,
    pub has_term: bool,
}

/// Draws `⌈ratio·n⌉` sentences from `with_terms` and the rest from `without_terms`,
/// uniformly without replacement.
pub fn sample_balanced(
    with_terms: &[Sentence],
    without_terms: &[Sentence],
    n: usize,
    ratio: f64,
    seed: u64,
) -> Result<Vec<SampledSentence>, DatasetError> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(DatasetError::Ratio(ratio));
    }
    let from_with = ceil_count(ratio * n as f64).min(n);
    let from_without = n - from_with;
    let mut rng = rng_from_seed(seed);
    let mut draw = |pool: &[Sentence], name: &'static str, count: usize, has_term: bool| {
        if count > pool.len() {
            return Err(DatasetError::PoolExhausted {
                pool: name,
                requested: count,
                available: pool.len(),
            });
        }
        Ok(index::sample(&mut rng, pool.len(), count)
            .into_iter()
            .map(|i| SampledSentence {
                sentence: pool[i].clone(),
                has_term,
            })
            .collect::<Vec<_>>())
    };
    let mut out = draw(with_terms, "with_terms", from_with, true)?;
    out.extend(draw(without_terms, "without_terms", from_without, false)?);
    Ok(out)
}

/// Annotator export: `sentence_id<TAB>text`. Newlines and tabs inside text become spaces.
pub fn write_sample_tsv<W: Write>(sample: &[SampledSentence], mut out: W) -> std::io::Result<()> {
    for s in sample {
        let text: String = s
            .sentence
            .text
            .chars()
            .map(|c| {
                if c == '\t' || c == '\n' || c == '\r' {
                    ' '
                } else {
                    c
                }
            })
            .collect();
        writeln!(out, "{}\t{}", s.sentence.sentence_id, text)?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AnnotationRow {
    pub sentence_id: SentenceId,
    pub annotator: String,
    pub label: bool,
}

/// `sentence_id<TAB>annotator_id<TAB>label(0/1)`; `#` lines are comments.
pub fn read_annotations<R: BufRead>(reader: R) -> Result<Vec<AnnotationRow>, DatasetError> {
    let mut rows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let err = |message: String| DatasetError::Format {
            line: line_no,
            message,
        };
        let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
        if cols.len() != 3 {
            return Err(err(format!("expected 3 columns, found {}", cols.len())));
        }
        let sentence_id = cols[0]
            .parse::<SentenceId>()
            .map_err(|e| err(e.to_string()))?;
        let label = match cols[2] {
            "1" => true,
            "0" => false,
            other => return Err(err(format!("label must be 0 or 1, got '{other}'"))),
        };
        if cols[1].is_empty() {
            return Err(err("empty annotator id".into()));
        }
        rows.push(AnnotationRow {
            sentence_id,
            annotator: cols[1].to_string(),
            label,
        });
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledSentence {
    pub sentence: Sentence,
    /// Majority label; `None` when the vote is tied.
    pub gold: Option<bool>,
    pub annotator_labels: Vec<(String, bool)>,
    pub has_term: bool,
}

impl LabeledSentence {
    pub fn needs_adjudication(&self) -> bool {
        self.gold.is_none()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MergeOutcome {
    /// Sentences with at least one label, in sample order.
    pub labeled: Vec<LabeledSentence>,
    /// Ids whose vote was tied.
    pub adjudication: Vec<SentenceId>,
}

impl MergeOutcome {
    /// Sentences with a defined gold label.
    pub fn usable(&self) -> Vec<LabeledSentence> {
        self.labeled
            .iter()
            .filter(|l| l.gold.is_some())
            .cloned()
            .collect()
    }

    /// Items × categories count matrix `[negatives, positives]` restricted to sentences
    /// rated by exactly `raters` annotators.
    pub fn count_matrix(&self, raters: usize) -> Vec<[usize; 2]> {
        self.labeled
            .iter()
            .filter(|l| l.annotator_labels.len() == raters)
            .map(|l| {
                let pos = l.annotator_labels.iter().filter(|(_, v)| *v).count();
                [raters - pos, pos]
            })
            .collect()
    }
}

/// Majority vote per sentence. Identical repeated rows from one annotator collapse;
/// contradicting rows are an error.
pub fn merge_annotations(
    sample: &[SampledSentence],
    annotations: &[AnnotationRow],
) -> Result<MergeOutcome, DatasetError> {
    let known: HashMap<SentenceId, usize> = sample
        .iter()
        .enumerate()
        .map(|(i, s)| (s.sentence.sentence_id, i))
        .collect();
    let mut labels: HashMap<SentenceId, BTreeMap<String, bool>> = HashMap::new();
    for row in annotations {
        if !known.contains_key(&row.sentence_id) {
            return Err(DatasetError::UnknownSentence(row.sentence_id));
        }
        let per = labels.entry(row.sentence_id).or_default();
        match per.get(&row.annotator) {
            Some(&prev) if prev != row.label => {
                return Err(DatasetError::ConflictingLabels {
                    sentence: row.sentence_id,
                    annotator: row.annotator.clone(),
                })
            }
            _ => {
                per.insert(row.annotator.clone(), row.label);
            }
        }
    }
    let mut out = MergeOutcome::default();
    let mut done = HashSet::new();
    for s in sample {
        let id = s.sentence.sentence_id;
        let Some(per) = labels.get(&id) else { continue };
        if !done.insert(id) {
            continue;
        }
        let pos = per.values().filter(|&&v| v).count();
        let neg = per.len() - pos;
        let gold = match pos.cmp(&neg) {
            std::cmp::Ordering::Greater => Some(true),
            std::cmp::Ordering::Less => Some(false),
            std::cmp::Ordering::Equal => None,
        };
        if gold.is_none() {
            out.adjudication.push(id);
        }
        out.labeled.push(LabeledSentence {
            sentence: s.sentence.clone(),
            gold,
            annotator_labels: per.iter().map(|(a, &v)| (a.clone(), v)).collect(),
            has_term: s.has_term,
        });
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitConfig {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            train_fraction: 0.7,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fold {
    Train,
    Validation,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub sentence_id: SentenceId,
    pub fold: Fold,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Split {
    pub train: Vec<LabeledSentence>,
    pub validation: Vec<LabeledSentence>,
}

impl Split {
    pub fn manifest(&self) -> Vec<ManifestEntry> {
        let entry = |fold| {
            move |l: &LabeledSentence| ManifestEntry {
                sentence_id: l.sentence.sentence_id,
                fold,
            }
        };
        self.train
            .iter()
            .map(entry(Fold::Train))
            .chain(self.validation.iter().map(entry(Fold::Validation)))
            .collect()
    }

    pub fn write_manifest<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for e in self.manifest() {
            writeln!(
                out,
                "{}",
                serde_json::to_string(&e).expect("manifest entry serializes")
            )?;
        }
        Ok(())
    }
}

/// Stratified by `has_term`. Within a stratum, ids are sorted, shuffled with the seed and the
/// first `⌊fraction·size⌋` go to training. Unlabelled (tied) sentences are left out. Output
/// folds keep the input order.
pub fn split(data: &[LabeledSentence], config: &SplitConfig) -> Result<Split, DatasetError> {
    if !(config.train_fraction > 0.0 && config.train_fraction < 1.0) {
        return Err(DatasetError::TrainFraction(config.train_fraction));
    }
    let usable: Vec<&LabeledSentence> = data.iter().filter(|l| l.gold.is_some()).collect();
    if usable.len() < 2 {
        return Err(DatasetError::TooSmall(usable.len()));
    }
    let mut rng = rng_from_seed(config.seed);
    let mut train_ids = HashSet::new();
    for stratum in [true, false] {
        let mut ids: Vec<SentenceId> = usable
            .iter()
            .filter(|l| l.has_term == stratum)
            .map(|l| l.sentence.sentence_id)
            .collect();
        if ids.is_empty() {
            log::warn!("stratum has_term={stratum} is empty");
            continue;
        }
        ids.sort_unstable();
        ids.dedup();
        ids.shuffle(&mut rng);
        let n_train = floor_count(config.train_fraction * ids.len() as f64);
        train_ids.extend(ids.into_iter().take(n_train));
    }
    let mut out = Split::default();
    for l in usable {
        if train_ids.contains(&l.sentence.sentence_id) {
            out.train.push(l.clone());
        } else {
            out.validation.push(l.clone());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pool(prefix: &str, n: usize) -> Vec<Sentence> {
        (0..n)
            .map(|i| Sentence::bare(format!("{prefix} Satz Nummer {i}.")))
            .collect()
    }

    fn labeled(n_with: usize, n_without: usize) -> Vec<LabeledSentence> {
        let mk = |s: Sentence, has_term: bool| LabeledSentence {
            sentence: s,
            gold: Some(has_term),
            annotator_labels: vec![("a".into(), has_term)],
            has_term,
        };
        pool("mit", n_with)
            .into_iter()
            .map(|s| mk(s, true))
            .chain(pool("ohne", n_without).into_iter().map(|s| mk(s, false)))
            .collect()
    }

    #[test]
    fn balanced_sample_sizes() {
        let (w, wo) = (pool("mit", 1000), pool("ohne", 1000));
        let s = sample_balanced(&w, &wo, 750, 0.5, 1).unwrap();
        assert_eq!(s.iter().filter(|x| x.has_term).count(), 375);
        assert_eq!(s.iter().filter(|x| !x.has_term).count(), 375);
        assert!(sample_balanced(&w, &wo, 0, 0.5, 1).unwrap().is_empty());
        let s = sample_balanced(&w, &wo, 10, 0.7, 1).unwrap();
        assert_eq!(s.iter().filter(|x| x.has_term).count(), 7);
        let s = sample_balanced(&w, &wo, 5, 0.5, 1).unwrap();
        assert_eq!(s.iter().filter(|x| x.has_term).count(), 3);
    }

    #[test]
    fn balanced_sample_is_seeded() {
        let (w, wo) = (pool("mit", 200), pool("ohne", 200));
        let ids = |seed| {
            sample_balanced(&w, &wo, 100, 0.5, seed)
                .unwrap()
                .into_iter()
                .map(|s| s.sentence.sentence_id)
                .collect::<Vec<_>>()
        };
        assert_eq!(ids(9), ids(9));
        assert_ne!(ids(9), ids(10));
    }

    #[test]
    fn sampling_errors() {
        let (w, wo) = (pool("mit", 3), pool("ohne", 100));
        assert!(matches!(
            sample_balanced(&w, &wo, 10, 0.5, 0),
            Err(DatasetError::PoolExhausted {
                pool: "with_terms",
                requested: 5,
                available: 3
            })
        ));
        assert!(matches!(
            sample_balanced(&w, &wo, 10, 1.5, 0),
            Err(DatasetError::Ratio(_))
        ));
    }

    fn sample_of(texts: &[&str]) -> Vec<SampledSentence> {
        texts
            .iter()
            .map(|t| SampledSentence {
                sentence: Sentence::bare(*t),
                has_term: true,
            })
            .collect()
    }

    fn row(s: &SampledSentence, a: &str, label: bool) -> AnnotationRow {
        AnnotationRow {
            sentence_id: s.sentence.sentence_id,
            annotator: a.into(),
            label,
        }
    }

    #[test]
    fn majority_and_ties() {
        let sample = sample_of(&["Eins.", "Zwei."]);
        let rows = vec![
            row(&sample[0], "a", true),
            row(&sample[0], "b", true),
            row(&sample[0], "c", false),
            row(&sample[1], "a", true),
            row(&sample[1], "b", false),
        ];
        let out = merge_annotations(&sample, &rows).unwrap();
        assert_eq!(out.labeled[0].gold, Some(true));
        assert_eq!(out.labeled[1].gold, None);
        assert!(out.labeled[1].needs_adjudication());
        assert_eq!(out.adjudication, vec![sample[1].sentence.sentence_id]);
        assert_eq!(out.usable().len(), 1);
    }

    #[test]
    fn seventy_five_unanimous_sentences() {
        let texts: Vec<String> = (0..75).map(|i| format!("Satz {i}.")).collect();
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        let sample = sample_of(&refs);
        let rows: Vec<AnnotationRow> = sample
            .iter()
            .flat_map(|s| ["a", "b", "c"].map(|a| row(s, a, true)))
            .collect();
        let out = merge_annotations(&sample, &rows).unwrap();
        assert_eq!(out.usable().len(), 75);
        assert_eq!(out.count_matrix(3).len(), 75);
        assert!(out.count_matrix(3).iter().all(|c| *c == [0, 3]));
    }

    #[test]
    fn merge_errors() {
        let sample = sample_of(&["Eins."]);
        let stranger = AnnotationRow {
            sentence_id: Sentence::bare("Fremd.").sentence_id,
            annotator: "a".into(),
            label: true,
        };
        assert!(matches!(
            merge_annotations(&sample, &[stranger]),
            Err(DatasetError::UnknownSentence(_))
        ));
        let rows = vec![row(&sample[0], "a", true), row(&sample[0], "a", false)];
        assert!(matches!(
            merge_annotations(&sample, &rows),
            Err(DatasetError::ConflictingLabels { .. })
        ));
        let rows = vec![row(&sample[0], "a", true), row(&sample[0], "a", true)];
        assert_eq!(
            merge_annotations(&sample, &rows).unwrap().labeled[0]
                .annotator_labels
                .len(),
            1
        );
    }

    #[test]
    fn annotation_tsv_parsing() {
        let id = Sentence::bare("Eins.").sentence_id;
        let text = format!("# header\n{id}\tann1\t1\n{id}\tann2\t0\n");
        let rows = read_annotations(text.as_bytes()).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows[0].label && !rows[1].label);
        assert!(read_annotations(format!("{id}\tann1\t2\n").as_bytes()).is_err());
        assert!(read_annotations("zz\tann1\t1\n".as_bytes()).is_err());
    }

    #[test]
    fn sample_export_withholds_labels() {
        let sample = sample_of(&["Ein\tTab."]);
        let mut buf = Vec::new();
        write_sample_tsv(&sample, &mut buf).unwrap();
        let line = String::from_utf8(buf).unwrap();
        assert_eq!(line.trim_end().split('\t').count(), 2);
    }

    #[test]
    fn split_sizes() {
        let data = labeled(750, 0);
        let s = split(
            &data,
            &SplitConfig {
                train_fraction: 0.7,
                seed: 3,
            },
        )
        .unwrap();
        assert_eq!((s.train.len(), s.validation.len()), (525, 225));
        let data = labeled(370, 380);
        let s = split(
            &data,
            &SplitConfig {
                train_fraction: 0.7,
                seed: 3,
            },
        )
        .unwrap();
        assert_eq!((s.train.len(), s.validation.len()), (525, 225));
        assert_eq!(s.train.iter().filter(|l| l.has_term).count(), 259);
    }

    #[test]
    fn split_is_seeded_and_exact() {
        let data = labeled(40, 60);
        let config = SplitConfig {
            train_fraction: 0.7,
            seed: 11,
        };
        let a = split(&data, &config).unwrap();
        let b = split(&data, &config).unwrap();
        assert_eq!(a, b);
        let train: HashSet<_> = a.train.iter().map(|l| l.sentence.sentence_id).collect();
        let val: HashSet<_> = a
            .validation
            .iter()
            .map(|l| l.sentence.sentence_id)
            .collect();
        assert!(train.is_disjoint(&val));
        assert_eq!(train.len() + val.len(), data.len());
        let manifest = a.manifest();
        assert_eq!(manifest.len(), 100);
        let mut buf = Vec::new();
        a.write_manifest(&mut buf).unwrap();
        let first: ManifestEntry =
            serde_json::from_str(String::from_utf8(buf).unwrap().lines().next().unwrap()).unwrap();
        assert_eq!(first.fold, Fold::Train);
    }

    #[test]
    fn split_order_does_not_depend_on_input_order() {
        let data = labeled(30, 30);
        let mut reversed = data.clone();
        reversed.reverse();
        let config = SplitConfig {
            train_fraction: 0.6,
            seed: 5,
        };
        let ids = |s: Split| {
            s.train
                .into_iter()
                .map(|l| l.sentence.sentence_id)
                .collect::<HashSet<_>>()
        };
        assert_eq!(
            ids(split(&data, &config).unwrap()),
            ids(split(&reversed, &config).unwrap())
        );
    }

    #[test]
    fn split_errors() {
        let data = labeled(5, 5);
        assert!(split(
            &data,
            &SplitConfig {
                train_fraction: 1.0,
                seed: 0
            }
        )
        .is_err());
        assert!(split(&data[..1], &SplitConfig::default()).is_err());
        // one empty stratum is only a warning
        assert!(split(&labeled(10, 0), &SplitConfig::default()).is_ok());
    }

    proptest! {
        #[test]
        fn samples_have_no_duplicates(n in 0usize..60, ratio in 0.0f64..=1.0, seed in any::<u64>()) {
            let (w, wo) = (pool("mit", 60), pool("ohne", 60));
            let s = sample_balanced(&w, &wo, n, ratio, seed).unwrap();
            let ids: HashSet<_> = s.iter().map(|x| x.sentence.sentence_id).collect();
            prop_assert_eq!(ids.len(), n);
        }

        #[test]
        fn stratified_split_preserves_proportions(
            w in 1usize..80, wo in 1usize..80, frac in 0.1f64..0.9, seed in any::<u64>()
        ) {
            let data = labeled(w, wo);
            let s = split(&data, &SplitConfig { train_fraction: frac, seed }).unwrap();
            let tw = s.train.iter().filter(|l| l.has_term).count() as f64;
            let two = s.train.iter().filter(|l| !l.has_term).count() as f64;
            prop_assert!((tw - frac * w as f64).abs() <= 1.0);
            prop_assert!((two - frac * wo as f64).abs() <= 1.0);
            prop_assert_eq!(s.train.len() + s.validation.len(), data.len());
        }

        #[test]
        fn gold_is_invariant_under_annotator_order(labels in prop::collection::vec(any::<bool>(), 1..7)) {
            let sample = sample_of(&["Satz."]);
            let mut rows: Vec<AnnotationRow> = labels.iter().enumerate()
                .map(|(i, &l)| row(&sample[0], &format!("a{i}"), l)).collect();
            let forward = merge_annotations(&sample, &rows).unwrap().labeled[0].gold;
            rows.reverse();
            let backward = merge_annotations(&sample, &rows).unwrap().labeled[0].gold;
            prop_assert_eq!(forward, backward);
        }
    }
}
