use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

use super::ModelError;

/// Sparse vector with strictly increasing indices.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseVector<T> {
    pub indices: Vec<usize>,
    pub values: Vec<T>,
}

impl<T: Scalar> SparseVector<T> {
    pub fn dot_dense(&self, dense: &[T]) -> T {
        self.indices
            .iter()
            .zip(&self.values)
            .fold(T::zero(), |acc, (&i, &v)| acc + dense[i] * v)
    }

    pub fn norm(&self) -> T {
        self.values
            .iter()
            .fold(T::zero(), |acc, &v| acc + v * v)
            .sqrt()
    }

    pub fn scaled(&self, c: T) -> Self {
        SparseVector {
            indices: self.indices.clone(),
            values: self.values.iter().map(|&v| v * c).collect(),
        }
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TfidfConfig {
    /// Terms occurring in fewer training documents are dropped.
    pub min_df: usize,
}

impl Default for TfidfConfig {
    fn default() -> Self {
        TfidfConfig { min_df: 1 }
    }
}

/// Unigram TF-IDF with tf = count / document length, smoothed
/// idf = ln((1 + N) / (1 + df)) + 1, and L2 normalisation.
#[derive(Clone, Debug, PartialEq)]
pub struct TfidfVectorizer<T> {
    config: TfidfConfig,
    terms: Vec<String>,
    index: HashMap<String, usize>,
    idf: Vec<T>,
    fitted: bool,
}

impl<T: Scalar> TfidfVectorizer<T> {
    pub fn new(config: TfidfConfig) -> Self {
        TfidfVectorizer {
            config,
            terms: Vec::new(),
            index: HashMap::new(),
            idf: Vec::new(),
            fitted: false,
        }
    }

    /// Rebuilds a fitted vectorizer from its vocabulary and idf weights.
    pub fn from_parts(
        config: TfidfConfig,
        terms: Vec<String>,
        idf: Vec<T>,
    ) -> Result<Self, ModelError> {
        if terms.len() != idf.len() {
            return Err(ModelError::Checkpoint(format!(
                "{} terms but {} idf weights",
                terms.len(),
                idf.len()
            )));
        }
        let index = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Ok(TfidfVectorizer {
            config,
            terms,
            index,
            idf,
            fitted: true,
        })
    }

    pub fn config(&self) -> TfidfConfig {
        self.config
    }

    /// Vocabulary, sorted; a term's position is its feature index.
    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn idf(&self) -> &[T] {
        &self.idf
    }

    pub fn dim(&self) -> usize {
        self.terms.len()
    }

    pub fn is_fitted(&self) -> bool {
        self.fitted
    }

    pub fn fit<D, S>(&mut self, documents: &[D]) -> &mut Self
    where
        D: AsRef<[S]>,
        S: AsRef<str>,
    {
        let mut df: BTreeMap<&str, usize> = BTreeMap::new();
        for doc in documents {
            let mut seen: Vec<&str> = doc.as_ref().iter().map(|t| t.as_ref()).collect();
            seen.sort_unstable();
            seen.dedup();
            for t in seen {
                *df.entry(t).or_default() += 1;
            }
        }
        let n = T::from_usize_lossy(documents.len());
        self.terms.clear();
        self.idf.clear();
        for (term, count) in df {
            if count >= self.config.min_df.max(1) {
                self.terms.push(term.to_string());
                self.idf.push(
                    ((T::one() + n) / (T::one() + T::from_usize_lossy(count))).ln() + T::one(),
                );
            }
        }
        self.index = self
            .terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        self.fitted = true;
        self
    }

    pub fn transform<S: AsRef<str>>(&self, tokens: &[S]) -> Result<SparseVector<T>, ModelError> {
        if !self.fitted {
            return Err(ModelError::NotFitted);
        }
        if tokens.is_empty() {
            return Ok(SparseVector::default());
        }
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for t in tokens {
            if let Some(&i) = self.index.get(t.as_ref()) {
                *counts.entry(i).or_default() += 1;
            }
        }
        let len = T::from_usize_lossy(tokens.len());
        let mut v = SparseVector {
            indices: Vec::with_capacity(counts.len()),
            values: Vec::with_capacity(counts.len()),
        };
        for (i, c) in counts {
            v.indices.push(i);
            v.values.push(T::from_usize_lossy(c) / len * self.idf[i]);
        }
        let norm = v.norm();
        if norm > T::zero() {
            v.values.iter_mut().for_each(|x| *x /= norm);
        }
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn docs() -> Vec<Vec<&'static str>> {
        vec![
            vec!["viele", "italiener", "hier"],
            vec!["viele", "familien"],
            vec!["italiener", "italiener", "und", "briten"],
        ]
    }

    #[test]
    fn transform_before_fit_is_an_error() {
        let v = TfidfVectorizer::<f64>::new(TfidfConfig::default());
        assert!(matches!(v.transform(&["a"]), Err(ModelError::NotFitted)));
    }

    #[test]
    fn idf_and_weights_match_hand_computation() {
        let mut v = TfidfVectorizer::<f64>::new(TfidfConfig::default());
        v.fit(&docs());
        assert_eq!(
            v.terms(),
            ["briten", "familien", "hier", "italiener", "und", "viele"]
        );
        // "italiener" occurs in 2 of 3 documents
        let idf_it = (4.0f64 / 3.0).ln() + 1.0;
        let idf_briten = 2.0f64.ln() + 1.0;
        assert!((v.idf()[3] - idf_it).abs() < 1e-15);
        let x = v
            .transform(&["italiener", "italiener", "und", "briten"])
            .unwrap();
        let raw = [0.25 * idf_briten, 0.5 * idf_it, 0.25 * idf_briten];
        let n = raw.iter().map(|r| r * r).sum::<f64>().sqrt();
        assert_eq!(x.indices, vec![0, 3, 4]);
        for (a, b) in x.values.iter().zip(raw) {
            assert!((a - b / n).abs() < 1e-15);
        }
    }

    #[test]
    fn min_df_drops_rare_terms_and_unknown_tokens_vanish() {
        let mut v = TfidfVectorizer::<f64>::new(TfidfConfig { min_df: 2 });
        v.fit(&docs());
        assert_eq!(v.terms(), ["italiener", "viele"]);
        let x = v.transform(&["franzosen"]).unwrap();
        assert_eq!(x.nnz(), 0);
    }

    proptest! {
        #[test]
        fn nonempty_rows_have_unit_norm(
            corpus in prop::collection::vec(prop::collection::vec("[a-e]{1,2}", 1..6), 1..8),
            query in prop::collection::vec("[a-e]{1,2}", 1..6),
        ) {
            let mut v = TfidfVectorizer::<f64>::new(TfidfConfig::default());
            v.fit(&corpus);
            let x = v.transform(&query).unwrap();
            if x.nnz() > 0 {
                prop_assert!((x.norm() - 1.0).abs() < 1e-12);
            }
            prop_assert!(x.values.iter().all(|&w| w > 0.0));
            prop_assert!(x.indices.windows(2).all(|w| w[0] < w[1]));
        }
    }
}
