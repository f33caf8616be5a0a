//! Pretrained word vectors in `.vec` text format, exact cosine k-NN, and hashed
//! character n-gram vectors for out-of-vocabulary tokens.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::corpus::fold;
use crate::hash::fnv1a64;
use crate::scalar::{dot, l2_norm, Scalar};

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("line {line}: expected {expected} components, found {found}")]
    Dimension {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: non-finite vector component")]
    NonFinite { line: usize },
    #[error("header declares {declared} rows, file has {found}")]
    RowCount { declared: usize, found: usize },
    #[error("vectors have different dimensions ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("cosine similarity is undefined for a zero vector")]
    ZeroVector,
    #[error("'{0}' is not in the embedding vocabulary")]
    UnknownWord(String),
    #[error("bucket count must be a positive power of two, got {0}")]
    Buckets(usize),
}

/// Cosine similarity clamped to [-1, 1].
pub fn cosine<T: Scalar>(u: &[T], v: &[T]) -> Result<T, EmbeddingError> {
    if u.len() != v.len() {
        return Err(EmbeddingError::DimensionMismatch(u.len(), v.len()));
    }
    let (nu, nv) = (l2_norm(u), l2_norm(v));
    if nu == T::zero() || nv == T::zero() {
        return Err(EmbeddingError::ZeroVector);
    }
    Ok(cosine_with_norms(u, nu, v, nv))
}

fn cosine_with_norms<T: Scalar>(u: &[T], nu: T, v: &[T], nv: T) -> T {
    let c = dot(u, v) / (nu * nv);
    c.max(-T::one()).min(T::one())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Neighbor<T> {
    pub word: String,
    pub similarity: T,
}

#[derive(Clone, Copy, Debug)]
pub enum Query<'a, T> {
    Word(&'a str),
    Vector(&'a [T]),
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct VecLoadReport {
    pub declared_rows: usize,
    pub duplicates: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable<T> {
    dim: usize,
    words: Vec<String>,
    index: HashMap<String, usize>,
    folded_index: HashMap<String, usize>,
    matrix: Vec<T>,
    norms: Vec<T>,
}

impl<T: Scalar> EmbeddingTable<T> {
    /// Builds a table from `(word, vector)` rows. Later duplicates of a word are dropped;
    /// the number dropped is returned alongside the table.
    pub fn from_rows<I>(dim: usize, rows: I) -> Result<(Self, usize), EmbeddingError>
    where
        I: IntoIterator<Item = (String, Vec<T>)>,
    {
        let mut table = EmbeddingTable {
            dim,
            words: Vec::new(),
            index: HashMap::new(),
            folded_index: HashMap::new(),
            matrix: Vec::new(),
            norms: Vec::new(),
        };
        let mut duplicates = 0;
        for (i, (word, vector)) in rows.into_iter().enumerate() {
            if vector.len() != dim {
                return Err(EmbeddingError::Dimension {
                    line: i + 1,
                    expected: dim,
                    found: vector.len(),
                });
            }
            if vector.iter().any(|v| !v.is_finite()) {
                return Err(EmbeddingError::NonFinite { line: i + 1 });
            }
            if !table.push(word, &vector) {
                duplicates += 1;
            }
        }
        Ok((table, duplicates))
    }

    fn push(&mut self, word: String, vector: &[T]) -> bool {
        if self.index.contains_key(&word) {
            return false;
        }
        let row = self.words.len();
        self.folded_index.entry(fold(&word)).or_insert(row);
        self.index.insert(word.clone(), row);
        self.words.push(word);
        self.matrix.extend_from_slice(vector);
        self.norms.push(l2_norm(vector));
        true
    }

    /// Reads the `.vec` text format: a `count dim` header followed by `word v1 .. vdim` rows.
    pub fn read_vec<R: BufRead>(reader: R) -> Result<(Self, VecLoadReport), EmbeddingError> {
        let mut lines = reader.lines().enumerate();
        let header = match lines.next() {
            Some((_, line)) => line.map_err(|e| EmbeddingError::Format {
                line: 1,
                message: e.to_string(),
            })?,
            None => {
                return Err(EmbeddingError::Format {
                    line: 1,
                    message: "missing header".into(),
                })
            }
        };
        let mut parts = header.split_whitespace();
        let parse_usize = |s: Option<&str>| s.and_then(|v| v.parse::<usize>().ok());
        let (declared, dim) = match (
            parse_usize(parts.next()),
            parse_usize(parts.next()),
            parts.next(),
        ) {
            (Some(c), Some(d), None) if d > 0 => (c, d),
            _ => {
                return Err(EmbeddingError::Format {
                    line: 1,
                    message: format!("header must be 'count dim', got '{header}'"),
                })
            }
        };

        let mut table = EmbeddingTable {
            dim,
            words: Vec::with_capacity(declared),
            index: HashMap::with_capacity(declared),
            folded_index: HashMap::with_capacity(declared),
            matrix: Vec::with_capacity(declared * dim),
            norms: Vec::with_capacity(declared),
        };
        let mut report = VecLoadReport {
            declared_rows: declared,
            duplicates: 0,
        };
        let mut rows = 0;
        let mut vector = Vec::with_capacity(dim);
        for (i, line) in lines {
            let line_no = i + 1;
            let line = line.map_err(|e| EmbeddingError::Format {
                line: line_no,
                message: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split(' ').filter(|f| !f.is_empty());
            let word = fields.next().unwrap_or_default().to_string();
            vector.clear();
            for field in fields {
                let v: f64 = field.parse().map_err(|_| EmbeddingError::Format {
                    line: line_no,
                    message: format!("invalid number '{field}'"),
                })?;
                if !v.is_finite() {
                    return Err(EmbeddingError::NonFinite { line: line_no });
                }
                vector.push(T::from_f64_lossy(v));
            }
            if vector.len() != dim {
                return Err(EmbeddingError::Dimension {
                    line: line_no,
                    expected: dim,
                    found: vector.len(),
                });
            }
            rows += 1;
            if !table.push(word, &vector) {
                report.duplicates += 1;
            }
        }
        if rows != declared {
            return Err(EmbeddingError::RowCount {
                declared,
                found: rows,
            });
        }
        if report.duplicates > 0 {
            log::warn!(
                "{} duplicate words ignored (first occurrence kept)",
                report.duplicates
            );
        }
        Ok((table, report))
    }

    pub fn load_vec(path: &Path) -> Result<(Self, VecLoadReport), EmbeddingError> {
        let file = File::open(path).map_err(|source| EmbeddingError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::read_vec(BufReader::new(file))
    }

    pub fn write_vec<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{} {}", self.len(), self.dim)?;
        for (row, word) in self.words.iter().enumerate() {
            write!(out, "{word}")?;
            for v in self.row(row) {
                write!(out, " {}", v.to_f64_lossy())?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.matrix[i * self.dim..(i + 1) * self.dim]
    }

    pub fn norm(&self, i: usize) -> T {
        self.norms[i]
    }

    /// Exact lookup first, then by case-folded form.
    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index
            .get(word)
            .or_else(|| self.folded_index.get(&fold(word)))
            .copied()
    }

    pub fn get(&self, word: &str) -> Option<&[T]> {
        self.index_of(word).map(|i| self.row(i))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[T])> {
        self.words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.as_str(), self.row(i)))
    }

    /// Exact brute-force nearest neighbours by cosine similarity, descending, ties broken by
    /// word order. A query word is excluded from its own result; zero rows score 0.
    pub fn knn(&self, query: Query<'_, T>, k: usize) -> Result<Vec<Neighbor<T>>, EmbeddingError> {
        let (vector, exclude) = match query {
            Query::Word(word) => {
                let i = self
                    .index_of(word)
                    .ok_or_else(|| EmbeddingError::UnknownWord(word.to_string()))?;
                (self.row(i), Some(i))
            }
            Query::Vector(v) => {
                if v.len() != self.dim {
                    return Err(EmbeddingError::DimensionMismatch(v.len(), self.dim));
                }
                (v, None)
            }
        };
        if k == 0 {
            return Ok(Vec::new());
        }
        let qn = l2_norm(vector);
        if qn == T::zero() {
            return Err(EmbeddingError::ZeroVector);
        }
        let mut scored: Vec<(T, usize)> = (0..self.len())
            .filter(|&i| Some(i) != exclude)
            .map(|i| {
                let sim = if self.norms[i] == T::zero() {
                    T::zero()
                } else {
                    cosine_with_norms(vector, qn, self.row(i), self.norms[i])
                };
                (sim, i)
            })
            .collect();
        let order = |a: &(T, usize), b: &(T, usize)| {
            b.0.partial_cmp(&a.0)
                .unwrap_or(Ordering::Equal)
                .then_with(|| self.words[a.1].cmp(&self.words[b.1]))
        };
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, order);
            scored.truncate(k);
        }
        scored.sort_unstable_by(order);
        Ok(scored
            .into_iter()
            .map(|(similarity, i)| Neighbor {
                word: self.words[i].clone(),
                similarity,
            })
            .collect())
    }
}

/// Character n-grams of `"<" + word + ">"` with lengths in `[n_min, n_max]`, ordered by
/// length and then position.
pub fn ngrams(word: &str, n_min: usize, n_max: usize) -> Vec<String> {
    let bracketed: Vec<char> = std::iter::once('<')
        .chain(word.chars())
        .chain(std::iter::once('>'))
        .collect();
    let mut out = Vec::new();
    for n in n_min..=n_max {
        if n == 0 || n > bracketed.len() {
            continue;
        }
        for window in bracketed.windows(n) {
            out.push(window.iter().collect());
        }
    }
    out
}

pub const DEFAULT_BUCKETS: usize = 1 << 20;

/// Hashed subword vectors: FNV-1a of each n-gram, reduced modulo a power-of-two bucket count.
///
/// Bucket rows start at zero and are stored only once written, so memory grows with the
/// number of buckets actually touched rather than with `buckets`.
#[derive(Clone, Debug, PartialEq)]
pub struct SubwordHasher<T> {
    n_min: usize,
    n_max: usize,
    buckets: usize,
    dim: usize,
    rows: HashMap<usize, Vec<T>>,
}

impl<T: Scalar> SubwordHasher<T> {
    /// Zero-initialised bucket table with n-gram lengths 3..=6.
    pub fn new(dim: usize, buckets: usize) -> Result<Self, EmbeddingError> {
        Self::with_ngram_range(dim, buckets, 3, 6)
    }

    pub fn with_ngram_range(
        dim: usize,
        buckets: usize,
        n_min: usize,
        n_max: usize,
    ) -> Result<Self, EmbeddingError> {
        if buckets == 0 || !buckets.is_power_of_two() {
            return Err(EmbeddingError::Buckets(buckets));
        }
        Ok(SubwordHasher {
            n_min,
            n_max,
            buckets,
            dim,
            rows: HashMap::new(),
        })
    }

    /// Rebuilds a hasher from stored `(bucket, row)` pairs.
    pub fn from_rows<I>(
        dim: usize,
        buckets: usize,
        n_min: usize,
        n_max: usize,
        rows: I,
    ) -> Result<Self, EmbeddingError>
    where
        I: IntoIterator<Item = (usize, Vec<T>)>,
    {
        let mut hasher = Self::with_ngram_range(dim, buckets, n_min, n_max)?;
        for (bucket, row) in rows {
            if bucket >= buckets {
                return Err(EmbeddingError::Buckets(bucket));
            }
            if row.len() != dim {
                return Err(EmbeddingError::DimensionMismatch(row.len(), dim));
            }
            hasher.rows.insert(bucket, row);
        }
        Ok(hasher)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn buckets(&self) -> usize {
        self.buckets
    }

    pub fn ngram_range(&self) -> (usize, usize) {
        (self.n_min, self.n_max)
    }

    /// Stored rows sorted by bucket index.
    pub fn stored_rows(&self) -> Vec<(usize, &[T])> {
        let mut rows: Vec<(usize, &[T])> =
            self.rows.iter().map(|(&b, r)| (b, r.as_slice())).collect();
        rows.sort_unstable_by_key(|&(b, _)| b);
        rows
    }

    pub fn ngrams(&self, word: &str) -> Vec<String> {
        ngrams(word, self.n_min, self.n_max)
    }

    pub fn bucket(&self, ngram: &str) -> usize {
        (fnv1a64(ngram.as_bytes()) & (self.buckets as u64 - 1)) as usize
    }

    pub fn bucket_indices(&self, word: &str) -> Vec<usize> {
        self.ngrams(word).iter().map(|g| self.bucket(g)).collect()
    }

    /// `None` for a bucket that was never written (an all-zero row).
    pub fn row(&self, bucket: usize) -> Option<&[T]> {
        self.rows.get(&bucket).map(Vec::as_slice)
    }

    pub fn row_mut(&mut self, bucket: usize) -> &mut [T] {
        assert!(bucket < self.buckets, "bucket {bucket} out of range");
        let dim = self.dim;
        self.rows
            .entry(bucket)
            .or_insert_with(|| vec![T::zero(); dim])
    }

    /// Mean of the bucket rows; `None` for an empty bucket list.
    pub fn mean_of(&self, buckets: &[usize]) -> Option<Vec<T>> {
        if buckets.is_empty() {
            return None;
        }
        let mut out = vec![T::zero(); self.dim];
        for &b in buckets {
            if let Some(row) = self.row(b) {
                for (o, &v) in out.iter_mut().zip(row) {
                    *o += v;
                }
            }
        }
        let n = T::from_usize_lossy(buckets.len());
        out.iter_mut().for_each(|o| *o /= n);
        Some(out)
    }

    /// Fits the bucket rows so that the subword mean of every vocabulary word approximates its
    /// pretrained vector (squared error, plain SGD). This stands in for the subword vectors
    /// shipped inside binary fastText models, which the `.vec` format lacks.
    pub fn pretrain_from_table(
        &mut self,
        table: &EmbeddingTable<T>,
        epochs: usize,
        lr: T,
        seed: u64,
    ) {
        assert_eq!(table.dim(), self.dim, "table and hasher dimensions differ");
        let words: Vec<(Vec<usize>, usize)> = (0..table.len())
            .map(|i| (self.bucket_indices(&fold(&table.words()[i])), i))
            .filter(|(b, _)| !b.is_empty())
            .collect();
        let mut order: Vec<usize> = (0..words.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..epochs {
            order.shuffle(&mut rng);
            for &w in &order {
                let (buckets, row) = &words[w];
                let predicted = self.mean_of(buckets).expect("non-empty bucket list");
                let step = lr / T::from_usize_lossy(buckets.len());
                let err: Vec<T> = predicted
                    .iter()
                    .zip(table.row(*row))
                    .map(|(&p, &t)| (p - t) * step)
                    .collect();
                for &b in buckets {
                    for (r, &e) in self.row_mut(b).iter_mut().zip(&err) {
                        *r -= e;
                    }
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum EmbeddingSource {
    Vocabulary(usize),
    Subword(Vec<usize>),
    /// No n-grams: the zero vector was returned.
    Empty,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TokenEmbedding<T> {
    pub vector: Vec<T>,
    pub source: EmbeddingSource,
}

/// Vocabulary row for in-vocabulary tokens, otherwise the mean of the token's n-gram buckets.
pub fn embed_token<T: Scalar>(
    folded: &str,
    table: &EmbeddingTable<T>,
    hasher: &SubwordHasher<T>,
) -> TokenEmbedding<T> {
    debug_assert_eq!(table.dim(), hasher.dim());
    if let Some(i) = table.index_of(folded) {
        return TokenEmbedding {
            vector: table.row(i).to_vec(),
            source: EmbeddingSource::Vocabulary(i),
        };
    }
    let buckets = hasher.bucket_indices(folded);
    match hasher.mean_of(&buckets) {
        Some(vector) => TokenEmbedding {
            vector,
            source: EmbeddingSource::Subword(buckets),
        },
        None => TokenEmbedding {
            vector: vec![T::zero(); hasher.dim()],
            source: EmbeddingSource::Empty,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn toy() -> EmbeddingTable<f64> {
        let text = "3 2\nhund 1 0\nkatze 0 1\nmaus 1 1\n";
        EmbeddingTable::read_vec(text.as_bytes()).unwrap().0
    }

    #[test]
    fn load_small_fixture() {
        let t = toy();
        assert_eq!((t.len(), t.dim()), (3, 2));
        assert_eq!(t.get("maus"), Some(&[1.0, 1.0][..]));
        assert_eq!(t.get("MAUS"), Some(&[1.0, 1.0][..]));
        assert!((t.norm(2) - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn load_duplicate_keeps_first() {
        let (t, report) =
            EmbeddingTable::<f64>::read_vec("3 2\na 1 0\nb 0 1\na 5 5\n".as_bytes()).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(report.duplicates, 1);
        assert_eq!(t.get("a"), Some(&[1.0, 0.0][..]));
    }

    #[test]
    fn load_errors() {
        let err = EmbeddingTable::<f64>::read_vec("2 2\na 1 0\nb 0\n".as_bytes()).unwrap_err();
        assert!(matches!(
            err,
            EmbeddingError::Dimension {
                line: 3,
                expected: 2,
                found: 1
            }
        ));
        let err = EmbeddingTable::<f64>::read_vec("1 2\na 1 NaN\n".as_bytes()).unwrap_err();
        assert!(matches!(
            err,
            EmbeddingError::NonFinite { line: 2 } | EmbeddingError::Format { line: 2, .. }
        ));
        let err = EmbeddingTable::<f64>::read_vec("1 2\na 1 inf\n".as_bytes()).unwrap_err();
        assert!(matches!(err, EmbeddingError::NonFinite { line: 2 }));
        assert!(EmbeddingTable::<f64>::read_vec("".as_bytes()).is_err());
        assert!(EmbeddingTable::<f64>::read_vec("x y\n".as_bytes()).is_err());
        assert!(matches!(
            EmbeddingTable::<f64>::read_vec("3 1\na 1\n".as_bytes()),
            Err(EmbeddingError::RowCount {
                declared: 3,
                found: 1
            })
        ));
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine(&[0.3, -2.0], &[0.3, -2.0]).unwrap(), 1.0);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!(
            (cosine::<f64>(&[1.0, 0.0], &[1.0, 1.0]).unwrap() - std::f64::consts::FRAC_1_SQRT_2)
                .abs()
                < 1e-12
        );
        assert!(matches!(
            cosine(&[0.0, 0.0], &[1.0, 1.0]),
            Err(EmbeddingError::ZeroVector)
        ));
        assert!(matches!(
            cosine(&[1.0], &[1.0, 1.0]),
            Err(EmbeddingError::DimensionMismatch(1, 2))
        ));
        assert_eq!(cosine(&[1.0f32, 2.0], &[1.0, 2.0]).unwrap(), 1.0);
    }

    #[test]
    fn knn_examples() {
        let t = toy();
        assert!(t.knn(Query::Word("hund"), 0).unwrap().is_empty());
        let n = t.knn(Query::Word("hund"), 2).unwrap();
        assert_eq!(n[0].word, "maus");
        assert_eq!(n[1].word, "katze");
        assert_eq!(t.knn(Query::Word("hund"), 10).unwrap().len(), 2);
        assert_eq!(t.knn(Query::Vector(&[1.0, 0.0]), 10).unwrap().len(), 3);
        assert!(matches!(
            t.knn(Query::Word("vogel"), 1),
            Err(EmbeddingError::UnknownWord(_))
        ));

        let (ties, _) = EmbeddingTable::from_rows(
            2,
            vec![
                ("q".to_string(), vec![1.0, 0.0]),
                ("zeta".to_string(), vec![2.0, 1.0]),
                ("alpha".to_string(), vec![2.0, 1.0]),
            ],
        )
        .unwrap();
        let n = ties.knn(Query::Word("q"), 2).unwrap();
        assert_eq!(n[0].word, "alpha");
        assert_eq!(n[1].word, "zeta");
    }

    #[test]
    fn ngram_examples() {
        assert_eq!(ngrams("Ami", 3, 3), ["<Am", "Ami", "mi>"]);
        assert_eq!(ngrams("a", 3, 6), ["<a>"]);
        assert!(ngrams("a", 4, 6).is_empty());
        let g = ngrams("über", 3, 4);
        assert_eq!(g[0], "<üb");
        assert_eq!(g.last().unwrap(), "ber>");
    }

    #[test]
    fn ngram_count_matches_brute_force_enumeration() {
        for word in ["a", "ab", "Ami", "Andoranern", "Italienerinnen", "ß"] {
            let bracketed: Vec<char> = format!("<{word}>").chars().collect();
            let mut brute = 0;
            for i in 0..bracketed.len() {
                for j in i + 1..=bracketed.len() {
                    if (3..=6).contains(&(j - i)) {
                        brute += 1;
                    }
                }
            }
            let identity: usize = (3..=6).map(|n| bracketed.len().saturating_sub(n - 1)).sum();
            assert_eq!(ngrams(word, 3, 6).len(), brute, "{word}");
            assert_eq!(brute, identity);
        }
    }

    #[test]
    fn hasher_rejects_bad_bucket_counts() {
        assert!(SubwordHasher::<f64>::new(4, 1000).is_err());
        assert!(SubwordHasher::<f64>::new(4, 0).is_err());
        let h = SubwordHasher::<f64>::new(4, 1024).unwrap();
        assert!(h.bucket_indices("Andoranern").iter().all(|&b| b < 1024));
    }

    #[test]
    fn embed_token_paths() {
        let t = toy();
        let mut h = SubwordHasher::new(2, 1 << 10).unwrap();
        let e = embed_token("katze", &t, &h);
        assert_eq!(e.vector, vec![0.0, 1.0]);
        assert_eq!(e.source, EmbeddingSource::Vocabulary(1));

        let oov = embed_token("andoranern", &t, &h);
        assert!(oov.vector.iter().all(|&v| v == 0.0));
        let EmbeddingSource::Subword(buckets) = oov.source else {
            panic!()
        };
        // a training step touching one bucket makes the OOV vector nonzero
        h.row_mut(buckets[0])[0] = 0.25;
        let after = embed_token("andoranern", &t, &h);
        assert!(after.vector.iter().any(|&v| v != 0.0));
        let expected = 0.25 / buckets.len() as f64
            * buckets.iter().filter(|&&b| b == buckets[0]).count() as f64;
        assert!((after.vector[0] - expected).abs() < 1e-15);

        let short = SubwordHasher::<f64>::with_ngram_range(2, 16, 4, 6).unwrap();
        assert_eq!(embed_token("a", &t, &short).source, EmbeddingSource::Empty);
    }

    #[test]
    fn words_with_identical_buckets_share_vectors() {
        let t = toy();
        // a single bucket: every n-gram collides, so all OOV words map to the same rows
        let mut h = SubwordHasher::with_ngram_range(2, 1, 3, 6).unwrap();
        h.row_mut(0).copy_from_slice(&[0.5, -0.25]);
        let a = embed_token("andoranern", &t, &h);
        let b = embed_token("afgahnen", &t, &h);
        assert_eq!(a.vector, b.vector);
        assert_eq!(a.vector, vec![0.5, -0.25]);
    }

    #[test]
    fn pretraining_pulls_oov_typos_toward_their_source_word() {
        let (t, _) = EmbeddingTable::<f64>::from_rows(
            2,
            vec![
                ("andorraner".into(), vec![1.0, 0.0]),
                ("familien".into(), vec![0.0, 1.0]),
            ],
        )
        .unwrap();
        let mut h = SubwordHasher::new(2, 1 << 12).unwrap();
        h.pretrain_from_table(&t, 200, 0.5, 1);
        let typo = embed_token("andoraner", &t, &h).vector;
        assert!(cosine(&typo, t.row(0)).unwrap() > 0.9);
    }

    #[test]
    fn write_then_read_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<(String, Vec<f64>)> = (0..50)
            .map(|i| {
                (
                    format!("w{i}"),
                    (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                )
            })
            .collect();
        let (table, _) = EmbeddingTable::from_rows(8, rows).unwrap();
        let mut buf = Vec::new();
        table.write_vec(&mut buf).unwrap();
        let (back, _) = EmbeddingTable::<f64>::read_vec(buf.as_slice()).unwrap();
        assert_eq!(back.words(), table.words());
        for i in 0..table.len() {
            for (a, b) in back.row(i).iter().zip(table.row(i)) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    proptest! {
        #[test]
        fn cosine_symmetry_and_scale(
            u in prop::collection::vec(-10.0f64..10.0, 5),
            v in prop::collection::vec(-10.0f64..10.0, 5),
            a in 0.01f64..100.0,
        ) {
            prop_assume!(l2_norm(&u) > 1e-6 && l2_norm(&v) > 1e-6);
            let c = cosine(&u, &v).unwrap();
            prop_assert!((c - cosine(&v, &u).unwrap()).abs() < 1e-12);
            let scaled: Vec<f64> = u.iter().map(|x| a * x).collect();
            prop_assert!((cosine(&scaled, &v).unwrap() - c).abs() < 1e-9);
            prop_assert!((-1.0..=1.0).contains(&c));
        }

        #[test]
        fn embed_token_is_deterministic(word in "[a-zäöü]{1,12}") {
            let t = toy();
            let mut h = SubwordHasher::new(2, 256).unwrap();
            for b in 0..256 { h.row_mut(b)[0] = (b as f64).sin(); }
            let a = embed_token(&word, &t, &h);
            let b = embed_token(&word, &t, &h);
            prop_assert_eq!(a.vector.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                            b.vector.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        }
    }
}
