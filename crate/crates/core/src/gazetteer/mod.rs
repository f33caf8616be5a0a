//! Nationality lexicon: seed terms, inflected variants and embedding-neighbour expansion,
//! matched against tokenized sentences.

pub mod matcher;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{fold, tokenize, Sentence, Token};
use crate::country::CountryCode;
use crate::embeddings::{EmbeddingTable, Query};
use crate::scalar::Scalar;

pub use matcher::{select_leftmost_longest, RawMatch, TokenMatcher};

#[derive(Debug, Error)]
pub enum GazetteerError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Row { line: usize, message: String },
    #[error("duplicate surface '{surface}' (lines {first} and {second})")]
    Duplicate {
        surface: String,
        first: usize,
        second: usize,
    },
    #[error("term '{0}' contains no word tokens")]
    NoTokens(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TermKind {
    Demonym,
    Adjective,
    Slang,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TermSource {
    Seed,
    Inflected,
    Expanded,
}

macro_rules! lowercase_enum {
    ($ty:ident { $($variant:ident => $name:literal),* }) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($ty::$variant => $name),* })
            }
        }

        impl FromStr for $ty {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s.trim().to_ascii_lowercase().as_str() {
                    $($name => Ok($ty::$variant),)*
                    other => Err(format!("unknown {} '{other}'", stringify!($ty))),
                }
            }
        }
    };
}

lowercase_enum!(TermKind { Demonym => "demonym", Adjective => "adjective", Slang => "slang" });
lowercase_enum!(TermSource { Seed => "seed", Inflected => "inflected", Expanded => "expanded" });

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NationalityTerm {
    pub surface: String,
    pub country: CountryCode,
    pub kind: TermKind,
    pub source: TermSource,
}

impl NationalityTerm {
    pub fn new(
        surface: impl Into<String>,
        country: CountryCode,
        kind: TermKind,
        source: TermSource,
    ) -> Self {
        NationalityTerm {
            surface: surface.into(),
            country,
            kind,
            source,
        }
    }

    /// Folded token sequence of the surface.
    pub fn pattern(&self) -> Vec<String> {
        tokenize(&self.surface)
            .into_iter()
            .map(|t| t.folded)
            .collect()
    }

    /// Uniqueness key: the folded tokens joined by single spaces.
    pub fn key(&self) -> String {
        self.pattern().join(" ")
    }
}

/// German suffix variants of a base form. Adjectives are returned unchanged (no variants).
///
/// `-er` demonyms gain dative plural `+n`, feminine `+in`/`+innen` and colloquial `+s`;
/// weak `-e` nouns (Deutsche, Franzose) gain `+n`. Results are unique and exclude the input.
pub fn inflect(term: &NationalityTerm) -> Vec<NationalityTerm> {
    if term.kind == TermKind::Adjective {
        return Vec::new();
    }
    let s = &term.surface;
    let suffixes: &[&str] = if s.ends_with("er") {
        &["n", "in", "innen", "s"]
    } else if s.ends_with('e') {
        &["n"]
    } else {
        &[]
    };
    let base_key = term.key();
    let mut seen = HashSet::new();
    suffixes
        .iter()
        .map(|suffix| {
            NationalityTerm::new(
                format!("{s}{suffix}"),
                term.country,
                term.kind,
                TermSource::Inflected,
            )
        })
        .filter(|t| t.key() != base_key && seen.insert(t.key()))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MatchSpan {
    /// Index into [`Gazetteer::terms`].
    pub term: usize,
    pub country: CountryCode,
    pub token_start: usize,
    pub token_end: usize,
    /// Byte offsets into the sentence text.
    pub char_start: usize,
    pub char_end: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExpansionEntry {
    pub seed: String,
    pub neighbor: String,
    pub similarity: f64,
    pub accepted: bool,
    pub note: &'static str,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExpansionReport {
    pub entries: Vec<ExpansionEntry>,
    /// Seed surfaces without an embedding row.
    pub missing_seeds: Vec<String>,
}

impl ExpansionReport {
    pub fn added(&self) -> usize {
        self.entries.iter().filter(|e| e.accepted).count()
    }

    /// `seed<TAB>neighbor<TAB>similarity<TAB>accepted`
    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# seed\tneighbor\tsimilarity\taccepted")?;
        for e in &self.entries {
            writeln!(
                out,
                "{}\t{}\t{:.6}\t{}",
                e.seed, e.neighbor, e.similarity, e.accepted
            )?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpansionConfig {
    pub k: usize,
    pub min_similarity: f64,
}

impl Default for ExpansionConfig {
    fn default() -> Self {
        ExpansionConfig {
            k: 10,
            min_similarity: 0.5,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Gazetteer {
    terms: Vec<NationalityTerm>,
    keys: HashMap<String, usize>,
    veto: HashSet<String>,
    matcher: TokenMatcher,
    // matcher pattern id -> term index
    pattern_terms: Vec<usize>,
}

impl Gazetteer {
    pub fn new(terms: Vec<NationalityTerm>) -> Result<Self, GazetteerError> {
        let mut g = Gazetteer {
            terms: Vec::new(),
            keys: HashMap::new(),
            veto: HashSet::new(),
            matcher: TokenMatcher::default(),
            pattern_terms: Vec::new(),
        };
        for (i, term) in terms.into_iter().enumerate() {
            let key = term.key();
            if key.is_empty() {
                return Err(GazetteerError::NoTokens(term.surface));
            }
            if let Some(&first) = g.keys.get(&key) {
                return Err(GazetteerError::Duplicate {
                    surface: term.surface,
                    first: first + 1,
                    second: i + 1,
                });
            }
            g.keys.insert(key, g.terms.len());
            g.terms.push(term);
        }
        g.rebuild();
        Ok(g)
    }

    /// Lexicon TSV: `surface<TAB>country<TAB>kind[<TAB>source]`, `#` comments. Rows without a
    /// source column are seeds.
    pub fn from_tsv<R: BufRead>(reader: R) -> Result<Self, GazetteerError> {
        let mut terms = Vec::new();
        let mut lines_of: HashMap<String, usize> = HashMap::new();
        for (i, line) in reader.lines().enumerate() {
            let line_no = i + 1;
            let line = line.map_err(|e| GazetteerError::Row {
                line: line_no,
                message: e.to_string(),
            })?;
            let content = line.split('#').next().unwrap_or("").trim_end();
            if content.trim().is_empty() {
                continue;
            }
            let row_err = |message: String| GazetteerError::Row {
                line: line_no,
                message,
            };
            let cols: Vec<&str> = content.split('\t').map(str::trim).collect();
            if cols.len() < 3 || cols.len() > 4 {
                return Err(row_err(format!(
                    "expected 3 or 4 tab-separated columns, found {}",
                    cols.len()
                )));
            }
            let country = cols[1]
                .parse::<CountryCode>()
                .map_err(|e| row_err(e.to_string()))?;
            let kind = cols[2].parse::<TermKind>().map_err(row_err)?;
            let source = match cols.get(3) {
                Some(s) => s.parse::<TermSource>().map_err(row_err)?,
                None => TermSource::Seed,
            };
            let term = NationalityTerm::new(cols[0], country, kind, source);
            let key = term.key();
            if key.is_empty() {
                return Err(row_err(format!("'{}' contains no word tokens", cols[0])));
            }
            if let Some(&first) = lines_of.get(&key) {
                return Err(GazetteerError::Duplicate {
                    surface: term.surface,
                    first,
                    second: line_no,
                });
            }
            lines_of.insert(key, line_no);
            terms.push(term);
        }
        Self::new(terms)
    }

    pub fn load_lexicon(path: &Path) -> Result<Self, GazetteerError> {
        let file = File::open(path).map_err(|source| GazetteerError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_tsv(BufReader::new(file))
    }

    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# surface\tcountry\tkind\tsource")?;
        for t in &self.terms {
            writeln!(
                out,
                "{}\t{}\t{}\t{}",
                t.surface, t.country, t.kind, t.source
            )?;
        }
        Ok(())
    }

    /// Veto list: one surface per line, `#` comments.
    pub fn read_veto<R: BufRead>(reader: R) -> std::io::Result<Vec<String>> {
        let mut out = Vec::new();
        for line in reader.lines() {
            let line = line?;
            let entry = line.split('#').next().unwrap_or("").trim();
            if !entry.is_empty() {
                out.push(entry.to_string());
            }
        }
        Ok(out)
    }

    pub fn load_veto(path: &Path) -> Result<Vec<String>, GazetteerError> {
        let io = |source| GazetteerError::Io {
            path: path.to_path_buf(),
            source,
        };
        let file = File::open(path).map_err(io)?;
        Self::read_veto(BufReader::new(file)).map_err(io)
    }

    pub fn set_veto<I, S>(&mut self, surfaces: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        self.veto = surfaces
            .into_iter()
            .map(|s| {
                tokenize(s.as_ref())
                    .into_iter()
                    .map(|t| t.folded)
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .filter(|k| !k.is_empty())
            .collect();
        self.rebuild();
    }

    /// Vetoed keys, sorted.
    pub fn veto(&self) -> Vec<String> {
        let mut v: Vec<String> = self.veto.iter().cloned().collect();
        v.sort();
        v
    }

    pub fn is_vetoed(&self, surface: &str) -> bool {
        let key: Vec<String> = tokenize(surface).into_iter().map(|t| t.folded).collect();
        self.veto.contains(&key.join(" "))
    }

    fn rebuild(&mut self) {
        let mut patterns = Vec::new();
        self.pattern_terms.clear();
        for (i, t) in self.terms.iter().enumerate() {
            let pattern = t.pattern();
            if self.veto.contains(&pattern.join(" ")) {
                continue;
            }
            patterns.push(pattern);
            self.pattern_terms.push(i);
        }
        self.matcher = TokenMatcher::new(&patterns);
    }

    pub fn terms(&self) -> &[NationalityTerm] {
        &self.terms
    }

    pub fn term(&self, index: usize) -> &NationalityTerm {
        &self.terms[index]
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn contains(&self, surface: &str) -> bool {
        let key: Vec<String> = tokenize(surface).into_iter().map(|t| t.folded).collect();
        self.keys.contains_key(&key.join(" "))
    }

    fn insert(&mut self, term: NationalityTerm) -> bool {
        let key = term.key();
        if key.is_empty() || self.keys.contains_key(&key) {
            return false;
        }
        self.keys.insert(key, self.terms.len());
        self.terms.push(term);
        true
    }

    /// Adds terms whose folded surface is new; returns how many were added.
    pub fn add_terms<I: IntoIterator<Item = NationalityTerm>>(&mut self, terms: I) -> usize {
        let added = terms.into_iter().filter(|t| self.insert(t.clone())).count();
        if added > 0 {
            self.rebuild();
        }
        added
    }

    /// Variants of `term` not already present in the gazetteer.
    pub fn inflect(&self, term: &NationalityTerm) -> Vec<NationalityTerm> {
        inflect(term)
            .into_iter()
            .filter(|v| !self.keys.contains_key(&v.key()))
            .collect()
    }

    /// Adds the inflected variants of every seed term.
    pub fn add_inflections(&mut self) -> usize {
        let variants: Vec<NationalityTerm> = self
            .terms
            .iter()
            .filter(|t| t.source == TermSource::Seed)
            .flat_map(inflect)
            .collect();
        self.add_terms(variants)
    }

    /// Adds the `k` nearest embedding neighbours of every seed term as slang terms.
    /// Neighbours below `min_similarity`, vetoed neighbours, existing terms and non-word
    /// entries are reported but not added. A neighbour proposed by several seeds takes the
    /// country of the most similar one (the earliest seed on exact ties).
    pub fn expand_with_knn<T: Scalar>(
        &self,
        table: &EmbeddingTable<T>,
        config: &ExpansionConfig,
    ) -> (Gazetteer, ExpansionReport) {
        let mut expanded = self.clone();
        let mut report = ExpansionReport::default();
        if config.k == 0 {
            return (expanded, report);
        }
        // (seed, neighbour term, similarity, rejection note)
        let mut proposals: Vec<(String, NationalityTerm, f64, &'static str)> = Vec::new();
        for seed in self.terms.iter().filter(|t| t.source == TermSource::Seed) {
            let neighbors = match table.knn(Query::Word(&seed.surface), config.k) {
                Ok(n) => n,
                Err(_) => {
                    report.missing_seeds.push(seed.surface.clone());
                    continue;
                }
            };
            for n in neighbors {
                let similarity = n.similarity.to_f64_lossy();
                let tokens = tokenize(&n.word);
                let candidate = NationalityTerm::new(
                    n.word.clone(),
                    seed.country,
                    TermKind::Slang,
                    TermSource::Expanded,
                );
                let note = if tokens.len() != 1 || tokens[0].surface != n.word {
                    "not a single word"
                } else if similarity < config.min_similarity {
                    "below min_similarity"
                } else if self.is_vetoed(&n.word) {
                    "vetoed"
                } else if self.keys.contains_key(&candidate.key()) {
                    "already a term"
                } else {
                    ""
                };
                proposals.push((seed.surface.clone(), candidate, similarity, note));
            }
        }
        let mut best: HashMap<String, usize> = HashMap::new();
        for (i, (_, candidate, similarity, note)) in proposals.iter().enumerate() {
            if note.is_empty() {
                let slot = best.entry(candidate.key()).or_insert(i);
                if *similarity > proposals[*slot].2 {
                    *slot = i;
                }
            }
        }
        let mut added = false;
        for (i, (seed, candidate, similarity, note)) in proposals.into_iter().enumerate() {
            let accepted = note.is_empty()
                && best.get(&candidate.key()) == Some(&i)
                && expanded.insert(candidate.clone());
            added |= accepted;
            let note = match (accepted, note) {
                (true, _) => "added",
                (false, "") => "closer to another seed",
                (false, n) => n,
            };
            report.entries.push(ExpansionEntry {
                seed,
                neighbor: candidate.surface,
                similarity,
                accepted,
                note,
            });
        }
        if added {
            expanded.rebuild();
        }
        (expanded, report)
    }

    /// Leftmost-longest, non-overlapping matches in token order.
    pub fn match_tokens(&self, tokens: &[Token]) -> Vec<MatchSpan> {
        self.matcher
            .find_leftmost_longest(tokens.iter().map(|t| t.folded.as_str()))
            .into_iter()
            .map(|m| self.span(tokens, m))
            .collect()
    }

    /// Every pattern occurrence, including overlaps.
    pub fn match_all_tokens(&self, tokens: &[Token]) -> Vec<MatchSpan> {
        self.matcher
            .find_all(tokens.iter().map(|t| t.folded.as_str()))
            .into_iter()
            .map(|m| self.span(tokens, m))
            .collect()
    }

    fn span(&self, tokens: &[Token], m: RawMatch) -> MatchSpan {
        let term = self.pattern_terms[m.pattern];
        MatchSpan {
            term,
            country: self.terms[term].country,
            token_start: m.start,
            token_end: m.end,
            char_start: tokens[m.start].start,
            char_end: tokens[m.end - 1].end,
        }
    }

    pub fn match_sentence(&self, sentence: &Sentence) -> Vec<MatchSpan> {
        self.match_tokens(&sentence.tokens)
    }

    pub fn match_text(&self, text: &str) -> Vec<MatchSpan> {
        self.match_tokens(&tokenize(text))
    }

    pub fn has_match(&self, tokens: &[Token]) -> bool {
        self.has_match_folded(tokens.iter().map(|t| t.folded.as_str()))
    }

    /// Same as [`Gazetteer::has_match`] over tokens that are already folded.
    pub fn has_match_folded<'a, I: IntoIterator<Item = &'a str>>(&self, folded: I) -> bool {
        !self.matcher.find_all(folded).is_empty()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterStats {
    pub with_terms: usize,
    pub without_terms: usize,
    pub total_spans: usize,
    pub term_frequencies: BTreeMap<String, usize>,
}

#[derive(Clone, Debug, Default)]
pub struct FilterOutcome {
    pub with_terms: Vec<Sentence>,
    pub without_terms: Vec<Sentence>,
    pub stats: FilterStats,
}

/// Partitions sentences by whether the gazetteer matches anything in them.
pub fn filter_corpus<I: IntoIterator<Item = Sentence>>(
    g: &Gazetteer,
    sentences: I,
) -> FilterOutcome {
    let mut out = FilterOutcome::default();
    for s in sentences {
        let spans = g.match_sentence(&s);
        if spans.is_empty() {
            out.without_terms.push(s);
        } else {
            for span in &spans {
                let surface = fold(&g.term(span.term).surface);
                *out.stats.term_frequencies.entry(surface).or_default() += 1;
            }
            out.stats.total_spans += spans.len();
            out.with_terms.push(s);
        }
    }
    out.stats.with_terms = out.with_terms.len();
    out.stats.without_terms = out.without_terms.len();
    out
}
