//! Review ingestion, sentence segmentation, tokenization and deduplication.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

use crate::hash::fnv1a64;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unknown review format '{0}' (expected jsonl or csv)")]
    UnknownFormat(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid sentence id '{0}'")]
    InvalidSentenceId(String),
}

impl CorpusError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CorpusError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Content hash of a normalized sentence. Rendered as 16 lowercase hex digits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SentenceId(pub u64);

impl SentenceId {
    pub fn of_text(text: &str) -> Self {
        SentenceId(fnv1a64(normalize(text).as_bytes()))
    }
}

impl fmt::Display for SentenceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

impl FromStr for SentenceId {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.is_empty() || s.len() > 16 {
            return Err(CorpusError::InvalidSentenceId(s.to_string()));
        }
        u64::from_str_radix(s, 16)
            .map(SentenceId)
            .map_err(|_| CorpusError::InvalidSentenceId(s.to_string()))
    }
}

impl Serialize for SentenceId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SentenceId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Case fold used everywhere tokens are compared: NFC followed by lowercasing.
pub fn fold(s: &str) -> String {
    s.nfc().flat_map(char::to_lowercase).collect()
}

/// Dedup normalization: NFC, case fold, whitespace collapsed to single spaces.
pub fn normalize(text: &str) -> String {
    let folded = fold(text);
    let mut out = String::with_capacity(folded.len());
    for word in folded.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Review {
    pub review_id: String,
    pub business_id: String,
    #[serde(
        default,
        rename = "date",
        alias = "timestamp",
        deserialize_with = "de_opt_date",
        skip_serializing_if = "Option::is_none"
    )]
    pub timestamp: Option<NaiveDate>,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lat: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lon: Option<f64>,
}

impl Review {
    fn validate(&self) -> Result<(), String> {
        if self.review_id.trim().is_empty() {
            return Err("empty review_id".into());
        }
        if self.text.trim().is_empty() {
            return Err(format!("review {}: empty text", self.review_id));
        }
        Ok(())
    }
}

/// Accepts `YYYY-MM-DD` or a full ISO-8601 timestamp whose first ten characters are a date.
pub fn parse_date(s: &str) -> Result<NaiveDate, String> {
    let s = s.trim();
    let head = s.get(..10).unwrap_or(s);
    NaiveDate::parse_from_str(head, "%Y-%m-%d").map_err(|e| format!("invalid date '{s}': {e}"))
}

fn de_opt_date<'de, D: Deserializer<'de>>(d: D) -> Result<Option<NaiveDate>, D::Error> {
    match Option::<String>::deserialize(d)? {
        None => Ok(None),
        Some(s) if s.trim().is_empty() => Ok(None),
        Some(s) => parse_date(&s).map(Some).map_err(serde::de::Error::custom),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReviewFormat {
    Jsonl,
    Csv,
}

impl FromStr for ReviewFormat {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" | "ndjson" => Ok(ReviewFormat::Jsonl),
            "csv" => Ok(ReviewFormat::Csv),
            other => Err(CorpusError::UnknownFormat(other.to_string())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum IngestMode {
    #[default]
    Lenient,
    Strict,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct IngestReport {
    pub records_in: usize,
    pub records_out: usize,
    pub skipped: usize,
    /// `(line, message)` for every skipped record.
    pub problems: Vec<(usize, String)>,
}

/// Reads reviews in file order. Malformed records (parse failures, empty ids or text,
/// duplicate review ids) are skipped and counted in lenient mode and abort in strict mode.
pub fn ingest_reviews(
    path: &Path,
    format: ReviewFormat,
    mode: IngestMode,
) -> Result<(Vec<Review>, IngestReport), CorpusError> {
    let file = File::open(path).map_err(|e| CorpusError::io(path, e))?;
    let reader = BufReader::new(file);
    match format {
        ReviewFormat::Jsonl => read_jsonl(reader, mode),
        ReviewFormat::Csv => read_csv(reader, mode),
    }
}

struct Collector {
    mode: IngestMode,
    seen: HashSet<String>,
    reviews: Vec<Review>,
    report: IngestReport,
}

impl Collector {
    fn new(mode: IngestMode) -> Self {
        Collector {
            mode,
            seen: HashSet::new(),
            reviews: Vec::new(),
            report: IngestReport::default(),
        }
    }

    fn accept(&mut self, line: usize, parsed: Result<Review, String>) -> Result<(), CorpusError> {
        self.report.records_in += 1;
        let checked = parsed.and_then(|r| {
            r.validate()?;
            if self.seen.contains(&r.review_id) {
                return Err(format!("duplicate review_id '{}'", r.review_id));
            }
            Ok(r)
        });
        match checked {
            Ok(review) => {
                self.seen.insert(review.review_id.clone());
                self.reviews.push(review);
                self.report.records_out += 1;
                Ok(())
            }
            Err(message) => match self.mode {
                IngestMode::Strict => Err(CorpusError::Parse { line, message }),
                IngestMode::Lenient => {
                    log::warn!("skipping review at line {line}: {message}");
                    self.report.skipped += 1;
                    self.report.problems.push((line, message));
                    Ok(())
                }
            },
        }
    }

    fn finish(self) -> (Vec<Review>, IngestReport) {
        (self.reviews, self.report)
    }
}

pub fn read_jsonl<R: BufRead>(
    reader: R,
    mode: IngestMode,
) -> Result<(Vec<Review>, IngestReport), CorpusError> {
    let mut collector = Collector::new(mode);
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| CorpusError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<Review>(&line).map_err(|e| e.to_string());
        collector.accept(line_no, parsed)?;
    }
    Ok(collector.finish())
}

/// Comma-separated, double-quote escaped, header required. Required columns:
/// `business_id`, `review_id`, `text`; optional `date`, `lat`, `lon`.
pub fn read_csv<R: Read>(
    reader: R,
    mode: IngestMode,
) -> Result<(Vec<Review>, IngestReport), CorpusError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| CorpusError::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let column = |name: &str| headers.iter().position(|h| h.trim() == name);
    let (business, review, text) =
        match (column("business_id"), column("review_id"), column("text")) {
            (Some(b), Some(r), Some(t)) => (b, r, t),
            _ => {
                return Err(CorpusError::Parse {
                    line: 1,
                    message: "header must contain business_id, review_id and text".into(),
                })
            }
        };
    let date = column("date").or_else(|| column("timestamp"));
    let lat = column("lat");
    let lon = column("lon");

    let mut collector = Collector::new(mode);
    for record in rdr.records() {
        let (line, parsed) = match record {
            Ok(rec) => {
                let line = rec.position().map_or(0, |p| p.line() as usize);
                let field = |i: usize| rec.get(i).map(str::to_string);
                let parsed = (|| -> Result<Review, String> {
                    let opt_f64 = |col: Option<usize>| -> Result<Option<f64>, String> {
                        match col.and_then(|c| rec.get(c)).map(str::trim) {
                            None | Some("") => Ok(None),
                            Some(v) => v
                                .parse()
                                .map(Some)
                                .map_err(|_| format!("invalid number '{v}'")),
                        }
                    };
                    let timestamp = match date.and_then(|c| rec.get(c)).map(str::trim) {
                        None | Some("") => None,
                        Some(v) => Some(parse_date(v)?),
                    };
                    Ok(Review {
                        review_id: field(review).ok_or("missing review_id")?,
                        business_id: field(business).ok_or("missing business_id")?,
                        timestamp,
                        text: field(text).ok_or("missing text")?,
                        lat: opt_f64(lat)?,
                        lon: opt_f64(lon)?,
                    })
                })();
                (line, parsed)
            }
            Err(e) => (
                e.position().map_or(0, |p| p.line() as usize),
                Err(e.to_string()),
            ),
        };
        collector.accept(line, parsed)?;
    }
    Ok(collector.finish())
}

/// Abbreviations after which a period never ends a sentence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Abbreviations {
    entries: HashSet<String>,
}

pub const DEFAULT_ABBREVIATIONS: &[&str] = &[
    "z.B.", "bzw.", "ca.", "usw.", "Dr.", "evtl.", "inkl.", "Nr.", "u.a.", "d.h.", "ggf.", "bspw.",
    "vgl.", "Str.", "Hr.", "Fr.", "Prof.", "z.T.", "u.U.",
];

impl Default for Abbreviations {
    fn default() -> Self {
        Abbreviations {
            entries: DEFAULT_ABBREVIATIONS
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }
}

impl Abbreviations {
    pub fn empty() -> Self {
        Abbreviations {
            entries: HashSet::new(),
        }
    }

    /// One abbreviation per line; `#` starts a comment.
    pub fn from_reader<R: BufRead>(reader: R) -> std::io::Result<Self> {
        let mut entries = HashSet::new();
        for line in reader.lines() {
            let line = line?;
            let entry = line.split('#').next().unwrap_or("").trim();
            if !entry.is_empty() {
                entries.insert(entry.to_string());
            }
        }
        Ok(Abbreviations { entries })
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let file = File::open(path).map_err(|e| CorpusError::io(path, e))?;
        Self::from_reader(BufReader::new(file)).map_err(|e| CorpusError::io(path, e))
    }

    pub fn insert(&mut self, abbreviation: &str) {
        self.entries.insert(abbreviation.to_string());
    }

    pub fn contains(&self, word: &str) -> bool {
        self.entries.contains(word)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn is_terminal(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

/// Rule-based splitting: a boundary follows `.`, `!` or `?` when whitespace and then an
/// uppercase letter come next, unless the word ending at the punctuation is a known
/// abbreviation. Pieces are trimmed; empty pieces are dropped.
pub fn split_sentences(text: &str, abbreviations: &Abbreviations) -> Vec<String> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut start = 0usize;
    let mut word_start = 0usize;

    for (k, &(pos, c)) in chars.iter().enumerate() {
        if c.is_whitespace() {
            word_start = pos + c.len_utf8();
            continue;
        }
        if !is_terminal(c) {
            continue;
        }
        let end = pos + c.len_utf8();
        let mut j = k + 1;
        if j >= chars.len() || !chars[j].1.is_whitespace() {
            continue;
        }
        while j < chars.len() && chars[j].1.is_whitespace() {
            j += 1;
        }
        if j >= chars.len() || !chars[j].1.is_uppercase() {
            continue;
        }
        let word = text[word_start..end].trim_start_matches(|ch: char| !ch.is_alphanumeric());
        if abbreviations.contains(word) {
            continue;
        }
        push_piece(&mut out, &text[start..end]);
        start = end;
    }
    push_piece(&mut out, &text[start..]);
    out
}

fn push_piece(out: &mut Vec<String>, piece: &str) {
    let piece = piece.trim();
    if !piece.is_empty() {
        out.push(piece.to_string());
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub surface: String,
    pub folded: String,
    /// Byte offsets into the sentence text.
    pub start: usize,
    pub end: usize,
}

/// Tokens are maximal runs of letters; a hyphen joins two letter runs. Digits, punctuation and
/// symbols are dropped.
pub fn tokenize(text: &str) -> Vec<Token> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if !chars[i].1.is_alphabetic() {
            i += 1;
            continue;
        }
        let start = chars[i].0;
        let mut j = i;
        loop {
            while j < chars.len() && chars[j].1.is_alphabetic() {
                j += 1;
            }
            let joins = j + 1 < chars.len() && chars[j].1 == '-' && chars[j + 1].1.is_alphabetic();
            if joins {
                j += 1;
            } else {
                break;
            }
        }
        let end = chars.get(j).map_or(text.len(), |&(p, _)| p);
        let surface = &text[start..end];
        tokens.push(Token {
            surface: surface.to_string(),
            folded: fold(surface),
            start,
            end,
        });
        i = j;
    }
    tokens
}

/// Folded token strings of a text.
pub fn folded_tokens(text: &str) -> Vec<String> {
    tokenize(text).into_iter().map(|t| t.folded).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "SentenceRecord", into = "SentenceRecord")]
pub struct Sentence {
    pub sentence_id: SentenceId,
    pub review_id: String,
    pub business_id: String,
    pub date: Option<NaiveDate>,
    pub index: usize,
    pub text: String,
    pub tokens: Vec<Token>,
}

impl Sentence {
    pub fn new(
        review_id: impl Into<String>,
        business_id: impl Into<String>,
        date: Option<NaiveDate>,
        index: usize,
        text: impl Into<String>,
    ) -> Self {
        let text = text.into();
        Sentence {
            sentence_id: SentenceId::of_text(&text),
            review_id: review_id.into(),
            business_id: business_id.into(),
            date,
            index,
            tokens: tokenize(&text),
            text,
        }
    }

    /// A sentence without review provenance, e.g. for ad-hoc prediction.
    pub fn bare(text: impl Into<String>) -> Self {
        Sentence::new("", "", None, 0, text)
    }

    pub fn folded(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.folded.as_str()).collect()
    }
}

/// On-disk form of a sentence; tokens are recomputed on load.
#[derive(Serialize, Deserialize)]
struct SentenceRecord {
    sentence_id: SentenceId,
    review_id: String,
    business_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    date: Option<NaiveDate>,
    index: usize,
    text: String,
}

impl From<SentenceRecord> for Sentence {
    fn from(r: SentenceRecord) -> Self {
        Sentence {
            tokens: tokenize(&r.text),
            sentence_id: r.sentence_id,
            review_id: r.review_id,
            business_id: r.business_id,
            date: r.date,
            index: r.index,
            text: r.text,
        }
    }
}

impl From<Sentence> for SentenceRecord {
    fn from(s: Sentence) -> Self {
        SentenceRecord {
            sentence_id: s.sentence_id,
            review_id: s.review_id,
            business_id: s.business_id,
            date: s.date,
            index: s.index,
            text: s.text,
        }
    }
}

pub fn segment_review(review: &Review, abbreviations: &Abbreviations) -> Vec<Sentence> {
    split_sentences(&review.text, abbreviations)
        .into_iter()
        .enumerate()
        .map(|(i, text)| {
            Sentence::new(
                review.review_id.clone(),
                review.business_id.clone(),
                review.timestamp,
                i,
                text,
            )
        })
        .collect()
}

/// Seen-set for streaming deduplication.
#[derive(Debug, Default)]
pub struct Deduper {
    seen: HashSet<SentenceId>,
    duplicates: usize,
}

impl Deduper {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns true when the sentence is the first with its id.
    pub fn admit(&mut self, id: SentenceId) -> bool {
        let fresh = self.seen.insert(id);
        if !fresh {
            self.duplicates += 1;
        }
        fresh
    }

    pub fn duplicates(&self) -> usize {
        self.duplicates
    }
}

/// Keeps the first sentence for every id, preserving order.
pub fn dedupe<I: IntoIterator<Item = Sentence>>(sentences: I) -> (Vec<Sentence>, usize) {
    let mut deduper = Deduper::new();
    let unique = sentences
        .into_iter()
        .filter(|s| deduper.admit(s.sentence_id))
        .collect();
    (unique, deduper.duplicates())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn split(text: &str) -> Vec<String> {
        split_sentences(text, &Abbreviations::default())
    }

    #[test]
    fn jsonl_well_formed() {
        let data = r#"{"review_id":"r1","business_id":"b1","text":"Schön."}
{"review_id":"r2","business_id":"b1","text":"Gut.","date":"2021-03-04"}
{"review_id":"r3","business_id":"b2","text":"Laut.","lat":47.05,"lon":8.3}
"#;
        let (reviews, report) = read_jsonl(data.as_bytes(), IngestMode::Strict).unwrap();
        assert_eq!(reviews.len(), 3);
        assert_eq!(report.skipped, 0);
        assert_eq!(reviews[1].timestamp, NaiveDate::from_ymd_opt(2021, 3, 4));
        assert_eq!(reviews[2].lat, Some(47.05));
    }

    #[test]
    fn jsonl_malformed_line_lenient_and_strict() {
        let data = "{\"review_id\":\"r1\",\"business_id\":\"b\",\"text\":\"A.\"}\n{broken\n{\"review_id\":\"r2\",\"business_id\":\"b\",\"text\":\"B.\"}\n";
        let (reviews, report) = read_jsonl(data.as_bytes(), IngestMode::Lenient).unwrap();
        assert_eq!(reviews.len(), 2);
        assert_eq!(report.skipped, 1);
        assert_eq!(report.records_in, report.records_out + report.skipped);
        assert_eq!(report.problems[0].0, 2);

        match read_jsonl(data.as_bytes(), IngestMode::Strict) {
            Err(CorpusError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn jsonl_rejects_duplicate_ids_and_empty_text() {
        let data = "{\"review_id\":\"r1\",\"business_id\":\"b\",\"text\":\"A.\"}\n{\"review_id\":\"r1\",\"business_id\":\"b\",\"text\":\"B.\"}\n{\"review_id\":\"r3\",\"business_id\":\"b\",\"text\":\"   \"}\n";
        let (reviews, report) = read_jsonl(data.as_bytes(), IngestMode::Lenient).unwrap();
        assert_eq!(reviews.len(), 1);
        assert_eq!(report.skipped, 2);
    }

    #[test]
    fn csv_fixture_field_by_field() {
        let data = "business_id,review_id,date,text\nh1,r1,2021-05-01,\"Sehr schön, gerne wieder.\"\nh2,r2,,\"Er sagte \"\"nein\"\".\"\n";
        let (reviews, report) = read_csv(data.as_bytes(), IngestMode::Strict).unwrap();
        assert_eq!(report.records_out, 2);
        assert_eq!(reviews[0].business_id, "h1");
        assert_eq!(reviews[0].review_id, "r1");
        assert_eq!(reviews[0].timestamp, NaiveDate::from_ymd_opt(2021, 5, 1));
        assert_eq!(reviews[0].text, "Sehr schön, gerne wieder.");
        assert_eq!(reviews[1].timestamp, None);
        assert_eq!(reviews[1].text, "Er sagte \"nein\".");
    }

    #[test]
    fn csv_bad_date_reports_line() {
        let data = "business_id,review_id,date,text\nh1,r1,2021-05-01,A\nh1,r2,kein-datum,B\n";
        match read_csv(data.as_bytes(), IngestMode::Strict) {
            Err(CorpusError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let (reviews, report) = read_csv(data.as_bytes(), IngestMode::Lenient).unwrap();
        assert_eq!((reviews.len(), report.skipped), (1, 1));
    }

    #[test]
    fn csv_requires_header_columns() {
        assert!(read_csv("a,b\n1,2\n".as_bytes(), IngestMode::Lenient).is_err());
    }

    #[test]
    fn unknown_format() {
        assert!(matches!(
            "xml".parse::<ReviewFormat>(),
            Err(CorpusError::UnknownFormat(_))
        ));
    }

    #[test]
    fn splitting_examples() {
        assert!(split("").is_empty());
        assert_eq!(
            split("Das Essen war gut. Die Lage auch."),
            vec!["Das Essen war gut.", "Die Lage auch."]
        );
        assert_eq!(
            split("Wir waren z.B. im Pool."),
            vec!["Wir waren z.B. im Pool."]
        );
        assert_eq!(
            split("Wir waren z.B. Im Pool."),
            vec!["Wir waren z.B. Im Pool."]
        );
        assert_eq!(
            split("Dr. Müller war da. Toll!"),
            vec!["Dr. Müller war da.", "Toll!"]
        );
        assert_eq!(
            split("Sauber! Super? Ja."),
            vec!["Sauber!", "Super?", "Ja."]
        );
        assert_eq!(
            split("Preis 3.5 Sterne. ok."),
            vec!["Preis 3.5 Sterne. ok."]
        );
        // an uppercase start is required after the gap
        assert_eq!(
            split("Es war gut. aber laut."),
            vec!["Es war gut. aber laut."]
        );
    }

    #[test]
    fn custom_abbreviation_file() {
        let abbr =
            Abbreviations::from_reader("# comment\netc.\n\nMio. # trailing\n".as_bytes()).unwrap();
        assert_eq!(abbr.len(), 2);
        assert_eq!(
            split_sentences("Pizza, Pasta etc. Alles da.", &abbr),
            vec!["Pizza, Pasta etc. Alles da."]
        );
    }

    #[test]
    fn tokenize_examples() {
        let words: Vec<String> = tokenize("Die Amis sind wieder negativ aufgefallen")
            .into_iter()
            .map(|t| t.surface)
            .collect();
        assert_eq!(
            words,
            ["Die", "Amis", "sind", "wieder", "negativ", "aufgefallen"]
        );
        assert!(tokenize("").is_empty());
        let t = tokenize("5-Sterne-Hotel!");
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].surface, "Sterne-Hotel");
        assert_eq!((t[0].start, t[0].end), (2, 14));
        let t = tokenize("Straße, Größe - über");
        assert_eq!(
            t.iter().map(|t| t.folded.as_str()).collect::<Vec<_>>(),
            ["straße", "größe", "über"]
        );
        assert!(tokenize("123 !!! 😀").is_empty());
    }

    #[test]
    fn dedupe_examples() {
        let s = |t: &str| Sentence::bare(t);
        let (u, d) = dedupe(vec![s("A."), s("A.")]);
        assert_eq!((u.len(), d), (1, 1));
        let (u, d) = dedupe(vec![s("a b"), s("A  b")]);
        assert_eq!((u.len(), d), (1, 1));
        assert_eq!(u[0].text, "a b");
    }

    #[test]
    fn dedupe_random_distinct_strings_against_pairwise_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut texts: Vec<String> = Vec::new();
        while texts.len() < 100 {
            let len = rng.gen_range(3..12);
            let t: String = (0..len)
                .map(|_| rng.gen_range(b'a'..=b'z') as char)
                .collect();
            // oracle: pairwise comparison of normalized forms
            if texts.iter().all(|o| normalize(o) != normalize(&t)) {
                texts.push(t);
            }
        }
        let (u, d) = dedupe(texts.iter().map(Sentence::bare));
        assert_eq!((u.len(), d), (100, 0));
    }

    #[test]
    fn sentence_id_hex_round_trip() {
        let id = SentenceId::of_text("Die Lage war top.");
        assert_eq!(id.to_string().len(), 16);
        assert_eq!(id.to_string().parse::<SentenceId>().unwrap(), id);
        assert_eq!(SentenceId::of_text("die  LAGE war top."), id);
        assert!("xyz".parse::<SentenceId>().is_err());
    }

    #[test]
    fn sentence_serde_recomputes_tokens() {
        let s = Sentence::new(
            "r1",
            "b1",
            NaiveDate::from_ymd_opt(2020, 1, 2),
            3,
            "Viele Amis hier.",
        );
        let json = serde_json::to_string(&s).unwrap();
        assert!(!json.contains("tokens"));
        let back: Sentence = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
    }

    fn sentence_text() -> impl Strategy<Value = String> {
        let word = prop::sample::select(vec![
            "Das",
            "Essen",
            "war",
            "gut",
            "z.B.",
            "Dr.",
            "im",
            "Pool",
            "Die",
            "Amis",
            "sehr",
            "laut",
            "ca.",
            "Italiener",
            "3.5",
            "ok",
            "Über",
        ]);
        let sep = prop::sample::select(vec![" ", ". ", "! ", "? ", "  ", ".\n", ", "]);
        prop::collection::vec((word, sep), 0..20).prop_map(|parts| {
            parts
                .into_iter()
                .map(|(w, s)| format!("{w}{s}"))
                .collect::<String>()
        })
    }

    proptest! {
        #[test]
        fn split_rejoin_round_trip(text in sentence_text()) {
            let first = split(&text);
            let second = split(&first.join(" "));
            prop_assert_eq!(&first, &second);
            let squash = |s: &str| s.chars().filter(|c| !c.is_whitespace()).collect::<String>();
            prop_assert_eq!(squash(&first.concat()), squash(&text));
        }

        #[test]
        fn token_offsets_reconstruct_surfaces(text in "[a-zA-ZäöüßÄÖÜ0-9 .,!?-]{0,60}") {
            let tokens = tokenize(&text);
            let mut last_end = 0;
            for t in &tokens {
                prop_assert_eq!(&text[t.start..t.end], t.surface.as_str());
                prop_assert!(t.start >= last_end && t.start < t.end);
                last_end = t.end;
            }
        }

        #[test]
        fn dedupe_is_idempotent(texts in prop::collection::vec("[aAbB ]{0,4}", 0..30)) {
            let (once, _) = dedupe(texts.iter().map(Sentence::bare));
            let (twice, dups) = dedupe(once.clone());
            prop_assert_eq!(dups, 0);
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn lenient_ingest_accounts_every_record(lines in prop::collection::vec(prop::bool::ANY, 0..20)) {
            let data: String = lines.iter().enumerate().map(|(i, ok)| if *ok {
                format!("{{\"review_id\":\"r{i}\",\"business_id\":\"b\",\"text\":\"t\"}}\n")
            } else {
                "not json\n".to_string()
            }).collect();
            let (_, report) = read_jsonl(data.as_bytes(), IngestMode::Lenient).unwrap();
            prop_assert_eq!(report.records_in, lines.len());
            prop_assert_eq!(report.records_out + report.skipped, report.records_in);
        }
    }
}
