//! Synthetic German review corpus, a matching "pretrained" embedding table, simulated
//! annotators, and an end-to-end model comparison over them.
//!
//! Sentences come from templates. Guest templates filled with a nationality are positive;
//! the same templates filled with other groups of people (families, cyclists, ...) are
//! negative, as are restaurant, staff and location templates that use a nationality word.
//! A share of nationality words carries a random typo, so it is missing from both the
//! lexicon and the embedding table.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Arc;

use chrono::{Duration, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::composition::Location;
use crate::corpus::{dedupe, fold, segment_review, Abbreviations, Review, SentenceId};
use crate::country::CountryCode;
use crate::dataset::{
    merge_annotations, sample_balanced, split, AnnotationRow, SampledSentence, SplitConfig,
};
use crate::embeddings::{EmbeddingTable, SubwordHasher};
use crate::eval::{compare_models, metrics, ComparisonTable, ConfusionMatrix, MetricsReport};
use crate::gazetteer::{filter_corpus, ExpansionConfig, Gazetteer, GazetteerError, TermKind};
use crate::models::recurrent::{Architecture, RecurrentClassifier, TrainConfig};
use crate::models::svm::{SvmConfig, TfidfSvm};
use crate::models::tfidf::TfidfConfig;
use crate::models::{Classifier, DictionaryClassifier, Example, ModelError};
use crate::qualitative::{self, QualitativeReport};

pub const LEXICON_DE: &str = include_str!("../data/lexicon_de.tsv");

/// The shipped seed lexicon: demonyms and adjectives for about ninety countries.
pub fn seed_lexicon() -> Gazetteer {
    Gazetteer::from_tsv(LEXICON_DE.as_bytes()).expect("shipped lexicon is valid")
}

/// Colloquial plurals that the seed lexicon lacks, with the demonym they sit next to in the
/// generated embedding space.
pub const SLANG: &[(&str, &str)] = &[
    ("Amis", "Amerikaner"),
    ("Ösis", "Österreicher"),
    ("Tommys", "Brite"),
];

/// Typos reserved for the qualitative suite; the generator never emits them.
const RESERVED_TYPOS: &[&str] = &["andoranern", "afgahnen"];

const GUEST_TEMPLATES: &[&str] = &[
    "Das Hotel war komplett voll mit {D}.",
    "Die {P} sind wieder negativ aufgefallen.",
    "Am Pool lagen fast nur {P}.",
    "Beim Frühstück saßen viele {P} neben uns.",
    "Leider waren sehr viele laute {P} im Hotel.",
    "Die meisten Gäste waren {P}.",
    "Unter den Gästen waren auffällig viele {P}.",
    "Abends an der Bar trafen wir nette {P}.",
    "Im Hotel wohnten überwiegend {P}.",
    "Die {P} am Nachbartisch waren sehr freundlich.",
    "Wir waren fast die einzigen Gäste neben ein paar {D}.",
    "Das Publikum bestand zum Großteil aus {D}.",
    "Auf unserer Etage wohnten nur {P}.",
    "Die Animation war ganz auf {P} ausgerichtet.",
    "Morgens waren die Liegen schon von {D} belegt.",
];

const PLACE_TEMPLATES: &[&str] = &[
    "Beim {S} war das Essen {A}.",
    "Im Zentrum gibt es auch Pubs, Pizza, {P} etc.",
    "Gleich um die Ecke ist ein guter {N}.",
    "Abends waren wir beim {S} essen.",
    "Zum Essen empfehlen wir den {S} am Hafen.",
    "Das Personal bestand hauptsächlich aus {D}.",
    "Der Koch ist {N} und kocht {A}.",
    "In der Altstadt gibt es viele {P} die preiswert sind.",
    "Das Restaurant im Hotel wird von {D} geführt.",
    "Unser Reiseleiter war {N} und sehr nett.",
    "Mittags haben wir oft beim {S} gegessen.",
    "Der Kellner war {N} und sehr aufmerksam.",
];

const FOOD_ADJECTIVES: &[&str] = &[
    "fantastisch",
    "vorzüglich",
    "lecker",
    "hervorragend",
    "mittelmäßig",
    "teuer",
];

/// Other groups of guests: (nominative plural, dative plural).
const PEOPLE: &[(&str, &str)] = &[
    ("Familien", "Familien"),
    ("Rentner", "Rentnern"),
    ("Studenten", "Studenten"),
    ("Geschäftsleute", "Geschäftsleuten"),
    ("Jugendliche", "Jugendlichen"),
    ("Paare", "Paaren"),
    ("Senioren", "Senioren"),
    ("Schulklassen", "Schulklassen"),
    ("Sportler", "Sportlern"),
    ("Radfahrer", "Radfahrern"),
    ("Wanderer", "Wanderern"),
    ("Hochzeitsgäste", "Hochzeitsgästen"),
    ("Urlauber", "Urlaubern"),
    ("Touristen", "Touristen"),
    ("Stammgäste", "Stammgästen"),
    ("Kegelbrüder", "Kegelbrüdern"),
    ("Motorradfahrer", "Motorradfahrern"),
    ("Golfer", "Golfern"),
    ("Taucher", "Tauchern"),
    ("Skifahrer", "Skifahrern"),
    ("Hundebesitzer", "Hundebesitzern"),
    ("Kinder", "Kindern"),
    ("Teenager", "Teenagern"),
    ("Junggesellen", "Junggesellen"),
    ("Messebesucher", "Messebesuchern"),
    ("Pilger", "Pilgern"),
    ("Segler", "Seglern"),
    ("Reisegruppen", "Reisegruppen"),
    ("Busreisende", "Busreisenden"),
    ("Bergsteiger", "Bergsteigern"),
    ("Surfer", "Surfern"),
    ("Kurgäste", "Kurgästen"),
    ("Tagungsgäste", "Tagungsgästen"),
    ("Vereinsmitglieder", "Vereinsmitgliedern"),
    ("Großfamilien", "Großfamilien"),
    ("Alleinreisende", "Alleinreisenden"),
    ("Fußballfans", "Fußballfans"),
    ("Partygänger", "Partygängern"),
    ("Frühaufsteher", "Frühaufstehern"),
    ("Handwerker", "Handwerkern"),
    ("Monteure", "Monteuren"),
    ("Lehrer", "Lehrern"),
    ("Ärzte", "Ärzten"),
    ("Soldaten", "Soldaten"),
    ("Musiker", "Musikern"),
    ("Tänzer", "Tänzern"),
    ("Schüler", "Schülern"),
    ("Azubis", "Azubis"),
    ("Flitterwöchner", "Flitterwöchnern"),
    ("Camper", "Campern"),
    ("Backpacker", "Backpackern"),
    ("Influencer", "Influencern"),
    ("Fotografen", "Fotografen"),
    ("Reiter", "Reitern"),
    ("Angler", "Anglern"),
    ("Jäger", "Jägern"),
    ("Kletterer", "Kletterern"),
    ("Langläufer", "Langläufern"),
    ("Yogis", "Yogis"),
    ("Weinkenner", "Weinkennern"),
];

const GENERIC_SUBJECTS: &[&str] = &[
    "Das Zimmer",
    "Das Bad",
    "Der Pool",
    "Das Frühstück",
    "Das Personal",
    "Das Essen",
    "Der Service",
    "Die Lage",
    "Das Bett",
    "Der Strand",
    "Die Rezeption",
    "Der Wellnessbereich",
];
const GENERIC_ADVERBS: &[&str] = &["sehr", "wirklich", "leider", "insgesamt", "etwas"];
const GENERIC_ADJECTIVES: &[&str] = &[
    "sauber",
    "freundlich",
    "laut",
    "teuer",
    "ruhig",
    "hervorragend",
    "enttäuschend",
    "klein",
    "großzügig",
    "lecker",
    "modern",
    "veraltet",
];
const GENERIC_EXTRA: &[&str] = &[
    "Wir kommen gerne wieder.",
    "Wir kommen bestimmt wieder.",
    "Der Transfer vom Flughafen dauerte zwei Stunden.",
    "Der Transfer vom Flughafen dauerte drei Stunden.",
    "Das Essen im Restaurant war fantastisch.",
    "Das Essen im Restaurant war mittelmäßig.",
    "Am Pool gab es immer freie Liegen.",
    "Am Pool gab es selten freie Liegen.",
    "Die Kinder hatten viel Spaß im Miniclub.",
    "Abends waren wir in der Altstadt essen.",
    "Im Zentrum gibt es viele Bars und Cafés.",
    "Das Hotel war komplett ausgebucht.",
    "Beim Frühstück gab es frisches Obst.",
    "Unser Reiseleiter war sehr nett.",
];

/// Grammatical forms of one nationality used by the templates.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NationalityForms {
    pub country: CountryCode,
    /// Nominative singular.
    pub nominative: String,
    /// Dative or accusative singular.
    pub singular: String,
    pub plural: String,
    pub dative_plural: String,
    pub slang: bool,
}

/// Forms derivable with the `-er` / `-e` declension; other demonyms are skipped.
pub fn nationality_forms(lexicon: &Gazetteer) -> Vec<NationalityForms> {
    let mut out = Vec::new();
    for t in lexicon
        .terms()
        .iter()
        .filter(|t| t.kind == TermKind::Demonym)
    {
        let s = t.surface.clone();
        let (singular, plural, dative_plural) = if s.ends_with("er") {
            (s.clone(), s.clone(), format!("{s}n"))
        } else if s.ends_with('e') {
            let n = format!("{s}n");
            (n.clone(), n.clone(), n)
        } else {
            continue;
        };
        out.push(NationalityForms {
            country: t.country,
            nominative: s,
            singular,
            plural,
            dative_plural,
            slang: false,
        });
    }
    for (slang, base) in SLANG {
        let country = lexicon
            .terms()
            .iter()
            .find(|t| t.surface == *base)
            .map(|t| t.country)
            .expect("slang base is a seed");
        out.push(NationalityForms {
            country,
            nominative: slang.to_string(),
            singular: slang.to_string(),
            plural: slang.to_string(),
            dative_plural: slang.to_string(),
            slang: true,
        });
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SentenceKind {
    GuestNationality,
    GuestNationalityTypo,
    PlaceNationality,
    PlaceNationalityTypo,
    GuestOtherPeople,
    Generic,
}

impl SentenceKind {
    pub fn is_positive(self) -> bool {
        matches!(
            self,
            SentenceKind::GuestNationality | SentenceKind::GuestNationalityTypo
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub reviews: usize,
    pub businesses: usize,
    pub sentences_per_review: (usize, usize),
    /// Relative weights of the sentence kinds, in [`SentenceKind`] declaration order.
    pub kind_weights: [f64; 6],
    pub embedding_dim: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            reviews: 1500,
            businesses: 30,
            sentences_per_review: (2, 4),
            kind_weights: [0.16, 0.10, 0.18, 0.05, 0.15, 0.30],
            embedding_dim: 24,
            seed: 0,
        }
    }
}

/// What the generator knows about a sentence.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceTruth {
    pub kind: SentenceKind,
    pub label: bool,
    /// Country of the nationality word, typo or not.
    pub country: Option<CountryCode>,
}

#[derive(Clone, Debug)]
pub struct SyntheticCorpus {
    pub reviews: Vec<Review>,
    pub truth: HashMap<SentenceId, SentenceTruth>,
    pub locations: BTreeMap<String, Location>,
    /// Pretrained-style word vectors covering the whole template vocabulary.
    pub table: EmbeddingTable<f64>,
    pub lexicon: Gazetteer,
}

fn unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-3 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn mix(parts: &[(f64, &[f64])]) -> Vec<f64> {
    let dim = parts[0].1.len();
    (0..dim)
        .map(|i| parts.iter().map(|(w, v)| w * v[i]).sum())
        .collect()
}

fn words_of(text: &str) -> Vec<String> {
    crate::corpus::tokenize(text)
        .into_iter()
        .map(|t| t.folded)
        .collect()
}

/// Word vectors: nationality words share one direction plus a per-country direction (all
/// forms of a country, and its slang, land close together); other-people nouns share a
/// different direction; every remaining word is an independent random direction.
fn build_table(
    forms: &[NationalityForms],
    dim: usize,
    rng: &mut ChaCha8Rng,
) -> EmbeddingTable<f64> {
    let nat_center = unit(rng, dim);
    let people_center = unit(rng, dim);
    let mut rows: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut country_dir: HashMap<(CountryCode, String), Vec<f64>> = HashMap::new();
    let mut base_dir: HashMap<String, Vec<f64>> = HashMap::new();
    let slang_base: HashMap<&str, &str> = SLANG.iter().copied().collect();
    for f in forms.iter().filter(|f| !f.slang) {
        base_dir.insert(f.nominative.clone(), unit(rng, dim));
    }
    for f in forms {
        let dir = if f.slang {
            base_dir[slang_base[f.nominative.as_str()]].clone()
        } else {
            base_dir[&f.nominative].clone()
        };
        country_dir.insert((f.country, f.nominative.clone()), dir.clone());
        for surface in [&f.nominative, &f.singular, &f.plural, &f.dative_plural] {
            for w in words_of(surface) {
                if rows.contains_key(&w) {
                    continue;
                }
                let noise = unit(rng, dim);
                rows.insert(w, mix(&[(0.6, &nat_center), (0.8, &dir), (0.08, &noise)]));
            }
        }
    }
    for (p, d) in PEOPLE {
        let dir = unit(rng, dim);
        for w in words_of(p).into_iter().chain(words_of(d)) {
            if rows.contains_key(&w) {
                continue;
            }
            let noise = unit(rng, dim);
            rows.insert(
                w,
                mix(&[(0.6, &people_center), (0.8, &dir), (0.08, &noise)]),
            );
        }
    }
    let mut other: Vec<String> = GUEST_TEMPLATES
        .iter()
        .chain(PLACE_TEMPLATES)
        .chain(GENERIC_SUBJECTS)
        .chain(GENERIC_ADVERBS)
        .chain(GENERIC_ADJECTIVES)
        .chain(GENERIC_EXTRA)
        .chain(FOOD_ADJECTIVES)
        .flat_map(|t| {
            let bare = ["{P}", "{D}", "{S}", "{N}", "{A}"]
                .iter()
                .fold(t.to_string(), |acc, slot| acc.replace(slot, " "));
            words_of(&bare)
        })
        .collect();
    other.sort();
    other.dedup();
    for w in other {
        rows.entry(w).or_insert_with(|| unit(rng, dim));
    }
    let (table, _) =
        EmbeddingTable::from_rows(dim, rows).expect("distinct words of equal dimension");
    table
}

/// A random single edit (deletion, adjacent swap, doubling or vowel change) inside a word,
/// never touching its first letter.
fn typo(word: &str, rng: &mut ChaCha8Rng) -> String {
    let chars: Vec<char> = word.chars().collect();
    let n = chars.len();
    let mut out = chars.clone();
    match rng.gen_range(0..4) {
        0 => {
            out.remove(rng.gen_range(1..n - 1));
        }
        1 => {
            let i = rng.gen_range(1..n - 2);
            out.swap(i, i + 1);
        }
        2 => {
            let i = rng.gen_range(1..n - 1);
            out.insert(i, chars[i]);
        }
        _ => {
            let vowels: Vec<usize> = (1..n).filter(|&i| "aeiou".contains(chars[i])).collect();
            if let Some(&i) = vowels.choose(rng) {
                let choices: Vec<char> = "aeiou".chars().filter(|&c| c != chars[i]).collect();
                out[i] = *choices.choose(rng).expect("four other vowels");
            } else {
                out.remove(rng.gen_range(1..n - 1));
            }
        }
    }
    out.into_iter().collect()
}

struct Generator<'a> {
    forms: &'a [NationalityForms],
    table: &'a EmbeddingTable<f64>,
    known: HashSet<String>,
}

impl Generator<'_> {
    /// A misspelled variant of a single-word form that is unknown everywhere.
    fn misspell(&self, word: &str, rng: &mut ChaCha8Rng) -> Option<String> {
        if word.contains(' ') || word.chars().count() < 6 {
            return None;
        }
        for _ in 0..20 {
            let t = typo(word, rng);
            let f = fold(&t);
            if t != word
                && self.table.index_of(&f).is_none()
                && !self.known.contains(&f)
                && !RESERVED_TYPOS.contains(&f.as_str())
            {
                return Some(t);
            }
        }
        None
    }

    fn sentence(&self, kind: SentenceKind, rng: &mut ChaCha8Rng) -> (String, Option<CountryCode>) {
        loop {
            match kind {
                SentenceKind::Generic => {
                    if rng.gen_bool(0.3) {
                        return (GENERIC_EXTRA.choose(rng).unwrap().to_string(), None);
                    }
                    let text = format!(
                        "{} war {} {}.",
                        GENERIC_SUBJECTS.choose(rng).unwrap(),
                        GENERIC_ADVERBS.choose(rng).unwrap(),
                        GENERIC_ADJECTIVES.choose(rng).unwrap()
                    );
                    return (text, None);
                }
                SentenceKind::GuestOtherPeople => {
                    let (p, d) = PEOPLE.choose(rng).unwrap();
                    let t = GUEST_TEMPLATES.choose(rng).unwrap();
                    return (t.replace("{P}", p).replace("{D}", d), None);
                }
                _ => {}
            }
            let guest = matches!(
                kind,
                SentenceKind::GuestNationality | SentenceKind::GuestNationalityTypo
            );
            let misspelled = matches!(
                kind,
                SentenceKind::GuestNationalityTypo | SentenceKind::PlaceNationalityTypo
            );
            let pool: Vec<&NationalityForms> =
                self.forms.iter().filter(|f| guest || !f.slang).collect();
            let f = pool.choose(rng).unwrap();
            let template = if guest {
                GUEST_TEMPLATES.choose(rng).unwrap()
            } else {
                PLACE_TEMPLATES.choose(rng).unwrap()
            };
            let slot = ["{P}", "{D}", "{S}", "{N}"]
                .into_iter()
                .find(|s| template.contains(s))
                .expect("every nationality template has a slot");
            let mut word = match slot {
                "{P}" => f.plural.clone(),
                "{D}" => f.dative_plural.clone(),
                "{S}" => f.singular.clone(),
                _ => f.nominative.clone(),
            };
            if misspelled {
                match self.misspell(&word, rng) {
                    Some(t) => word = t,
                    None => continue,
                }
            }
            let text = template
                .replace(slot, &word)
                .replace("{A}", FOOD_ADJECTIVES.choose(rng).unwrap());
            return (text, Some(f.country));
        }
    }
}

const KINDS: [SentenceKind; 6] = [
    SentenceKind::GuestNationality,
    SentenceKind::GuestNationalityTypo,
    SentenceKind::PlaceNationality,
    SentenceKind::PlaceNationalityTypo,
    SentenceKind::GuestOtherPeople,
    SentenceKind::Generic,
];

pub fn generate(config: &SyntheticConfig) -> SyntheticCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let lexicon = seed_lexicon();
    let forms = nationality_forms(&lexicon);
    let table = build_table(&forms, config.embedding_dim, &mut rng);
    let mut inflected = lexicon.clone();
    inflected.add_inflections();
    let known: HashSet<String> = inflected.terms().iter().map(|t| t.key()).collect();
    let generator = Generator {
        forms: &forms,
        table: &table,
        known,
    };
    let total: f64 = config.kind_weights.iter().sum();
    let start = NaiveDate::from_ymd_opt(2021, 1, 1).expect("valid date");
    let mut locations = BTreeMap::new();
    for b in 0..config.businesses {
        locations.insert(
            format!("hotel-{:03}", b + 1),
            Location {
                lat: rng.gen_range(47.3..54.9),
                lon: rng.gen_range(6.0..15.0),
            },
        );
    }
    let business_ids: Vec<String> = locations.keys().cloned().collect();
    let mut reviews = Vec::with_capacity(config.reviews);
    let mut truth = HashMap::new();
    for r in 0..config.reviews {
        let (lo, hi) = config.sentences_per_review;
        let count = rng.gen_range(lo..=hi.max(lo));
        let mut sentences = Vec::with_capacity(count);
        for _ in 0..count {
            let mut x = rng.gen_range(0.0..total);
            let mut kind = SentenceKind::Generic;
            for (k, &w) in KINDS.iter().zip(&config.kind_weights) {
                if x < w {
                    kind = *k;
                    break;
                }
                x -= w;
            }
            let (text, country) = generator.sentence(kind, &mut rng);
            truth
                .entry(SentenceId::of_text(&text))
                .or_insert(SentenceTruth {
                    kind,
                    label: kind.is_positive(),
                    country,
                });
            sentences.push(text);
        }
        let business_id = business_ids[rng.gen_range(0..business_ids.len())].clone();
        let date = start + Duration::days(rng.gen_range(0..730));
        reviews.push(Review {
            review_id: format!("r{:05}", r + 1),
            business_id: business_id.clone(),
            timestamp: Some(date),
            text: sentences.join(" "),
            lat: Some(locations[&business_id].lat),
            lon: Some(locations[&business_id].lon),
        });
    }
    SyntheticCorpus {
        reviews,
        truth,
        locations,
        table,
        lexicon,
    }
}

/// Each rater reports the true label, flipped independently with probability `flip`.
pub fn simulate_annotators(
    sample: &[SampledSentence],
    truth: &HashMap<SentenceId, SentenceTruth>,
    raters: usize,
    flip: f64,
    seed: u64,
) -> Vec<AnnotationRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(sample.len() * raters);
    for s in sample {
        let label = truth
            .get(&s.sentence.sentence_id)
            .map(|t| t.label)
            .unwrap_or(false);
        for r in 0..raters {
            rows.push(AnnotationRow {
                sentence_id: s.sentence.sentence_id,
                annotator: format!("a{}", r + 1),
                label: label ^ rng.gen_bool(flip),
            });
        }
    }
    rows
}

/// Settings of the end-to-end comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub corpus: SyntheticConfig,
    pub sample_size: usize,
    pub with_term_ratio: f64,
    pub raters: usize,
    pub rater_flip: f64,
    pub train_fraction: f64,
    /// Share of the training fold held out for early stopping.
    pub early_stop_fraction: f64,
    pub expansion: ExpansionConfig,
    pub svm: SvmConfig,
    pub tfidf: TfidfConfig,
    pub architecture: Architecture,
    pub train: TrainConfig,
    pub learned_dim: usize,
    pub min_count: usize,
    pub buckets: usize,
    pub subword_epochs: usize,
    pub subword_lr: f64,
    /// Recurrent variants to train, by kind name.
    pub recurrent: Vec<String>,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            corpus: SyntheticConfig::default(),
            sample_size: 750,
            with_term_ratio: 0.5,
            raters: 3,
            rater_flip: 0.03,
            train_fraction: 0.7,
            early_stop_fraction: 0.3,
            expansion: ExpansionConfig::default(),
            svm: SvmConfig::default(),
            tfidf: TfidfConfig::default(),
            architecture: Architecture {
                layers: 2,
                hidden: 32,
                ..Architecture::default()
            },
            train: TrainConfig {
                adam: crate::models::optim::AdamConfig {
                    learning_rate: 5e-3,
                    ..Default::default()
                },
                max_epochs: 40,
                patience: 6,
                ..TrainConfig::default()
            },
            learned_dim: 24,
            min_count: 2,
            buckets: 1 << 14,
            subword_epochs: 60,
            subword_lr: 0.5,
            recurrent: vec![
                "lstm".into(),
                "bilstm".into(),
                "fasttext-lstm".into(),
                "fasttext-bilstm".into(),
            ],
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BenchmarkOutcome {
    pub seed: u64,
    pub reports: Vec<(String, MetricsReport)>,
    pub table: ComparisonTable,
    pub kappa: f64,
    pub train_size: usize,
    pub test_size: usize,
    pub qualitative: Option<QualitativeReport>,
}

impl BenchmarkOutcome {
    pub fn f1(&self, model: &str) -> Option<f64> {
        self.reports
            .iter()
            .find(|(m, _)| m == model)
            .map(|(_, r)| r.f1_binary)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BenchmarkError {
    #[error(transparent)]
    Gazetteer(#[from] GazetteerError),
    #[error(transparent)]
    Dataset(#[from] crate::dataset::DatasetError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] crate::eval::EvalError),
    #[error(transparent)]
    Embedding(#[from] crate::embeddings::EmbeddingError),
    #[error("unknown recurrent variant '{0}'")]
    Variant(String),
}

fn evaluate(c: &Classifier, test: &[Example]) -> Result<MetricsReport, BenchmarkError> {
    let pairs = c
        .predict_all(test)
        .into_iter()
        .zip(test)
        .map(|(p, e)| (p.label, e.label));
    Ok(metrics(&ConfusionMatrix::from_pairs(pairs))?)
}

/// Full pipeline for one seed: generate, build the gazetteer, filter, sample, annotate,
/// split, train every model family and score it on the held-out fold. The qualitative
/// suite runs against the pretrained-subword BiLSTM when it is among the variants.
pub fn run_benchmark(
    config: &BenchmarkConfig,
    seed: u64,
) -> Result<BenchmarkOutcome, BenchmarkError> {
    let corpus = generate(&SyntheticConfig {
        seed,
        ..config.corpus.clone()
    });
    let mut gazetteer = corpus.lexicon.clone();
    gazetteer.add_inflections();
    let (gazetteer, _) = gazetteer.expand_with_knn(&corpus.table, &config.expansion);

    let abbreviations = Abbreviations::default();
    let sentences = corpus
        .reviews
        .iter()
        .flat_map(|r| segment_review(r, &abbreviations));
    let (unique, _) = dedupe(sentences);
    let filtered = filter_corpus(&gazetteer, unique);
    let sample = sample_balanced(
        &filtered.with_terms,
        &filtered.without_terms,
        config.sample_size,
        config.with_term_ratio,
        seed.wrapping_add(1),
    )?;
    let rows = simulate_annotators(
        &sample,
        &corpus.truth,
        config.raters,
        config.rater_flip,
        seed.wrapping_add(2),
    );
    let merged = merge_annotations(&sample, &rows)?;
    let kappa =
        crate::eval::fleiss_kappa_from_counts(&merged.count_matrix(config.raters))?.fleiss_kappa;
    let usable = merged.usable();
    let folds = split(
        &usable,
        &SplitConfig {
            train_fraction: config.train_fraction,
            seed: seed.wrapping_add(3),
        },
    )?;
    let inner = split(
        &folds.train,
        &SplitConfig {
            train_fraction: 1.0 - config.early_stop_fraction,
            seed: seed.wrapping_add(4),
        },
    )?;
    let to_examples = |v: &[crate::dataset::LabeledSentence]| {
        v.iter()
            .filter_map(Example::from_labeled)
            .collect::<Vec<_>>()
    };
    let train_all = to_examples(&folds.train);
    let test = to_examples(&folds.validation);
    let fit = to_examples(&inner.train);
    let early = to_examples(&inner.validation);

    let mut reports = Vec::new();
    let dictionary = Classifier::Dictionary(DictionaryClassifier::new(gazetteer.clone()));
    reports.push(("dictionary".to_string(), evaluate(&dictionary, &test)?));
    let svm = Classifier::TfidfSvm(TfidfSvm::train(
        &train_all,
        config.tfidf,
        SvmConfig { seed, ..config.svm },
    )?);
    reports.push(("tfidf-svm".to_string(), evaluate(&svm, &test)?));

    let table = Arc::new(corpus.table.clone());
    let mut hasher = SubwordHasher::new(table.dim(), config.buckets)?;
    if config.recurrent.iter().any(|v| v.starts_with("fasttext")) {
        hasher.pretrain_from_table(&table, config.subword_epochs, config.subword_lr, seed);
    }
    let mut qualitative_report = None;
    for variant in &config.recurrent {
        let bidirectional = variant.ends_with("bilstm");
        let arch = Architecture {
            bidirectional,
            ..config.architecture.clone()
        };
        let mut model = match variant.as_str() {
            "lstm" | "bilstm" => RecurrentClassifier::learned(
                arch,
                config.learned_dim,
                &fit,
                config.min_count,
                seed,
            )?,
            "fasttext-lstm" | "fasttext-bilstm" => {
                RecurrentClassifier::pretrained(arch, table.clone(), hasher.clone(), None, seed)?
            }
            other => return Err(BenchmarkError::Variant(other.to_string())),
        };
        model.train(
            &fit,
            &early,
            &TrainConfig {
                seed,
                ..config.train
            },
        )?;
        let c = Classifier::Recurrent(model);
        reports.push((variant.clone(), evaluate(&c, &test)?));
        if variant == "fasttext-bilstm" {
            qualitative_report = Some(qualitative::run(&c, Some(table.as_ref())));
        }
    }
    Ok(BenchmarkOutcome {
        seed,
        table: compare_models(&reports),
        reports,
        kappa,
        train_size: train_all.len(),
        test_size: test.len(),
        qualitative: qualitative_report,
    })
}
