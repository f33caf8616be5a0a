use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context as _, Result};
use guestmix::composition::{self, CompositionEstimate, MentionRecord};
use guestmix::corpus::{self, Abbreviations, IngestMode, ReviewFormat, Sentence, SentenceId};
use guestmix::dataset::{self, LabeledSentence, SampledSentence, SplitConfig};
use guestmix::eval::{self, compare_models, ConfusionMatrix, MetricsReport};
use guestmix::gazetteer::{filter_corpus, Gazetteer};
use guestmix::models::checkpoint::{self, EmbeddingHeader, ModelHeader};
use guestmix::models::recurrent::{table_fingerprint, Architecture, TableSource, TrainConfig};
use guestmix::models::svm::SvmConfig;
use guestmix::models::{gradcheck, Classifier, DictionaryClassifier, Example};
use guestmix::synthetic::{self, SentenceTruth, SyntheticConfig};
use guestmix::{qualitative, EmbeddingTable, RecurrentClassifier, SubwordHasher, TfidfSvm};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::run::{sha256_hex, Run};
use crate::settings::{offset, Settings};
use crate::{CliError, ModelKind};

pub struct Context {
    pub settings: Settings,
    pub strict: bool,
}

type CmdResult = Result<(), CliError>;

fn parse_jsonl<T: DeserializeOwned>(text: &str, path: &Path) -> Result<Vec<T>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).with_context(|| format!("{}:{}", path.display(), i + 1))
        })
        .collect()
}

fn read_jsonl<T: DeserializeOwned>(run: &mut Run, path: &Path) -> Result<Vec<T>> {
    let text = run.input_text(path)?;
    parse_jsonl(&text, path)
}

fn read_gazetteer(run: &mut Run, path: &Path) -> Result<Gazetteer> {
    let bytes = run.input(path)?;
    Gazetteer::from_tsv(&bytes[..]).with_context(|| format!("gazetteer {}", path.display()))
}

fn read_table(run: &mut Run, path: &Path) -> Result<EmbeddingTable> {
    let bytes = run.input(path)?;
    let (table, report) = EmbeddingTable::read_vec(&bytes[..])
        .with_context(|| format!("embeddings {}", path.display()))?;
    if report.duplicates > 0 {
        log::warn!(
            "{}: {} duplicate rows ignored",
            path.display(),
            report.duplicates
        );
    }
    Ok(table)
}

/// Loads a checkpoint. A pretrained table is taken from `embeddings` when given and
/// otherwise from the path recorded at training time; either way it is hashed as an input.
struct LoadedModel {
    classifier: Classifier,
    table: Option<Arc<EmbeddingTable>>,
    sha256: String,
}

fn read_model(run: &mut Run, path: &Path, embeddings: Option<&Path>) -> Result<LoadedModel> {
    let bytes = run.input(path)?;
    let sha256 = sha256_hex(&bytes);
    let (header, _) = checkpoint::read_raw(&bytes[..])
        .with_context(|| format!("checkpoint {}", path.display()))?;
    let table = match &header.model {
        ModelHeader::Recurrent {
            embedding: EmbeddingHeader::Pretrained { table, .. },
            ..
        } => {
            let source = match (embeddings, table) {
                (Some(p), _) => p.to_path_buf(),
                (None, Some(src)) => src.path.clone().into(),
                (None, None) => bail!(
                    "{} needs its pretrained table; pass --embeddings",
                    path.display()
                ),
            };
            Some(Arc::new(read_table(run, &source)?))
        }
        _ => embeddings
            .map(|p| read_table(run, p).map(Arc::new))
            .transpose()?,
    };
    let (classifier, _) = checkpoint::read_checkpoint(&bytes[..], table.clone())
        .with_context(|| format!("checkpoint {}", path.display()))?;
    Ok(LoadedModel {
        classifier,
        table,
        sha256,
    })
}

fn examples_of(labeled: &[LabeledSentence]) -> Vec<Example> {
    labeled.iter().filter_map(Example::from_labeled).collect()
}

fn sentence_ids_sorted<T>(map: &HashMap<SentenceId, T>) -> Vec<SentenceId> {
    let mut ids: Vec<SentenceId> = map.keys().copied().collect();
    ids.sort_unstable();
    ids
}

pub fn ingest(ctx: &Context, input: &Path, out: &Path) -> CmdResult {
    let s = &ctx.settings;
    let mut run = Run::new("ingest", s, out)?;
    let format: ReviewFormat = match &s.ingest.format {
        Some(f) => f
            .parse()
            .map_err(|e| CliError::Usage(format!("ingest.format: {e}")))?,
        None => match input.extension().and_then(|e| e.to_str()) {
            Some("csv") => ReviewFormat::Csv,
            _ => ReviewFormat::Jsonl,
        },
    };
    let abbreviations = match &s.ingest.abbreviations {
        Some(p) => Abbreviations::from_reader(&run.input(p)?[..])?,
        None => Abbreviations::default(),
    };
    let mode = if ctx.strict {
        IngestMode::Strict
    } else {
        IngestMode::Lenient
    };
    let bytes = run.input(input)?;
    let (reviews, report) = match format {
        ReviewFormat::Jsonl => corpus::read_jsonl(&bytes[..], mode),
        ReviewFormat::Csv => corpus::read_csv(&bytes[..], mode),
    }
    .with_context(|| format!("reviews {}", input.display()))?;
    let segmented = reviews
        .iter()
        .flat_map(|r| corpus::segment_review(r, &abbreviations));
    let (sentences, duplicates) = corpus::dedupe(segmented);
    run.write_jsonl("sentences.jsonl", &sentences)?;
    run.write_json(
        "ingest_report.json",
        &json!({ "reviews": report, "sentences": sentences.len(), "duplicate_sentences": duplicates }),
    )?;
    run.finish()?;
    println!(
        "{} reviews ({} skipped) -> {} unique sentences ({} duplicates)",
        report.records_out,
        report.skipped,
        sentences.len(),
        duplicates
    );
    Ok(())
}

pub fn filter(ctx: &Context, sentences: &Path, gazetteer: &Path, out: &Path) -> CmdResult {
    let mut run = Run::new("filter", &ctx.settings, out)?;
    let g = read_gazetteer(&mut run, gazetteer)?;
    let input: Vec<Sentence> = read_jsonl(&mut run, sentences)?;
    let outcome = filter_corpus(&g, input);
    run.write_jsonl("with_terms.jsonl", &outcome.with_terms)?;
    run.write_jsonl("without_terms.jsonl", &outcome.without_terms)?;
    run.write_json("filter_stats.json", &outcome.stats)?;
    run.finish()?;
    println!(
        "{} sentences with terms, {} without",
        outcome.stats.with_terms, outcome.stats.without_terms
    );
    Ok(())
}

pub fn expand_vocab(
    ctx: &Context,
    lexicon: &Path,
    embeddings: &Path,
    veto: Option<&Path>,
    out: &Path,
) -> CmdResult {
    let mut run = Run::new("expand-vocab", &ctx.settings, out)?;
    let mut g = read_gazetteer(&mut run, lexicon)?;
    if let Some(p) = veto {
        let bytes = run.input(p)?;
        g.set_veto(Gazetteer::read_veto(&bytes[..])?);
    }
    let table = read_table(&mut run, embeddings)?;
    let inflections = g.add_inflections();
    let (expanded, report) = g.expand_with_knn(&table, &ctx.settings.expansion);
    for seed in &report.missing_seeds {
        log::info!("seed '{seed}' has no embedding row");
    }
    let mut tsv = Vec::new();
    expanded.write_tsv(&mut tsv)?;
    run.write("gazetteer.tsv", &tsv)?;
    let mut rep = Vec::new();
    report.write_tsv(&mut rep)?;
    run.write("expansion.tsv", &rep)?;
    run.finish()?;
    println!(
        "{} terms: {} inflections, {} embedding neighbours added",
        expanded.len(),
        inflections,
        report.added()
    );
    Ok(())
}

pub fn sample(ctx: &Context, with_terms: &Path, without_terms: &Path, out: &Path) -> CmdResult {
    let s = &ctx.settings;
    let mut run = Run::new("sample", s, out)?;
    let with: Vec<Sentence> = read_jsonl(&mut run, with_terms)?;
    let without: Vec<Sentence> = read_jsonl(&mut run, without_terms)?;
    let drawn = dataset::sample_balanced(
        &with,
        &without,
        s.sample.size,
        s.sample.with_term_ratio,
        s.stage_seed(offset::SAMPLE),
    )?;
    let mut tsv = Vec::new();
    dataset::write_sample_tsv(&drawn, &mut tsv)?;
    run.write("sample.tsv", &tsv)?;
    run.write_jsonl("sample.jsonl", &drawn)?;
    run.finish()?;
    println!("sampled {} sentences", drawn.len());
    Ok(())
}

pub fn merge_annotations(
    ctx: &Context,
    sample: &Path,
    annotations: &[std::path::PathBuf],
    out: &Path,
) -> CmdResult {
    let mut run = Run::new("merge-annotations", &ctx.settings, out)?;
    let drawn: Vec<SampledSentence> = read_jsonl(&mut run, sample)?;
    let mut rows = Vec::new();
    for p in annotations {
        let bytes = run.input(p)?;
        rows.extend(
            dataset::read_annotations(&bytes[..])
                .with_context(|| format!("annotations {}", p.display()))?,
        );
    }
    let merged = dataset::merge_annotations(&drawn, &rows)?;
    if !merged.adjudication.is_empty() {
        let message = format!(
            "{} sentences have tied votes and need adjudication",
            merged.adjudication.len()
        );
        if ctx.strict {
            return Err(anyhow!(message).into());
        }
        log::warn!("{message}");
    }
    // Kappa needs a fixed rater count; use the most common one.
    let mut per_count: BTreeMap<usize, usize> = BTreeMap::new();
    for l in &merged.labeled {
        *per_count.entry(l.annotator_labels.len()).or_default() += 1;
    }
    let raters = per_count
        .iter()
        .max_by_key(|&(n, c)| (*c, *n))
        .map(|(&n, _)| n)
        .unwrap_or(0);
    let agreement = if raters >= 2 {
        Some(eval::fleiss_kappa_from_counts(
            &merged.count_matrix(raters),
        )?)
    } else {
        log::warn!("fewer than two raters per sentence; kappa not computed");
        None
    };
    run.write_jsonl("labeled.jsonl", &merged.labeled)?;
    run.write_json("agreement.json", &agreement)?;
    let ids: String = merged
        .adjudication
        .iter()
        .map(|id| format!("{id}\n"))
        .collect();
    run.write("adjudication.txt", ids.as_bytes())?;
    run.finish()?;
    match &agreement {
        Some(a) => println!(
            "{} labeled sentences, Fleiss kappa {:.4} over {} items x {} raters",
            merged.labeled.len(),
            a.fleiss_kappa,
            a.items,
            a.raters
        ),
        None => println!("{} labeled sentences", merged.labeled.len()),
    }
    Ok(())
}

pub fn split(ctx: &Context, labeled: &Path, out: &Path) -> CmdResult {
    let s = &ctx.settings;
    let mut run = Run::new("split", s, out)?;
    let data: Vec<LabeledSentence> = read_jsonl(&mut run, labeled)?;
    let folds = dataset::split(
        &data,
        &SplitConfig {
            train_fraction: s.split.train_fraction,
            seed: s.stage_seed(offset::SPLIT),
        },
    )?;
    run.write_jsonl("train.jsonl", &folds.train)?;
    run.write_jsonl("validation.jsonl", &folds.validation)?;
    run.write_jsonl("split.jsonl", &folds.manifest())?;
    run.finish()?;
    println!(
        "{} train, {} validation",
        folds.train.len(),
        folds.validation.len()
    );
    Ok(())
}

pub fn train(
    ctx: &Context,
    kind: ModelKind,
    train: Option<&Path>,
    gazetteer: Option<&Path>,
    embeddings: Option<&Path>,
    out: &Path,
) -> CmdResult {
    let s = &ctx.settings;
    let mut run = Run::new(format!("train-{}", kind.name()), s, out)?;
    let (labeled, train_hash) = match train {
        Some(p) => {
            let text = run.input_text(p)?;
            let hash = sha256_hex(text.as_bytes());
            (parse_jsonl::<LabeledSentence>(&text, p)?, Some(hash))
        }
        None => (Vec::new(), None),
    };
    let examples = examples_of(&labeled);
    let mut report = serde_json::Value::Null;
    let classifier = match kind {
        ModelKind::Dict => {
            let path = gazetteer.expect("checked by the caller");
            Classifier::Dictionary(DictionaryClassifier::new(read_gazetteer(&mut run, path)?))
        }
        ModelKind::TfidfSvm => Classifier::TfidfSvm(TfidfSvm::train(
            &examples,
            s.tfidf,
            SvmConfig {
                seed: s.seed,
                ..s.svm
            },
        )?),
        ModelKind::Lstm
        | ModelKind::Bilstm
        | ModelKind::FasttextLstm
        | ModelKind::FasttextBilstm => {
            let r = &s.recurrent;
            let arch = Architecture {
                bidirectional: matches!(kind, ModelKind::Bilstm | ModelKind::FasttextBilstm),
                ..r.architecture.clone()
            };
            let inner = dataset::split(
                &labeled,
                &SplitConfig {
                    train_fraction: 1.0 - s.split.early_stop_fraction,
                    seed: s.stage_seed(offset::EARLY_STOP),
                },
            )?;
            let (fit, early) = (examples_of(&inner.train), examples_of(&inner.validation));
            let mut model = if matches!(kind, ModelKind::Lstm | ModelKind::Bilstm) {
                RecurrentClassifier::learned(arch, r.learned_dim, &fit, r.min_count, s.seed)
            } else {
                let path = embeddings.expect("checked by the caller");
                let table = Arc::new(read_table(&mut run, path)?);
                let mut hasher = SubwordHasher::new(table.dim(), r.buckets)?;
                hasher.pretrain_from_table(&table, r.subword_epochs, r.subword_lr, s.seed);
                let source = TableSource {
                    path: path.display().to_string(),
                    fingerprint: table_fingerprint(&table),
                };
                RecurrentClassifier::pretrained(arch, table, hasher, Some(source), s.seed)
            }?;
            let history = model.train(
                &fit,
                &early,
                &TrainConfig {
                    seed: s.seed,
                    ..r.train
                },
            )?;
            println!(
                "best epoch {} of {}, early-stop F1 {:.4}, {} trainable parameters",
                history.best_epoch,
                history.history.len(),
                history.best_val_f1,
                history.parameters.trainable
            );
            report = serde_json::to_value(&history)?;
            Classifier::Recurrent(model)
        }
    };
    let metadata = json!({
        "model": kind.name(),
        "seed": s.seed,
        "train_sha256": train_hash,
        "train_examples": examples.len(),
    });
    let mut bytes = Vec::new();
    checkpoint::write_checkpoint(&classifier, metadata, &mut bytes)?;
    let name = format!("{}.ckpt", kind.name());
    let path = run.write(&name, &bytes)?;
    if !report.is_null() {
        run.write_json(&format!("{}.train.json", kind.name()), &report)?;
    }
    run.finish()?;
    println!("wrote {}", path.display());
    Ok(())
}

#[derive(Serialize)]
struct ModelMetrics {
    name: String,
    checkpoint_sha256: String,
    metrics: MetricsReport,
}

pub fn evaluate(
    ctx: &Context,
    models: &[std::path::PathBuf],
    data: &Path,
    embeddings: Option<&Path>,
    as_json: bool,
    out: &Path,
) -> CmdResult {
    let mut run = Run::new("evaluate", &ctx.settings, out)?;
    let text = run.input_text(data)?;
    let data_sha256 = sha256_hex(text.as_bytes());
    let labeled: Vec<LabeledSentence> = parse_jsonl(&text, data)?;
    let examples = examples_of(&labeled);
    let mut results = Vec::new();
    for path in models {
        let LoadedModel {
            classifier, sha256, ..
        } = read_model(&mut run, path, embeddings)?;
        let pairs = classifier
            .predict_all(&examples)
            .into_iter()
            .zip(&examples)
            .map(|(p, e)| (p.label, e.label));
        let metrics = eval::metrics(&ConfusionMatrix::from_pairs(pairs))?;
        let mut name = classifier.kind().to_string();
        if results.iter().any(|r: &ModelMetrics| r.name == name) {
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("model");
            name = format!("{name} ({stem})");
        }
        results.push(ModelMetrics {
            name,
            checkpoint_sha256: sha256,
            metrics,
        });
    }
    let table = compare_models(
        &results
            .iter()
            .map(|r| (r.name.clone(), r.metrics.clone()))
            .collect::<Vec<_>>(),
    );
    let doc = json!({
        "schema_version": eval::METRICS_SCHEMA_VERSION,
        "data_sha256": data_sha256,
        "examples": examples.len(),
        "models": results,
        "comparison": table,
    });
    let path = run.write_json("metrics.json", &doc)?;
    run.finish()?;
    if as_json {
        print!("{}", String::from_utf8(std::fs::read(&path)?)?);
    } else {
        print!("{}", table.render_text());
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PredictionRow {
    pub sentence_id: SentenceId,
    pub text: String,
    pub probability: f64,
    pub label: bool,
}

pub fn predict(
    ctx: &Context,
    model: &Path,
    embeddings: Option<&Path>,
    sentences: Option<&Path>,
    texts: &[String],
    out: &Path,
) -> CmdResult {
    let mut run = Run::new("predict", &ctx.settings, out)?;
    let classifier = read_model(&mut run, model, embeddings)?.classifier;
    let input: Vec<Sentence> = match sentences {
        Some(p) => read_jsonl(&mut run, p)?,
        None => texts.iter().map(Sentence::bare).collect(),
    };
    let rows: Vec<PredictionRow> = input
        .iter()
        .map(|s| {
            let p = classifier.predict(&s.folded());
            PredictionRow {
                sentence_id: s.sentence_id,
                text: s.text.clone(),
                probability: p.probability,
                label: p.label,
            }
        })
        .collect();
    run.write_jsonl("predictions.jsonl", &rows)?;
    run.finish()?;
    let positives = rows.iter().filter(|r| r.label).count();
    if sentences.is_none() {
        for r in &rows {
            println!("{:.4}\t{}\t{}", r.probability, r.label, r.text);
        }
    }
    println!(
        "{} of {} sentences predicted positive",
        positives,
        rows.len()
    );
    Ok(())
}

pub fn qualitative(
    ctx: &Context,
    model: &Path,
    embeddings: Option<&Path>,
    out: &Path,
) -> CmdResult {
    let mut run = Run::new("qualitative", &ctx.settings, out)?;
    let loaded = read_model(&mut run, model, embeddings)?;
    let report = qualitative::run(&loaded.classifier, loaded.table.as_deref());
    run.write_json("qualitative.json", &report)?;
    run.finish()?;
    print!("{}", report.render_text());
    Ok(())
}

pub fn aggregate(
    ctx: &Context,
    sentences: &Path,
    predictions: &Path,
    gazetteer: &Path,
    out: &Path,
) -> CmdResult {
    let s = &ctx.settings;
    let mut run = Run::new("aggregate", s, out)?;
    let g = read_gazetteer(&mut run, gazetteer)?;
    let input: Vec<Sentence> = read_jsonl(&mut run, sentences)?;
    let rows: Vec<PredictionRow> = read_jsonl(&mut run, predictions)?;
    let labels: HashMap<SentenceId, bool> = rows.iter().map(|r| (r.sentence_id, r.label)).collect();
    let mut aligned = Vec::with_capacity(input.len());
    for sentence in &input {
        match labels.get(&sentence.sentence_id) {
            Some(&l) => aligned.push(l),
            None => {
                return Err(anyhow!("no prediction for sentence {}", sentence.sentence_id).into())
            }
        }
    }
    let mentions = composition::extract_mentions(&input, &aligned, &g)?;
    if mentions.unattributed > 0 {
        log::warn!(
            "{} positive sentences name no gazetteer country",
            mentions.unattributed
        );
    }
    let estimates = composition::aggregate(
        &mentions.records,
        s.aggregate.window,
        s.aggregate.min_support,
    );
    run.write_jsonl::<MentionRecord>("mentions.jsonl", &mentions.records)?;
    run.write_json("composition.json", &estimates)?;
    run.finish()?;
    println!(
        "{} mentions, {} estimates (window {:?}, min support {})",
        mentions.records.len(),
        estimates.len(),
        s.aggregate.window,
        s.aggregate.min_support
    );
    Ok(())
}

pub fn export_geojson(
    ctx: &Context,
    composition_path: &Path,
    locations: &Path,
    out: &Path,
) -> CmdResult {
    let mut run = Run::new("export-geojson", &ctx.settings, out)?;
    let text = run.input_text(composition_path)?;
    let estimates: Vec<CompositionEstimate> = serde_json::from_str(&text)
        .with_context(|| format!("composition {}", composition_path.display()))?;
    let bytes = run.input(locations)?;
    let locs = composition::read_locations(&bytes[..])
        .with_context(|| format!("locations {}", locations.display()))?;
    let export = composition::export_geojson(&estimates, &locs)?;
    if !export.unlocated.is_empty() {
        let message = format!(
            "{} estimates have no business location",
            export.unlocated.len()
        );
        if ctx.strict {
            return Err(anyhow!(message).into());
        }
        log::warn!("{message}");
    }
    let mut geo = export.to_string_pretty();
    geo.push('\n');
    run.write("composition.geojson", geo.as_bytes())?;
    run.write_json("unlocated.json", &export.unlocated)?;
    run.finish()?;
    println!(
        "{} features, {} unlocated",
        estimates.len() - export.unlocated.len(),
        export.unlocated.len()
    );
    Ok(())
}

pub fn gradcheck(ctx: &Context, out: &Path) -> CmdResult {
    let g = &ctx.settings.gradcheck;
    let mut run = Run::new("gradcheck", &ctx.settings, out)?;
    let reports: Vec<gradcheck::GradCheckReport> = (0..g.seeds)
        .map(|i| gradcheck::random_check(ctx.settings.seed.wrapping_add(i), g.step))
        .collect();
    let worst = reports
        .iter()
        .map(|r| r.max_relative_error)
        .fold(0.0, f64::max);
    let passed = worst < g.tolerance;
    run.write_json(
        "gradcheck.json",
        &json!({ "tolerance": g.tolerance, "passed": passed, "max_relative_error": worst, "seeds": reports }),
    )?;
    run.finish()?;
    for r in &reports {
        println!(
            "seed {}: {} entries, max relative error {:.3e} at {}",
            r.seed, r.checked, r.max_relative_error, r.worst
        );
    }
    if !passed {
        return Err(anyhow!("max relative error {worst:.3e} exceeds {:.1e}", g.tolerance).into());
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct TruthRow {
    sentence_id: SentenceId,
    #[serde(flatten)]
    truth: SentenceTruth,
}

pub fn synth(ctx: &Context, out: &Path) -> CmdResult {
    let s = &ctx.settings;
    let mut run = Run::new("synth", s, out)?;
    let corpus = synthetic::generate(&SyntheticConfig {
        seed: s.seed,
        ..s.synth.corpus.clone()
    });
    run.write_jsonl("reviews.jsonl", &corpus.reviews)?;
    let mut vec = Vec::new();
    corpus.table.write_vec(&mut vec)?;
    run.write("embeddings.vec", &vec)?;
    let mut lexicon = Vec::new();
    corpus.lexicon.write_tsv(&mut lexicon)?;
    run.write("lexicon.tsv", &lexicon)?;
    let mut csv = String::from("business_id,lat,lon\n");
    for (b, l) in &corpus.locations {
        csv.push_str(&format!("{b},{},{}\n", l.lat, l.lon));
    }
    run.write("locations.csv", csv.as_bytes())?;
    let truth: Vec<TruthRow> = sentence_ids_sorted(&corpus.truth)
        .into_iter()
        .map(|id| TruthRow {
            sentence_id: id,
            truth: corpus.truth[&id].clone(),
        })
        .collect();
    run.write_jsonl("truth.jsonl", &truth)?;
    run.finish()?;
    println!(
        "{} reviews, {} distinct sentences, {} embedding rows",
        corpus.reviews.len(),
        truth.len(),
        corpus.table.len()
    );
    Ok(())
}

pub fn simulate_annotations(ctx: &Context, sample: &Path, truth: &Path, out: &Path) -> CmdResult {
    let s = &ctx.settings;
    let mut run = Run::new("simulate-annotations", s, out)?;
    let drawn: Vec<SampledSentence> = read_jsonl(&mut run, sample)?;
    let rows: Vec<TruthRow> = read_jsonl(&mut run, truth)?;
    let truth: HashMap<SentenceId, SentenceTruth> =
        rows.into_iter().map(|r| (r.sentence_id, r.truth)).collect();
    if let Some(missing) = drawn
        .iter()
        .find(|d| !truth.contains_key(&d.sentence.sentence_id))
    {
        return Err(anyhow!(
            "sentence {} is not in the truth file",
            missing.sentence.sentence_id
        )
        .into());
    }
    let annotations = synthetic::simulate_annotators(
        &drawn,
        &truth,
        s.synth.raters,
        s.synth.rater_flip,
        s.stage_seed(offset::ANNOTATORS),
    );
    let mut tsv = String::from("# sentence_id\tannotator\tlabel\n");
    for a in &annotations {
        tsv.push_str(&format!(
            "{}\t{}\t{}\n",
            a.sentence_id,
            a.annotator,
            u8::from(a.label)
        ));
    }
    run.write("annotations.tsv", tsv.as_bytes())?;
    run.finish()?;
    println!(
        "{} annotation rows from {} raters",
        annotations.len(),
        s.synth.raters
    );
    Ok(())
}

pub fn benchmark(ctx: &Context, seeds: &[u64], as_json: bool, out: &Path) -> CmdResult {
    let mut run = Run::new("benchmark", &ctx.settings, out)?;
    let config = ctx.settings.benchmark_config();
    let mut outcomes = Vec::new();
    for &seed in seeds {
        let outcome = synthetic::run_benchmark(&config, seed)?;
        if !as_json {
            println!(
                "seed {seed}: {} train / {} test, simulated kappa {:.4}",
                outcome.train_size, outcome.test_size, outcome.kappa
            );
            print!("{}", outcome.table.render_text());
        }
        outcomes.push(outcome);
    }
    let path = run.write_json("benchmark.json", &outcomes)?;
    run.finish()?;
    if as_json {
        print!("{}", std::fs::read_to_string(path)?);
    }
    Ok(())
}
