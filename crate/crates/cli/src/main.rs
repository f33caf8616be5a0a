mod commands;
mod run;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::settings::Settings;

#[derive(Debug, Parser)]
#[command(
    name = "guestmix",
    version,
    about = "Guest-nationality detection and composition estimates for German hotel reviews"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Base seed, overriding the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Config file: `key = value` lines or a JSON object.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one setting, e.g. `--set sample.size=500`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Turn recoverable data problems (skipped records, tied votes, unlocated businesses) into errors.
    #[arg(long, global = true)]
    strict: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModelKind {
    Dict,
    TfidfSvm,
    Lstm,
    Bilstm,
    FasttextLstm,
    FasttextBilstm,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Dict => "dictionary",
            ModelKind::TfidfSvm => "tfidf-svm",
            ModelKind::Lstm => "lstm",
            ModelKind::Bilstm => "bilstm",
            ModelKind::FasttextLstm => "fasttext-lstm",
            ModelKind::FasttextBilstm => "fasttext-bilstm",
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Segment reviews into unique sentences.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Split sentences by whether the gazetteer matches.
    Filter {
        #[arg(long)]
        sentences: PathBuf,
        #[arg(long)]
        gazetteer: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Add inflections and embedding-neighbour slang to a seed lexicon.
    ExpandVocab {
        #[arg(long)]
        lexicon: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        /// Surfaces never added by expansion, one per line.
        #[arg(long)]
        veto: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw the annotation sample from the filtered pools.
    Sample {
        #[arg(long)]
        with_terms: PathBuf,
        #[arg(long)]
        without_terms: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Majority-merge annotator labels and report Fleiss kappa.
    MergeAnnotations {
        #[arg(long)]
        sample: PathBuf,
        #[arg(long, required = true)]
        annotations: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Stratified train/validation split of labeled sentences.
    Split {
        #[arg(long)]
        labeled: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one classifier and write its checkpoint.
    Train {
        #[arg(long, value_enum)]
        model: ModelKind,
        /// Labeled training sentences (not needed for `dict`).
        #[arg(long)]
        train: Option<PathBuf>,
        /// Gazetteer TSV for `dict`.
        #[arg(long)]
        gazetteer: Option<PathBuf>,
        /// Pretrained `.vec` table for the fasttext models.
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score checkpoints on labeled sentences.
    Evaluate {
        #[arg(long = "model", required = true)]
        models: Vec<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        /// Print the metrics JSON instead of the comparison table.
        #[arg(long)]
        json: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-sentence probabilities and labels.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        /// Sentences JSONL.
        #[arg(long, conflicts_with = "text", required_unless_present = "text")]
        sentences: Option<PathBuf>,
        /// Ad-hoc sentence text. Repeatable.
        #[arg(long)]
        text: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the fixed six-sentence qualitative suite.
    Qualitative {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-business composition estimates from positive predictions.
    Aggregate {
        #[arg(long)]
        sentences: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        gazetteer: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// GeoJSON FeatureCollection of composition estimates.
    ExportGeojson {
        #[arg(long)]
        composition: PathBuf,
        /// CSV with header `business_id,lat,lon`.
        #[arg(long)]
        locations: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare analytic and finite-difference gradients of small recurrent models.
    Gradcheck {
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic corpus with its lexicon, embeddings, locations and ground truth.
    Synth {
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulated annotators for a sample drawn from a synthetic corpus.
    SimulateAnnotations {
        #[arg(long)]
        sample: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// End-to-end model comparison on synthetic corpora.
    Benchmark {
        #[arg(long, value_delimiter = ',', default_values_t = vec![0u64])]
        seeds: Vec<u64>,
        #[arg(long)]
        json: bool,
        #[arg(long)]
        out: PathBuf,
    },
}

pub enum CliError {
    Usage(String),
    Data(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::Data(e.into())
    }
}

fn load_settings(global: &GlobalArgs) -> Result<Settings, CliError> {
    let mut settings = Settings::default();
    if let Some(path) = &global.config {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Data(anyhow::anyhow!(
                "cannot read config {}: {e}",
                path.display()
            ))
        })?;
        settings
            .apply_file_text(&text)
            .map_err(|e| CliError::Data(e.context(format!("config {}", path.display()))))?;
    }
    for o in &global.overrides {
        settings
            .apply_assignment(o)
            .map_err(|e| CliError::Usage(format!("--set {o}: {e:#}")))?;
    }
    if let Some(seed) = global.seed {
        settings.seed = seed;
    }
    Ok(settings)
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let settings = load_settings(&cli.global)?;
    let ctx = commands::Context {
        settings,
        strict: cli.global.strict,
    };
    match cli.command {
        Command::Ingest { input, out } => commands::ingest(&ctx, &input, &out),
        Command::Filter {
            sentences,
            gazetteer,
            out,
        } => commands::filter(&ctx, &sentences, &gazetteer, &out),
        Command::ExpandVocab {
            lexicon,
            embeddings,
            veto,
            out,
        } => commands::expand_vocab(&ctx, &lexicon, &embeddings, veto.as_deref(), &out),
        Command::Sample {
            with_terms,
            without_terms,
            out,
        } => commands::sample(&ctx, &with_terms, &without_terms, &out),
        Command::MergeAnnotations {
            sample,
            annotations,
            out,
        } => commands::merge_annotations(&ctx, &sample, &annotations, &out),
        Command::Split { labeled, out } => commands::split(&ctx, &labeled, &out),
        Command::Train {
            model,
            train,
            gazetteer,
            embeddings,
            out,
        } => {
            let need = |opt: &Option<PathBuf>, flag: &str| {
                if opt.is_none() {
                    Err(CliError::Usage(format!(
                        "--model {} requires --{flag}",
                        model.name()
                    )))
                } else {
                    Ok(())
                }
            };
            match model {
                ModelKind::Dict => need(&gazetteer, "gazetteer")?,
                ModelKind::FasttextLstm | ModelKind::FasttextBilstm => {
                    need(&train, "train")?;
                    need(&embeddings, "embeddings")?
                }
                _ => need(&train, "train")?,
            }
            commands::train(
                &ctx,
                model,
                train.as_deref(),
                gazetteer.as_deref(),
                embeddings.as_deref(),
                &out,
            )
        }
        Command::Evaluate {
            models,
            data,
            embeddings,
            json,
            out,
        } => commands::evaluate(&ctx, &models, &data, embeddings.as_deref(), json, &out),
        Command::Predict {
            model,
            embeddings,
            sentences,
            text,
            out,
        } => commands::predict(
            &ctx,
            &model,
            embeddings.as_deref(),
            sentences.as_deref(),
            &text,
            &out,
        ),
        Command::Qualitative {
            model,
            embeddings,
            out,
        } => commands::qualitative(&ctx, &model, embeddings.as_deref(), &out),
        Command::Aggregate {
            sentences,
            predictions,
            gazetteer,
            out,
        } => commands::aggregate(&ctx, &sentences, &predictions, &gazetteer, &out),
        Command::ExportGeojson {
            composition,
            locations,
            out,
        } => commands::export_geojson(&ctx, &composition, &locations, &out),
        Command::Gradcheck { out } => commands::gradcheck(&ctx, &out),
        Command::Synth { out } => commands::synth(&ctx, &out),
        Command::SimulateAnnotations { sample, truth, out } => {
            commands::simulate_annotations(&ctx, &sample, &truth, &out)
        }
        Command::Benchmark { seeds, json, out } => commands::benchmark(&ctx, &seeds, json, &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(1),
            };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(message)) => {
            eprintln!("error: {message}");
            eprintln!("run with --help for usage");
            ExitCode::from(1)
        }
        Err(CliError::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
