use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use typedclone::bench::{
    evaluate, load_dataset, load_sources, make_folds, parse_id_pairs, synth_clones, time_detection, train_embeddings,
    EncoderPipeline, GruPipeline, OverlapPipeline, Pipeline, ScoringMode, SynthSpec, BASE_METHODS,
};
use typedclone::config::{parse_kv, ConfigError};
use typedclone::dataset::PairDataset;
use typedclone::detect::{detect_corpus, CategoryWeights, Detector, DEFAULT_THRESHOLD};
use typedclone::embed::EmbedError;
use typedclone::explain::ExplainReport;
use typedclone::train::{finetune, pretrain, FineTuneHead, FinetuneConfig, PretrainConfig, TrainError};
use typedclone::{CategorizedMethod, EmbedConfig, EmbeddingTable, EncoderParams};

const VERSION: &str = concat!(
    env!("CARGO_PKG_VERSION"),
    " (formats: embeddings CCEMB1, encoder CCENC1, head CCHED1)"
);

#[derive(Parser, Debug)]
#[command(name = "typedclone", version = VERSION, about = "Typed-token attention clone detector")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    #[command(flatten)]
    opts: Overrides,
}

/// Settings shared by every subcommand. Flags win over `--config`.
#[derive(Args, Debug, Default)]
struct Overrides {
    /// key = value file with training, embedding and detection settings
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every stochastic step
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for detect, evaluate and bench-time
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Write machine output here instead of stdout
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    threshold: Option<f64>,
    #[arg(long, global = true)]
    lr: Option<f64>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    #[arg(long, global = true)]
    batch_size: Option<usize>,
    #[arg(long, global = true)]
    samples_per_class: Option<usize>,
    #[arg(long, global = true)]
    temperature: Option<f64>,
    #[arg(long, global = true)]
    momentum: Option<f64>,
    #[arg(long, global = true)]
    weight_decay: Option<f64>,
    #[arg(long, global = true)]
    window: Option<usize>,
    #[arg(long, global = true)]
    negatives: Option<usize>,
    #[arg(long, global = true)]
    embed_epochs: Option<usize>,
    #[arg(long, global = true)]
    embed_lr: Option<f64>,
    #[arg(long, global = true)]
    min_count: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Categorized tokens of a method file or a directory of them
    Tokenize {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Train word embeddings on every method of a directory
    EmbedTrain {
        #[arg(long)]
        functions: PathBuf,
        #[arg(long)]
        model: PathBuf,
    },
    /// Contrastive pretraining of the encoder on labeled pairs
    Pretrain {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        embeddings: PathBuf,
        /// Output encoder file
        #[arg(long)]
        model: PathBuf,
        /// Per-batch loss log (CSV)
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Fine-tune encoder and a classifier head on labeled pairs
    Finetune {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        encoder: PathBuf,
        /// Fully connected layers in the head
        #[arg(long, default_value_t = 1, value_parser = head_layers)]
        layers: usize,
        #[arg(long)]
        symmetric: bool,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        head: PathBuf,
    },
    /// Method vectors as JSON lines
    Encode {
        #[arg(long = "in")]
        input: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Score `id1,id2` pairs with the encoder (cosine, or a head)
    Detect {
        #[arg(long)]
        functions: PathBuf,
        #[arg(long)]
        pairs: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        head: Option<PathBuf>,
        #[arg(long)]
        symmetric: bool,
    },
    /// Token-overlap baseline, optionally weighted per category
    Baseline {
        #[arg(long)]
        functions: PathBuf,
        #[arg(long)]
        pairs: PathBuf,
        /// File with 15 category weights (canonical order)
        #[arg(long)]
        weights: Option<PathBuf>,
    },
    /// Per-category attention weights of each method
    Explain {
        #[arg(long = "in")]
        input: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        /// Also print an aligned table on stderr
        #[arg(long)]
        table: bool,
    },
    /// Ten-fold cross-validation of a pipeline
    Evaluate {
        #[command(flatten)]
        data: OptionalData,
        /// Embedding file; trained on the dataset when omitted
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = PipelineKind::Contrastive)]
        pipeline: PipelineKind,
        #[arg(long, default_value_t = 1, value_parser = head_layers)]
        layers: usize,
        #[arg(long)]
        weights: Option<PathBuf>,
    },
    /// Wall-clock detection time over a labeled pair file
    BenchTime {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum, default_value_t = TimedDetector::Cosine)]
        detector: TimedDetector,
        /// Embedding file; trained (and timed) when omitted
        #[arg(long)]
        embeddings: Option<PathBuf>,
        /// Encoder file; pretrained (and timed) when omitted
        #[arg(long)]
        encoder: Option<PathBuf>,
        #[arg(long)]
        head: Option<PathBuf>,
        #[arg(long, default_value_t = 1, value_parser = head_layers)]
        layers: usize,
        #[arg(long, default_value_t = 3)]
        runs: usize,
    },
}

#[derive(Args, Debug)]
struct DataArgs {
    /// Directory of `.java` files, one method each
    #[arg(long)]
    functions: PathBuf,
    /// CSV `id1,id2,label[,clone_type]`
    #[arg(long)]
    pairs: PathBuf,
}

#[derive(Args, Debug)]
struct OptionalData {
    #[arg(long, requires = "pairs", conflicts_with = "synthetic")]
    functions: Option<PathBuf>,
    #[arg(long, requires = "functions")]
    pairs: Option<PathBuf>,
    /// Use the built-in synthetic clone classes instead of files
    #[arg(long)]
    synthetic: bool,
}

#[derive(Args, Debug)]
struct ModelArgs {
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    encoder: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum PipelineKind {
    /// Pretrained encoder, cosine rule
    Contrastive,
    /// Untrained encoder, cosine rule
    Random,
    /// Pretrained and fine-tuned encoder with a classifier head
    Classifier,
    Overlap,
    Weighted,
    /// Untrained two-layer GRU over raw tokens, cosine rule
    Gru,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum TimedDetector {
    Cosine,
    Classifier,
    Overlap,
}

fn head_layers(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(k) if FineTuneHead::widths(k).is_some() => Ok(k),
        _ => Err(format!("`{s}` is not a supported depth (1, 3 or 5)")),
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct UsageError(String);

/// Effective settings after the config file and flags are applied.
#[derive(Debug, Clone)]
struct Settings {
    pretrain: PretrainConfig,
    embed: EmbedConfig,
    threshold: f64,
    jobs: usize,
}

const EMBED_KEYS: [&str; 5] = ["window", "negatives", "embed_epochs", "embed_lr", "min_count"];

impl Settings {
    fn resolve(o: &Overrides) -> Result<Self> {
        let mut s = Settings {
            pretrain: PretrainConfig::default(),
            embed: EmbedConfig::default(),
            threshold: DEFAULT_THRESHOLD,
            jobs: 1,
        };
        if let Some(path) = &o.config {
            let text = fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
            for (k, v) in parse_kv(&text)? {
                s.apply(&k, &v)?;
            }
        }
        let flags: [(&str, Option<String>); 15] = [
            ("seed", o.seed.map(|v| v.to_string())),
            ("jobs", o.jobs.map(|v| v.to_string())),
            ("threshold", o.threshold.map(|v| v.to_string())),
            ("lr", o.lr.map(|v| v.to_string())),
            ("epochs", o.epochs.map(|v| v.to_string())),
            ("batch_size", o.batch_size.map(|v| v.to_string())),
            ("samples_per_class", o.samples_per_class.map(|v| v.to_string())),
            ("temperature", o.temperature.map(|v| v.to_string())),
            ("rmsprop_momentum", o.momentum.map(|v| v.to_string())),
            ("weight_decay", o.weight_decay.map(|v| v.to_string())),
            ("window", o.window.map(|v| v.to_string())),
            ("negatives", o.negatives.map(|v| v.to_string())),
            ("embed_epochs", o.embed_epochs.map(|v| v.to_string())),
            ("embed_lr", o.embed_lr.map(|v| v.to_string())),
            ("min_count", o.min_count.map(|v| v.to_string())),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                s.apply(k, &v)?;
            }
        }
        s.pretrain.validate()?;
        s.embed.validate()?;
        if !(-1.0..=1.0).contains(&s.threshold) {
            return Err(UsageError(format!("threshold must lie in [-1, 1], got {}", s.threshold)).into());
        }
        if s.jobs == 0 {
            return Err(UsageError("jobs must be at least 1".into()).into());
        }
        Ok(s)
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = || UsageError(format!("invalid value `{value}` for `{key}`"));
        match key {
            "seed" => {
                self.pretrain.set(key, value)?;
                self.embed.set(key, value)?;
            }
            "jobs" => self.jobs = value.parse().map_err(|_| bad())?,
            "threshold" => self.threshold = value.parse().map_err(|_| bad())?,
            k if EMBED_KEYS.contains(&k) => self.embed.set(k, value)?,
            _ => self.pretrain.set(key, value)?,
        }
        Ok(())
    }
}

fn output(o: &Overrides) -> Result<Box<dyn Write>> {
    Ok(match &o.out {
        Some(p) => Box::new(BufWriter::new(
            fs::File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn line(out: &mut dyn Write, value: &impl serde::Serialize) -> Result<()> {
    serde_json::to_writer(&mut *out, value)?;
    out.write_all(b"\n")?;
    Ok(())
}

fn with_path<T, E>(r: Result<T, E>, path: &Path) -> Result<T>
where
    E: std::error::Error + Send + Sync + 'static,
{
    r.with_context(|| path.display().to_string())
}

fn load_embeddings(path: &Path) -> Result<EmbeddingTable> {
    with_path(EmbeddingTable::load(path), path)
}

fn load_encoder(path: &Path) -> Result<EncoderParams> {
    with_path(EncoderParams::load(path), path)
}

fn load_head(path: &Path) -> Result<FineTuneHead> {
    with_path(FineTuneHead::load(path), path)
}

fn load_weights(path: &Path) -> Result<CategoryWeights> {
    let text = with_path(fs::read_to_string(path), path)?;
    text.parse::<CategoryWeights>()
        .map_err(|e| anyhow!("{}: {e}", path.display()))
}

fn methods_of(ds: &PairDataset) -> Vec<CategorizedMethod> {
    ds.methods().iter().map(|m| m.categorized.clone()).collect()
}

fn all_pairs(ds: &PairDataset) -> Vec<usize> {
    (0..ds.pairs.len()).collect()
}

fn id_pairs(path: &Path) -> Result<Vec<(String, String)>> {
    let text = with_path(fs::read_to_string(path), path)?;
    Ok(parse_id_pairs(&text)?)
}

fn run(cli: Cli) -> Result<()> {
    let settings = Settings::resolve(&cli.opts)?;
    let mut out = output(&cli.opts)?;
    let out = out.as_mut();
    match cli.command {
        Command::Tokenize { input } => {
            for m in load_sources(&input)?.methods() {
                line(out, &m.categorized)?;
            }
        }
        Command::EmbedTrain { functions, model } => {
            let ds = load_sources(&functions)?;
            let table = train_embeddings(&ds, &settings.embed)?;
            with_path(table.save(&model), &model)?;
            line(out, &json!({"embeddings": model, "vocab": table.vocab().len(), "dim": table.dim()}))?;
        }
        Command::Pretrain { data, embeddings, model, log } => {
            let ds = load_dataset(&data.functions, &data.pairs)?;
            let table = load_embeddings(&embeddings)?;
            let result = pretrain(&ds, &all_pairs(&ds), &table, &settings.pretrain, None)?;
            with_path(result.params.save(&model), &model)?;
            if let Some(log) = log {
                with_path(fs::write(&log, result.log_csv()), &log)?;
            }
            for (epoch, loss) in result.epoch_losses.iter().enumerate() {
                line(out, &json!({"epoch": epoch, "loss": loss}))?;
            }
        }
        Command::Finetune { data, embeddings, encoder, layers, symmetric, model, head } => {
            let ds = load_dataset(&data.functions, &data.pairs)?;
            let table = load_embeddings(&embeddings)?;
            let params = load_encoder(&encoder)?;
            let cfg = FinetuneConfig {
                train: settings.pretrain.clone(),
                symmetric,
                ..FinetuneConfig::default()
            };
            let fresh = FineTuneHead::new(layers, settings.pretrain.seed);
            let result = finetune(params, fresh, &ds, &all_pairs(&ds), &table, &cfg, None)?;
            with_path(result.params.save(&model), &model)?;
            with_path(result.head.save(&head), &head)?;
            for (epoch, loss) in result.epoch_losses.iter().enumerate() {
                line(out, &json!({"epoch": epoch, "loss": loss}))?;
            }
        }
        Command::Encode { input, model } => {
            let ds = load_sources(&input)?;
            let table = load_embeddings(&model.embeddings)?;
            let params = load_encoder(&model.encoder)?;
            for m in ds.methods() {
                let vector = params.encode(&m.categorized, &table);
                line(out, &json!({"source_id": m.id, "vector": vector}))?;
            }
        }
        Command::Detect { functions, pairs, model, head, symmetric } => {
            let ds = load_sources(&functions)?;
            let pairs = id_pairs(&pairs)?;
            let table = load_embeddings(&model.embeddings)?;
            let params = load_encoder(&model.encoder)?;
            let head = head.as_deref().map(load_head).transpose()?;
            let detector = match &head {
                Some(head) => Detector::Classifier { params: &params, head, table: &table, symmetric },
                None => Detector::Cosine { params: &params, table: &table, threshold: settings.threshold },
            };
            for v in detect_corpus(&methods_of(&ds), &pairs, &detector, settings.jobs)? {
                line(out, &v)?;
            }
        }
        Command::Baseline { functions, pairs, weights } => {
            let ds = load_sources(&functions)?;
            let pairs = id_pairs(&pairs)?;
            let weights = weights.as_deref().map(load_weights).transpose()?;
            let detector = match &weights {
                Some(w) => Detector::CategoryOverlap { weights: w, threshold: settings.threshold },
                None => Detector::Overlap { threshold: settings.threshold },
            };
            for v in detect_corpus(&methods_of(&ds), &pairs, &detector, settings.jobs)? {
                line(out, &v)?;
            }
        }
        Command::Explain { input, model, table: show_table } => {
            let ds = load_sources(&input)?;
            let table = load_embeddings(&model.embeddings)?;
            let params = load_encoder(&model.encoder)?;
            for m in ds.methods() {
                let (_, trace) = params.encode_method(&m.categorized, &table);
                let report = ExplainReport::from_trace(m.id.clone(), &trace);
                line(out, &report)?;
                if show_table {
                    eprintln!("{}\n{}", report.source_id, report.to_table());
                }
            }
        }
        Command::Evaluate { data, embeddings, pipeline, layers, weights } => {
            let ds = match (&data.functions, &data.pairs, data.synthetic) {
                (Some(f), Some(p), false) => load_dataset(f, p)?,
                (None, None, true) => synth_clones(
                    &BASE_METHODS,
                    &SynthSpec {
                        seed: settings.pretrain.seed,
                        ..SynthSpec::default()
                    },
                )?,
                _ => return Err(UsageError("give --functions and --pairs, or --synthetic".into()).into()),
            };
            let table = match &embeddings {
                Some(p) => load_embeddings(p)?,
                None => train_embeddings(&ds, &settings.embed)?,
            };
            let weights = weights.as_deref().map(load_weights).transpose()?;
            let cosine = ScoringMode::Cosine { threshold: settings.threshold };
            let encoder = |epochs: Option<usize>, mode: ScoringMode| EncoderPipeline {
                table: &table,
                pretrain: PretrainConfig {
                    epochs: epochs.unwrap_or(settings.pretrain.epochs),
                    ..settings.pretrain.clone()
                },
                mode,
            };
            let pipe: Box<dyn Pipeline + '_> = match pipeline {
                PipelineKind::Contrastive => Box::new(encoder(None, cosine)),
                PipelineKind::Random => Box::new(encoder(Some(0), cosine)),
                PipelineKind::Classifier => {
                    let finetune = FinetuneConfig {
                        train: settings.pretrain.clone(),
                        ..FinetuneConfig::default()
                    };
                    Box::new(encoder(None, ScoringMode::Classifier { head_layers: layers, finetune }))
                }
                PipelineKind::Overlap => Box::new(OverlapPipeline { threshold: settings.threshold, weights: None }),
                PipelineKind::Weighted => {
                    let Some(w) = weights else {
                        return Err(UsageError("--pipeline weighted needs --weights".into()).into());
                    };
                    Box::new(OverlapPipeline { threshold: settings.threshold, weights: Some(w) })
                }
                PipelineKind::Gru => Box::new(GruPipeline {
                    table: &table,
                    seed: settings.pretrain.seed,
                    threshold: settings.threshold,
                }),
            };
            let plan = make_folds(&ds, settings.pretrain.seed)?;
            let report = evaluate(&ds, &plan, pipe.as_ref(), settings.jobs)?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            line(out, &report)?;
        }
        Command::BenchTime { data, detector, embeddings, encoder, head, layers, runs } => {
            let ds = load_dataset(&data.functions, &data.pairs)?;
            let pairs: Vec<(String, String)> = ds.pairs.iter().map(|p| (p.id1.clone(), p.id2.clone())).collect();
            let methods = methods_of(&ds);
            let report = if detector == TimedDetector::Overlap {
                time_detection(&methods, &pairs, &Detector::Overlap { threshold: settings.threshold }, runs, settings.jobs, None)?
            } else {
                let start = Instant::now();
                let mut trained = false;
                let table = match &embeddings {
                    Some(p) => load_embeddings(p)?,
                    None => {
                        trained = true;
                        train_embeddings(&ds, &settings.embed)?
                    }
                };
                let mut params = match &encoder {
                    Some(p) => load_encoder(p)?,
                    None => {
                        trained = true;
                        pretrain(&ds, &all_pairs(&ds), &table, &settings.pretrain, None)?.params
                    }
                };
                let head = match (detector, &head) {
                    (TimedDetector::Classifier, Some(p)) => Some(load_head(p)?),
                    (TimedDetector::Classifier, None) => {
                        trained = true;
                        let cfg = FinetuneConfig {
                            train: settings.pretrain.clone(),
                            ..FinetuneConfig::default()
                        };
                        let fresh = FineTuneHead::new(layers, settings.pretrain.seed);
                        let r = finetune(params, fresh, &ds, &all_pairs(&ds), &table, &cfg, None)?;
                        params = r.params;
                        Some(r.head)
                    }
                    _ => None,
                };
                let training_s = trained.then(|| start.elapsed().as_secs_f64());
                let d = match &head {
                    Some(head) => Detector::Classifier { params: &params, head, table: &table, symmetric: false },
                    None => Detector::Cosine { params: &params, table: &table, threshold: settings.threshold },
                };
                time_detection(&methods, &pairs, &d, runs, settings.jobs, training_s)?
            };
            line(out, &report)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// 1 = usage or configuration, 3 = non-finite numbers, 2 = anything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() || cause.is::<ConfigError>() {
            return 1;
        }
        if let Some(EmbedError::InvalidConfig(_)) = cause.downcast_ref::<EmbedError>() {
            return 1;
        }
        match cause.downcast_ref::<TrainError>() {
            Some(TrainError::NonFinite(_)) => return 3,
            Some(TrainError::Config(_)) => return 1,
            _ => {}
        }
    }
    2
}

/// The error chain, skipping causes already spelled out by their parent.
fn describe(err: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if !msg.contains(&text) {
            if !msg.is_empty() {
                msg.push_str(": ");
            }
            msg.push_str(&text);
        }
    }
    msg
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", describe(&err));
            ExitCode::from(exit_code(&err))
        }
    }
}
