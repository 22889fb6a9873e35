use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use sanvaad::content::{build_bundle, resolve_language, ContentRequest, ExtractiveSummarizer, NewsStore, PlanningSynthesizer};
use sanvaad::eval::{corrupt_with_dropout, evaluate};
use sanvaad::landmarks::{
    class_histogram, format_histogram, load_dataset_with, save_dataset, write_feature_dump, LabelNormalizer, LABELS,
};
use sanvaad::quantize::load_container;
use sanvaad::signplan::load_dictionary;
use sanvaad::synthetic::{blob_dataset, BlobConfig};
use sanvaad::{
    expand_dataset, extract_features, load_model, quantize_model, save_model, train, AugmentConfig, LabeledSample,
    ModelContainer, NetworkSpec, Precision, TrainConfig,
};
use sanvaad_service::ServiceConfig;

#[derive(Parser)]
#[command(name = "sanvaad", version, about = "Sign classification, sign plans and spoken news summaries")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute 141-D features for a landmark dataset.
    Extract {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        labels: LabelArgs,
    },
    /// Expand a dataset threefold with noise and landmark dropout.
    Augment {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.02)]
        sigma: f64,
        #[arg(long, default_value_t = 0.15)]
        dropout_prob: f64,
        #[command(flatten)]
        labels: LabelArgs,
    },
    /// Train the residual MLP and write an f32 container.
    Train(TrainArgs),
    /// Evaluate a model on a labelled dataset.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        /// Classification report as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Confusion matrix as CSV.
        #[arg(long)]
        confusion: Option<PathBuf>,
        /// Apply landmark dropout to every sample before predicting.
        #[arg(long)]
        corrupt: bool,
    },
    /// Convert an f32 container to int8 weights.
    Quantize {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the sign plan for a sentence.
    Translate {
        text: String,
        #[arg(long, default_value = "data/dictionary.json")]
        dict: PathBuf,
        /// Report characters that cannot be spelled.
        #[arg(long)]
        strict: bool,
    },
    /// Print summaries and speech plans for a news topic.
    Content {
        #[arg(long, default_value = "english")]
        lang: String,
        #[arg(long)]
        topic: String,
        #[arg(long, default_value = "data")]
        store_dir: PathBuf,
    },
    /// Run the HTTP and stream service.
    Serve {
        /// TOML config file; SANVAAD_MODEL and SANVAAD_PORT override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        port: Option<u16>,
        #[arg(long)]
        host: Option<String>,
    },
    /// Write a synthetic blob dataset (one Gaussian cluster per class).
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        per_class: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct LabelArgs {
    /// Extra label spelling, e.g. `--alias letter_q=Q`.
    #[arg(long = "alias", value_parser = parse_alias)]
    aliases: Vec<(String, String)>,
}

impl LabelArgs {
    fn normalizer(&self) -> Result<LabelNormalizer> {
        Ok(LabelNormalizer::with_aliases(
            self.aliases.iter().map(|(a, b)| (a.as_str(), b.as_str())),
        )?)
    }
}

fn parse_alias(s: &str) -> std::result::Result<(String, String), String> {
    s.split_once('=')
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .ok_or_else(|| format!("expected FROM=TO, got {s:?}"))
}

#[derive(Args)]
struct DataArgs {
    /// JSONL landmark dataset.
    #[arg(long, required_unless_present = "synthetic")]
    data: Option<PathBuf>,
    /// Use a synthetic blob dataset with this many samples per class.
    #[arg(long, conflicts_with = "data")]
    synthetic: Option<usize>,
    #[command(flatten)]
    labels: LabelArgs,
}

impl DataArgs {
    fn load(&self, seed: u64) -> Result<Vec<LabeledSample>> {
        match (&self.data, self.synthetic) {
            (Some(path), _) => load_dataset_with(path, &self.labels.normalizer()?)
                .with_context(|| format!("loading {}", path.display())),
            (None, Some(per_class)) => Ok(blob_dataset(&BlobConfig {
                samples_per_class: per_class,
                seed,
                ..Default::default()
            })),
            (None, None) => bail!("either --data or --synthetic is required"),
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 40)]
    epochs: usize,
    #[arg(long, default_value_t = 64)]
    batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Train on the unexpanded split.
    #[arg(long)]
    no_augment: bool,
    /// Drop the identity skip connections.
    #[arg(long)]
    no_residual: bool,
    /// Apply landmark dropout to 15% of each batch.
    #[arg(long)]
    on_the_fly: bool,
    #[arg(long, default_value_t = 512)]
    width: usize,
    /// Per-epoch metrics as CSV.
    #[arg(long)]
    log: Option<PathBuf>,
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match Cli::parse().command {
        Command::Extract { input, out, labels } => extract(&input, &out, &labels),
        Command::Augment { input, out, seed, sigma, dropout_prob, labels } => {
            let samples = load_dataset_with(&input, &labels.normalizer()?)
                .with_context(|| format!("loading {}", input.display()))?;
            let cfg = AugmentConfig { noise_sigma: sigma, dropout_apply_prob: dropout_prob, seed, ..Default::default() };
            let expanded = expand_dataset(&samples, &cfg)?;
            save_dataset(&expanded, &out)?;
            println!("{} -> {} samples written to {}", samples.len(), expanded.len(), out.display());
            Ok(())
        }
        Command::Train(args) => train_cmd(&args),
        Command::Eval { model, data, report, confusion, corrupt } => {
            let m = load_model(&model).with_context(|| format!("loading {}", model.display()))?;
            let mut samples = data.load(m.metadata.seed)?;
            if corrupt {
                samples = corrupt_with_dropout(&samples, &AugmentConfig::default(), 0);
            }
            let (cm, r) = evaluate(&m, &samples)?;
            print!("{}", r.to_table());
            for (t, p, n) in cm.top_confusions(5) {
                println!("confused {} -> {}: {n}", LABELS[t], LABELS[p]);
            }
            if let Some(path) = report {
                std::fs::write(&path, serde_json::to_string_pretty(&r)?)
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            if let Some(path) = confusion {
                std::fs::write(&path, cm.to_csv(&LABELS)).with_context(|| format!("writing {}", path.display()))?;
            }
            Ok(())
        }
        Command::Quantize { input, out } => {
            let container = load_container(&input).with_context(|| format!("loading {}", input.display()))?;
            let model = container.to_model()?;
            let before = ModelContainer::from_model(&model, Precision::F32).byte_size();
            let q = quantize_model(&model);
            save_model(&q, &out)?;
            let after = q.byte_size();
            println!(
                "{before} -> {after} bytes ({:.1}%) written to {}",
                100.0 * after as f64 / before as f64,
                out.display()
            );
            Ok(())
        }
        Command::Translate { text, dict, strict } => {
            let d = load_dictionary(&dict).with_context(|| format!("loading {}", dict.display()))?.strict(strict);
            println!("{}", serde_json::to_string_pretty(&d.translate(&text))?);
            Ok(())
        }
        Command::Content { lang, topic, store_dir } => {
            let store = NewsStore::load_dir(&store_dir)?;
            let request = ContentRequest { language: resolve_language(&lang), topic };
            let bundle = build_bundle(&store, &request, &ExtractiveSummarizer, &PlanningSynthesizer);
            println!("{}", serde_json::to_string_pretty(&bundle)?);
            Ok(())
        }
        Command::Serve { config, model, port, host } => {
            let mut cfg = match &config {
                Some(path) => ServiceConfig::load(path)?,
                None => ServiceConfig::default(),
            };
            cfg.apply_env()?;
            if let Some(m) = model {
                cfg.model = m;
            }
            if let Some(p) = port {
                cfg.port = p;
            }
            if let Some(h) = host {
                cfg.host = h;
            }
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(sanvaad_service::serve(cfg))?;
            Ok(())
        }
        Command::Synth { out, per_class, seed } => {
            let data = blob_dataset(&BlobConfig { samples_per_class: per_class, seed, ..Default::default() });
            save_dataset(&data, &out)?;
            println!("{} samples written to {}", data.len(), out.display());
            Ok(())
        }
    }
}

fn extract(input: &Path, out: &Path, labels: &LabelArgs) -> Result<()> {
    let samples = load_dataset_with(input, &labels.normalizer()?)
        .with_context(|| format!("loading {}", input.display()))?;
    let mut rows = Vec::with_capacity(samples.len());
    let mut skipped = 0;
    for s in &samples {
        match extract_features(&s.frame) {
            Ok(f) => rows.push((f, s.label)),
            Err(_) => skipped += 1,
        }
    }
    write_feature_dump(&rows, out)?;
    print!("{}", format_histogram(&class_histogram(&samples)));
    println!("{} feature rows written to {} ({skipped} frames without hands skipped)", rows.len(), out.display());
    Ok(())
}

fn train_cmd(args: &TrainArgs) -> Result<()> {
    let data = args.data.load(args.seed)?;
    let cfg = TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch,
        learning_rate: args.lr,
        seed: args.seed,
        augment: !args.no_augment,
        on_the_fly_dropout: args.on_the_fly,
        network: NetworkSpec {
            width: args.width,
            compression_width: (args.width / 2).max(1),
            residual: !args.no_residual,
            ..Default::default()
        },
        ..Default::default()
    };
    let aug = AugmentConfig { seed: args.seed, ..Default::default() };
    tracing::info!(samples = data.len(), epochs = cfg.epochs, "training");
    let (model, log) = train(&data, &cfg, &aug)?;
    for r in &log.records {
        println!(
            "epoch {:>3}  train loss {:.4} acc {:.4}  val loss {:.4} acc {:.4}",
            r.epoch, r.train_loss, r.train_acc, r.val_loss, r.val_acc
        );
    }
    if let Some(path) = &args.log {
        log.write_csv(path)?;
    }
    save_model(&ModelContainer::from_model(&model, Precision::F32), &args.out)?;
    println!("model written to {}", args.out.display());
    Ok(())
}
