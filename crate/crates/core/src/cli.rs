//! Command-line entry points. Every experiment is a config file plus flags.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::dataset::{DatasetManifest, Split};
use crate::encoders::{load_checkpoint, FrozenEmbeddings, LoadedModel};
use crate::error::{Error, Result};
use crate::eval::{self, all_labels, metrics_report, score_split, tune_on, write_report, ScoreOptions};
use crate::labels::{render_label_prompt, FindingLabel, NUM_FINDINGS};
use crate::split::{split_dataset, SplitRatios};
use crate::synth::{generate_corpus, label_counts, CorpusConfig, InstitutionDrift, MANIFEST_FILE};
use crate::train::{self, TrainConfig};

#[derive(Debug, Parser)]
#[command(name = "ecg-siglip", version, about = "Sigmoid contrastive pretraining for 12-lead ECGs")]
pub struct Cli {
    /// Worker threads for parallel sections (corpus generation, loading).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Single-threaded, bit-reproducible execution.
    #[arg(long, global = true)]
    pub deterministic: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus from a corpus config.
    GenData {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Institution drift applied to every record.
        #[arg(long)]
        drift_config: Option<PathBuf>,
    },
    /// Assign patient-disjoint train/val/test splits to a manifest.
    Split {
        #[arg(long)]
        manifest: PathBuf,
        /// Output manifest path.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Train, val and test fractions.
        #[arg(long, value_delimiter = ',', default_values_t = [0.7, 0.15, 0.15])]
        ratios: Vec<f64>,
    },
    /// Contrastive pretraining.
    Train(TrainArgs),
    /// Supervised multi-label baseline.
    TrainBaseline(TrainArgs),
    /// Metrics report and ROC curves for one split.
    Eval(EvalArgs),
    /// ROC curves only.
    Roc(EvalArgs),
    /// Write the text tower's prompt embeddings as `{text, vector}` lines.
    ExportTextEmbeddings {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: Split,
    #[arg(long)]
    pub out: PathBuf,
    /// Evaluate on a drifted copy of the split.
    #[arg(long)]
    pub drift_config: Option<PathBuf>,
    /// Seed of the drift draws.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Comma-separated finding names; all 26 by default.
    #[arg(long, value_delimiter = ',')]
    pub labels: Option<Vec<String>>,
    /// Tune per-finding thresholds on the val split instead of using 0.5.
    #[arg(long)]
    pub tune_thresholds: bool,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(what, e))
}

fn configure_threads(cli: &Cli) -> Result<()> {
    let threads = if cli.deterministic { Some(1) } else { cli.threads };
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    configure_threads(&cli)?;
    match cli.command {
        Command::GenData {
            config,
            out,
            seed,
            drift_config,
        } => {
            let mut cfg: CorpusConfig = read_json(&config, "corpus config")?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(p) = drift_config {
                cfg.drift = Some(read_json(&p, "drift config")?);
            }
            let manifest = generate_corpus(&cfg, &out)?;
            println!("wrote {} records to {}", manifest.len(), out.join(MANIFEST_FILE).display());
            for (l, n) in FindingLabel::all().zip(label_counts(&manifest)) {
                if n > 0 {
                    println!("{n:>8}  {}", l.name());
                }
            }
            Ok(())
        }
        Command::Split {
            manifest,
            out,
            seed,
            ratios,
        } => {
            let m = DatasetManifest::read_jsonl(&manifest)?;
            if ratios.len() != 3 {
                return Err(Error::Config(format!("--ratios needs 3 values, got {}", ratios.len())));
            }
            let r = SplitRatios::new(ratios[0], ratios[1], ratios[2])?;
            let dir = match out.parent() {
                Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
                _ => PathBuf::from("."),
            };
            fs::create_dir_all(&dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
            let split = split_dataset(&m, r, seed)?.rebased(&dir)?;
            split.write_jsonl(&out)?;
            for s in Split::ALL {
                println!("{s}: {} records", split.split(s).count());
            }
            Ok(())
        }
        Command::Train(args) => run_train(args, false),
        Command::TrainBaseline(args) => run_train(args, true),
        Command::Eval(args) => run_eval(args, false),
        Command::Roc(args) => run_eval(args, true),
        Command::ExportTextEmbeddings { checkpoint, out } => {
            let (model, _) = load_checkpoint(&checkpoint)?;
            let LoadedModel::Contrastive(mut model) = model else {
                return Err(Error::Config("checkpoint has no text tower".into()));
            };
            let z = model.prompt_embeddings()?;
            let entries = FindingLabel::all()
                .zip(z.rows())
                .map(|(l, row)| (render_label_prompt(l), row.to_vec()));
            FrozenEmbeddings::new(entries)?.write_jsonl(&out)
        }
    }
}

fn run_train(args: TrainArgs, baseline: bool) -> Result<()> {
    let base = if baseline {
        TrainConfig::baseline()
    } else {
        TrainConfig::default()
    };
    let mut cfg = TrainConfig::read(&args.config, &base)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if !cfg.manifest.is_file() {
        return Err(Error::Config(format!("manifest {} not found", cfg.manifest.display())));
    }
    let manifest = train::read_manifest(&cfg)?;
    let outcome = if baseline {
        train::train_baseline_multilabel(&manifest, &cfg, &args.out)?
    } else {
        train::train_contrastive(&manifest, &cfg, &args.out)?
    };
    println!(
        "{} steps; best val micro-F1 {:.4} at epoch {} ({})",
        outcome.steps,
        outcome.best_val_f1,
        outcome.best_epoch,
        outcome.best_checkpoint.display()
    );
    Ok(())
}

fn run_eval(args: EvalArgs, roc_only: bool) -> Result<()> {
    let (mut model, meta) = load_checkpoint(&args.checkpoint)?;
    let manifest = DatasetManifest::read_jsonl(&args.manifest)?;
    let labels = match &args.labels {
        Some(names) => names.iter().map(|n| FindingLabel::from_name(n)).collect::<Result<Vec<_>>>()?,
        None => all_labels(),
    };
    let drift = match &args.drift_config {
        Some(p) => Some((read_json::<InstitutionDrift>(p, "drift config")?, args.seed)),
        None => None,
    };
    let clean = ScoreOptions {
        crop_len: meta.eval_crop_len,
        ..ScoreOptions::default()
    };
    let thresholds = if args.tune_thresholds {
        let val = score_split(&mut model, &manifest, Split::Val, &clean)?;
        tune_on(&val, &labels)?
    } else {
        vec![eval::DEFAULT_THRESHOLD; NUM_FINDINGS]
    };
    let scores = score_split(&mut model, &manifest, args.split, &ScoreOptions { drift, ..clean })?;
    let (report, rocs) = metrics_report(&scores, args.split, &thresholds, &labels)?;
    if roc_only {
        return eval::write_rocs(&args.out.join("roc"), &labels, &rocs);
    }
    write_report(&args.out, &report, &rocs)?;
    println!(
        "{} ({} records): micro-F1 {:.4}, precision {:.4}, recall {:.4}, hamming {:.4}",
        report.split, report.n_records, report.f1_micro, report.precision_micro, report.recall_micro, report.hamming_loss
    );
    Ok(())
}
