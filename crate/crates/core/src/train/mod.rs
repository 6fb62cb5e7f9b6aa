//! Contrastive pretraining and the supervised multi-label baseline.
//!
//! Both trainers load the train and validation splits into memory, never
//! touch the test split, and write under the output directory:
//! `train_log.jsonl` (one line per step and per validation pass),
//! `best.ckpt` (highest validation micro-F1, earliest epoch on ties) and
//! `last.ckpt`.

mod config;
pub mod data;

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

pub use config::{CropConfig, TrainConfig};
pub use data::{center_crop, load_split, random_crop, random_crop_with, InMemorySplit};

use crate::dataset::{DatasetManifest, Split};
use crate::encoders::{
    save_checkpoint, BaselineModelConfig, CheckpointMeta, ContrastiveModel, ModelConfig, ModelSpec, MultilabelModel,
};
use crate::error::{Error, Result};
use crate::eval::{binarize, micro_prf, score_prepared, truth_matrix, Scorer, DEFAULT_THRESHOLD};
use crate::labels::{render_training_text, FindingLabel, LabelSet};
use crate::loss::{build_target_matrix, class_weights, weighted_bce_loss, LossMode};
use crate::nn::Module;
use crate::optim::{lr_at_step, Adam};

pub const LOG_FILE: &str = "train_log.jsonl";
pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const LAST_CHECKPOINT: &str = "last.ckpt";

/// Summary of a finished run.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub steps: usize,
    pub best_epoch: usize,
    pub best_val_f1: f64,
    /// Validation micro-F1 after each epoch.
    pub val_f1: Vec<f64>,
    /// Mean training loss of each epoch.
    pub epoch_loss: Vec<f64>,
    /// Loss of the first step of each epoch.
    pub first_step_loss: Vec<f64>,
    pub best_checkpoint: PathBuf,
    pub last_checkpoint: PathBuf,
    /// Every record id read from disk during the run.
    pub loaded_record_ids: Vec<String>,
}

/// A model plus the loss it is trained with.
trait Objective: Module<f32> + Scorer {
    fn spec(&self) -> ModelSpec;

    /// Loss on one batch; gradients are accumulated into the parameters.
    fn loss_and_grad(&mut self, signals: &[ArrayView2<f32>], labels: &[LabelSet]) -> Result<f64>;
}

struct Contrastive {
    model: ContrastiveModel<f32>,
    mode: LossMode,
}

impl Module<f32> for Contrastive {
    fn visit(&mut self, prefix: &str, v: &mut dyn crate::nn::Visitor<f32>) {
        self.model.visit(prefix, v);
    }
}

impl Scorer for Contrastive {
    fn signal_config(&self) -> &crate::encoders::SignalEncoderConfig {
        self.model.signal_config()
    }
    fn score_batch(&mut self, signals: &[ArrayView2<f32>]) -> Result<Array2<f64>> {
        self.model.score_batch(signals)
    }
}

impl Objective for Contrastive {
    fn spec(&self) -> ModelSpec {
        ModelSpec::Contrastive(self.model.config.clone())
    }

    fn loss_and_grad(&mut self, signals: &[ArrayView2<f32>], labels: &[LabelSet]) -> Result<f64> {
        let texts = labels.iter().map(|l| render_training_text(*l)).collect::<Result<Vec<_>>>()?;
        let targets = build_target_matrix(labels, self.mode)?;
        Ok(self.model.forward_backward(signals, &texts, &targets)?.loss)
    }
}

struct Baseline {
    model: MultilabelModel<f32>,
    weights: Vec<f64>,
}

impl Module<f32> for Baseline {
    fn visit(&mut self, prefix: &str, v: &mut dyn crate::nn::Visitor<f32>) {
        self.model.visit(prefix, v);
    }
}

impl Scorer for Baseline {
    fn signal_config(&self) -> &crate::encoders::SignalEncoderConfig {
        self.model.signal_config()
    }
    fn score_batch(&mut self, signals: &[ArrayView2<f32>]) -> Result<Array2<f64>> {
        self.model.score_batch(signals)
    }
}

impl Objective for Baseline {
    fn spec(&self) -> ModelSpec {
        ModelSpec::Multilabel(self.model.config.clone())
    }

    fn loss_and_grad(&mut self, signals: &[ArrayView2<f32>], labels: &[LabelSet]) -> Result<f64> {
        let logits = self.model.forward(signals, true)?.mapv(|v| v as f64);
        let bce = weighted_bce_loss(&logits, &truth_matrix(labels), &self.weights)?;
        self.model.backward(&bce.d_logits.mapv(|v| v as f32));
        Ok(bce.loss)
    }
}

struct JsonlLog(BufWriter<fs::File>, PathBuf);

impl JsonlLog {
    fn create(path: PathBuf) -> Result<Self> {
        let f = fs::File::create(&path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
        Ok(Self(BufWriter::new(f), path))
    }

    fn line(&mut self, v: serde_json::Value) -> Result<()> {
        writeln!(self.0, "{v}").map_err(|e| Error::io(format!("writing {}", self.1.display()), e))
    }

    fn finish(mut self) -> Result<()> {
        self.0.flush().map_err(|e| Error::io(format!("writing {}", self.1.display()), e))
    }
}

/// Micro-F1 at threshold 0.5 over `labels` columns.
fn validation_f1<M: Scorer>(
    model: &mut M,
    val: &InMemorySplit,
    labels: &[FindingLabel],
    batch_size: usize,
) -> Result<f64> {
    let scores = score_prepared(model, &val.signals, batch_size)?;
    let cols: Vec<usize> = labels.iter().map(|l| l.id()).collect();
    let s = scores.select(ndarray::Axis(1), &cols);
    let t = truth_matrix(&val.labels).select(ndarray::Axis(1), &cols);
    let pred = binarize(&s, &vec![DEFAULT_THRESHOLD; cols.len()])?;
    Ok(micro_prf(&pred, &t)?.f1)
}

/// Center-cropped copies for validation when training on crops.
fn eval_inputs(split: &InMemorySplit, crop: Option<usize>) -> Result<InMemorySplit> {
    let Some(c) = crop else {
        return Ok(split.clone());
    };
    Ok(InMemorySplit {
        ids: split.ids.clone(),
        labels: split.labels.clone(),
        signals: split
            .signals
            .iter()
            .map(|s| center_crop(s.view(), c))
            .collect::<Result<_>>()?,
    })
}

fn run<M: Objective>(
    model: &mut M,
    manifest: &DatasetManifest,
    config: &TrainConfig,
    out_dir: &Path,
) -> Result<TrainOutcome> {
    config.validate()?;
    let labels = config.eval_label_list()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(format!("creating {}", out_dir.display()), e))?;

    let sig_cfg = model.signal_config().clone();
    let mut loaded = Vec::new();
    let train = load_split(manifest, Split::Train, &sig_cfg, &mut loaded)?;
    let val = load_split(manifest, Split::Val, &sig_cfg, &mut loaded)?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Config("train and val splits must be non-empty".into()));
    }
    let crop = config.crop_len().map(|c| data::prepared_crop_len(c, &sig_cfg));
    let val = eval_inputs(&val, crop)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5851_f42d_4c95_7f2d);
    let mut adam = Adam::new(config.adam);
    let mut log = JsonlLog::create(out_dir.join(LOG_FILE))?;
    let config_echo = serde_json::to_value(config).map_err(|e| Error::json("train config", e))?;
    let best_path = out_dir.join(BEST_CHECKPOINT);

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut step = 0;
    let mut outcome = TrainOutcome {
        steps: 0,
        best_epoch: 0,
        best_val_f1: f64::NEG_INFINITY,
        val_f1: Vec::new(),
        epoch_loss: Vec::new(),
        first_step_loss: Vec::new(),
        best_checkpoint: best_path.clone(),
        last_checkpoint: out_dir.join(LAST_CHECKPOINT),
        loaded_record_ids: Vec::new(),
    };

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(config.batch_size) {
            let signals: Vec<Array2<f32>> = match crop {
                Some(c) => chunk
                    .iter()
                    .map(|&i| random_crop_with(train.signals[i].view(), c, &mut rng))
                    .collect::<Result<_>>()?,
                None => chunk.iter().map(|&i| train.signals[i].clone()).collect(),
            };
            let views: Vec<_> = signals.iter().map(|s| s.view()).collect();
            let batch_labels: Vec<LabelSet> = chunk.iter().map(|&i| train.labels[i]).collect();
            let lr = lr_at_step(step, config.learning_rate, config.warmup_steps);
            let loss = model.loss_and_grad(&views, &batch_labels);
            let loss = match loss {
                Ok(l) if l.is_finite() => l,
                // A zero-norm embedding leaves the loss undefined.
                Ok(_) | Err(Error::NonFinite(_) | Error::ZeroNorm(_)) => {
                    return Err(Error::NonFiniteLoss {
                        step,
                        record_ids: chunk.iter().map(|&i| train.ids[i].clone()).collect(),
                    })
                }
                Err(e) => return Err(e),
            };
            adam.step(model, lr);
            if batches == 0 {
                outcome.first_step_loss.push(loss);
            }
            log.line(json!({"event": "step", "epoch": epoch, "step": step, "lr": lr, "loss": loss}))?;
            total += loss;
            batches += 1;
            step += 1;
        }
        let mean = total / batches as f64;
        outcome.epoch_loss.push(mean);

        let f1 = validation_f1(model, &val, &labels, config.batch_size)?;
        outcome.val_f1.push(f1);
        log.line(json!({"event": "val", "epoch": epoch, "step": step, "train_loss": mean, "val_f1_micro": f1}))?;
        log::info!("epoch {epoch}: train loss {mean:.5}, val micro-F1 {f1:.4}");

        let meta = CheckpointMeta {
            step,
            epoch,
            config: config_echo.clone(),
            val_metrics: json!({"f1_micro": f1}),
            eval_crop_len: config.crop_len(),
        };
        if f1 > outcome.best_val_f1 {
            outcome.best_val_f1 = f1;
            outcome.best_epoch = epoch;
            save_checkpoint(&best_path, &model.spec(), &meta, model)?;
        }
        if epoch == config.epochs {
            save_checkpoint(&outcome.last_checkpoint, &model.spec(), &meta, model)?;
        }
    }
    log.finish()?;
    outcome.steps = step;
    outcome.loaded_record_ids = loaded;
    Ok(outcome)
}

/// Initialization seed, decorrelated from the data-order stream.
fn model_seed(config: &TrainConfig) -> u64 {
    ChaCha8Rng::seed_from_u64(config.seed).random()
}

/// Trains the two-tower model with the sigmoid contrastive loss.
pub fn train_contrastive(manifest: &DatasetManifest, config: &TrainConfig, out_dir: &Path) -> Result<TrainOutcome> {
    config.validate()?;
    let model_config = ModelConfig {
        signal: config.signal_encoder.clone(),
        text: config.text_encoder.clone(),
        embed_dim: config.embed_dim,
    };
    let mut obj = Contrastive {
        model: ContrastiveModel::new(model_config, model_seed(config))?,
        mode: config.loss_mode,
    };
    run(&mut obj, manifest, config, out_dir)
}

/// Trains the signal trunk with a per-finding classifier under
/// class-weighted binary cross-entropy.
pub fn train_baseline_multilabel(
    manifest: &DatasetManifest,
    config: &TrainConfig,
    out_dir: &Path,
) -> Result<TrainOutcome> {
    config.validate()?;
    let train_labels: Vec<LabelSet> = manifest.split(Split::Train).map(|e| e.labels).collect();
    let mut obj = Baseline {
        model: MultilabelModel::new(
            BaselineModelConfig {
                signal: config.signal_encoder.clone(),
            },
            model_seed(config),
        )?,
        weights: class_weights(&train_labels).to_vec(),
    };
    run(&mut obj, manifest, config, out_dir)
}

/// Reads the manifest named in `config`.
pub fn read_manifest(config: &TrainConfig) -> Result<DatasetManifest> {
    DatasetManifest::read_jsonl(&config.manifest)
}
