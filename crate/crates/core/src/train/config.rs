use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::encoders::{SignalEncoderConfig, TextEncoderConfig, EMBED_DIMS};
use crate::error::{Error, Result};
use crate::labels::FindingLabel;
use crate::loss::LossMode;
use crate::nn::ResNetConfig;
use crate::optim::AdamConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CropConfig {
    /// Window length in raw samples.
    #[serde(default = "default_crop_len")]
    pub train_crop_len: usize,
}

fn default_crop_len() -> usize {
    4096
}

impl Default for CropConfig {
    fn default() -> Self {
        Self {
            train_crop_len: default_crop_len(),
        }
    }
}

/// One training run. Omitted fields take the contrastive defaults; the
/// baseline trainer starts from [`TrainConfig::baseline`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    /// Manifest with split assignments.
    pub manifest: PathBuf,
    pub learning_rate: f64,
    pub warmup_steps: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub embed_dim: usize,
    pub loss_mode: LossMode,
    /// `None` trains and evaluates on full-length signals.
    pub crop: Option<CropConfig>,
    pub seed: u64,
    pub adam: AdamConfig,
    pub signal_encoder: SignalEncoderConfig,
    pub text_encoder: TextEncoderConfig,
    /// Findings used for validation metrics; all 26 when `None`.
    pub eval_labels: Option<Vec<String>>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            manifest: PathBuf::new(),
            learning_rate: 1e-3,
            warmup_steps: 5000,
            epochs: 250,
            batch_size: 64,
            embed_dim: 256,
            loss_mode: LossMode::Standard,
            crop: Some(CropConfig::default()),
            seed: 0,
            adam: AdamConfig::default(),
            signal_encoder: SignalEncoderConfig::default(),
            text_encoder: TextEncoderConfig::default(),
            eval_labels: None,
        }
    }
}

impl TrainConfig {
    pub fn baseline() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 32,
            epochs: 600,
            ..Self::default()
        }
    }

    /// Parses `json`, filling omitted fields from `base`. Unknown fields
    /// are rejected.
    pub fn from_json_over(json: &str, base: &TrainConfig) -> Result<Self> {
        let user: serde_json::Value = serde_json::from_str(json).map_err(|e| Error::json("train config", e))?;
        let serde_json::Value::Object(user) = user else {
            return Err(Error::Config("train config must be a JSON object".into()));
        };
        let mut merged = serde_json::to_value(base).map_err(|e| Error::json("train config", e))?;
        let obj = merged.as_object_mut().expect("struct serializes to an object");
        for (k, v) in user {
            obj.insert(k, v);
        }
        let cfg: Self = serde_json::from_value(merged).map_err(|e| Error::json("train config", e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: &Path, base: &TrainConfig) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        let mut cfg = Self::from_json_over(&text, base)?;
        if cfg.manifest.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.manifest = dir.join(&cfg.manifest);
            }
        }
        Ok(cfg)
    }

    pub fn eval_label_list(&self) -> Result<Vec<FindingLabel>> {
        match &self.eval_labels {
            None => Ok(FindingLabel::all().collect()),
            Some(names) if names.is_empty() => Err(Error::Config("eval_labels is empty".into())),
            Some(names) => names.iter().map(|n| FindingLabel::from_name(n)).collect(),
        }
    }

    pub fn crop_len(&self) -> Option<usize> {
        self.crop.map(|c| c.train_crop_len)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return bad(format!("learning_rate {} must be finite and >= 0", self.learning_rate));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be >= 1".into());
        }
        if !EMBED_DIMS.contains(&self.embed_dim) {
            return bad(format!("embed_dim {} not in {EMBED_DIMS:?}", self.embed_dim));
        }
        let a = &self.adam;
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || !(a.eps > 0.0) || a.weight_decay < 0.0 {
            return bad("adam betas must lie in [0, 1), eps > 0, weight_decay >= 0".into());
        }
        self.signal_encoder.validate()?;
        if let Some(c) = self.crop {
            if c.train_crop_len == 0 || c.train_crop_len > crate::signal::NUM_SAMPLES {
                return bad(format!("train_crop_len {} outside [1, {}]", c.train_crop_len, crate::signal::NUM_SAMPLES));
            }
        }
        let input_len = self.crop_len().unwrap_or(crate::signal::NUM_SAMPLES) / self.signal_encoder.input_decimation;
        if input_len < ResNetConfig::MIN_LEN {
            return bad(format!(
                "encoder input of {input_len} samples is below the minimum {}",
                ResNetConfig::MIN_LEN
            ));
        }
        self.eval_label_list()?;
        Ok(())
    }
}
