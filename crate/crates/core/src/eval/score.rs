use ndarray::{concatenate, Array2, ArrayView2, Axis};

use crate::encoders::{ContrastiveModel, LoadedModel, MultilabelModel, SignalEncoderConfig};
use crate::error::{Error, Result};

/// Anything that maps prepared signals to per-finding probabilities.
pub trait Scorer {
    fn signal_config(&self) -> &SignalEncoderConfig;

    /// Probabilities `[n, 26]` for one batch of prepared signals.
    fn score_batch(&mut self, signals: &[ArrayView2<f32>]) -> Result<Array2<f64>>;
}

impl Scorer for ContrastiveModel<f32> {
    fn signal_config(&self) -> &SignalEncoderConfig {
        &self.config.signal
    }

    fn score_batch(&mut self, signals: &[ArrayView2<f32>]) -> Result<Array2<f64>> {
        let prompts = self.prompt_embeddings()?;
        self.score(signals, &prompts)
    }
}

impl Scorer for MultilabelModel<f32> {
    fn signal_config(&self) -> &SignalEncoderConfig {
        &self.config.signal
    }

    fn score_batch(&mut self, signals: &[ArrayView2<f32>]) -> Result<Array2<f64>> {
        Ok(self
            .forward(signals, false)?
            .mapv(|z| 1.0 / (1.0 + (-(z as f64)).exp())))
    }
}

impl Scorer for LoadedModel {
    fn signal_config(&self) -> &SignalEncoderConfig {
        LoadedModel::signal_config(self)
    }

    fn score_batch(&mut self, signals: &[ArrayView2<f32>]) -> Result<Array2<f64>> {
        match self {
            LoadedModel::Contrastive(m) => m.score_batch(signals),
            LoadedModel::Multilabel(m) => m.score_batch(signals),
        }
    }
}

/// Scores prepared signals in batches of `batch_size`; every score is
/// finite and in `[0, 1]`.
pub fn score_prepared<M: Scorer + ?Sized>(
    model: &mut M,
    signals: &[Array2<f32>],
    batch_size: usize,
) -> Result<Array2<f64>> {
    let mut parts = Vec::new();
    for chunk in signals.chunks(batch_size.max(1)) {
        let views: Vec<_> = chunk.iter().map(|s| s.view()).collect();
        let s = model.score_batch(&views)?;
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("model scores".into()));
        }
        parts.push(s);
    }
    if parts.is_empty() {
        return Ok(Array2::zeros((0, crate::labels::NUM_FINDINGS)));
    }
    let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
    Ok(concatenate(Axis(0), &views).expect("equal widths"))
}
