//! Cropping and in-memory split loading.

use ndarray::{s, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataset::{DatasetManifest, Split};
use crate::encoders::SignalEncoderConfig;
use crate::error::{Error, Result};
use crate::labels::LabelSet;

fn check_crop(len: usize, crop_len: usize) -> Result<()> {
    if crop_len == 0 || crop_len > len {
        return Err(Error::Shape(format!(
            "crop length {crop_len} does not fit a signal of {len} samples"
        )));
    }
    Ok(())
}

/// Window of `crop_len` samples starting uniformly in `[0, len - crop_len]`.
pub fn random_crop_with<R: Rng + ?Sized>(
    signal: ArrayView2<f32>,
    crop_len: usize,
    rng: &mut R,
) -> Result<Array2<f32>> {
    let len = signal.dim().1;
    check_crop(len, crop_len)?;
    let start = rng.random_range(0..=len - crop_len);
    Ok(signal.slice(s![.., start..start + crop_len]).to_owned())
}

pub fn random_crop(signal: ArrayView2<f32>, crop_len: usize, seed: u64) -> Result<Array2<f32>> {
    random_crop_with(signal, crop_len, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Window of `crop_len` samples starting at `(len - crop_len) / 2`.
pub fn center_crop(signal: ArrayView2<f32>, crop_len: usize) -> Result<Array2<f32>> {
    let len = signal.dim().1;
    check_crop(len, crop_len)?;
    let start = (len - crop_len) / 2;
    Ok(signal.slice(s![.., start..start + crop_len]).to_owned())
}

/// Crop length in the encoder's input domain for a raw-sample crop length.
pub fn prepared_crop_len(crop_len: usize, config: &SignalEncoderConfig) -> usize {
    crop_len / config.input_decimation.max(1)
}

/// Network input for evaluation: decimated, then center-cropped when the
/// model was trained on crops.
pub fn prepare_for_eval(
    signal: ArrayView2<f32>,
    config: &SignalEncoderConfig,
    crop_len: Option<usize>,
) -> Result<Array2<f32>> {
    let prepared = config.prepare(signal);
    match crop_len {
        Some(c) => center_crop(prepared.view(), prepared_crop_len(c, config)),
        None => Ok(prepared),
    }
}

/// Prepared signals of one split, in manifest order.
#[derive(Clone, Debug, Default)]
pub struct InMemorySplit {
    pub ids: Vec<String>,
    pub labels: Vec<LabelSet>,
    pub signals: Vec<Array2<f32>>,
}

impl InMemorySplit {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Loads and prepares every record of `split`. Each record id read from
/// disk is appended to `loaded`.
pub fn load_split(
    manifest: &DatasetManifest,
    split: Split,
    config: &SignalEncoderConfig,
    loaded: &mut Vec<String>,
) -> Result<InMemorySplit> {
    let entries: Vec<_> = manifest.split(split).collect();
    let signals = entries
        .par_iter()
        .map(|e| Ok(config.prepare(manifest.load_record(e)?.signal.view())))
        .collect::<Result<Vec<_>>>()?;
    loaded.extend(entries.iter().map(|e| e.record_id.clone()));
    Ok(InMemorySplit {
        ids: entries.iter().map(|e| e.record_id.clone()).collect(),
        labels: entries.iter().map(|e| e.labels).collect(),
        signals,
    })
}
