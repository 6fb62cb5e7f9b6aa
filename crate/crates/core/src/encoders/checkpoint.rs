//! Checkpoint file: 8-byte magic, little-endian u64 header length, JSON
//! header, then every tensor as little-endian f32 in header order.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::ArrayViewMutD;
use serde::{Deserialize, Serialize};

use super::signal::SignalEncoderConfig;
use super::model::{BaselineModelConfig, ContrastiveModel, ModelConfig, MultilabelModel};
use crate::error::{Error, Result};
use crate::nn::{Module, Visitor};

const MAGIC: &[u8; 8] = b"ECGSLP\x00\x01";
const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "config", rename_all = "snake_case")]
pub enum ModelSpec {
    Contrastive(ModelConfig),
    Multilabel(BaselineModelConfig),
}

/// Training provenance stored alongside the weights.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub step: usize,
    pub epoch: usize,
    /// Echo of the run configuration that produced the weights.
    #[serde(default)]
    pub config: serde_json::Value,
    #[serde(default)]
    pub val_metrics: serde_json::Value,
    /// Raw-sample window the model was trained on; evaluation center-crops
    /// to it. `None` means full-length training.
    #[serde(default)]
    pub eval_crop_len: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct TensorInfo {
    name: String,
    shape: Vec<usize>,
    trainable: bool,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    model: ModelSpec,
    meta: CheckpointMeta,
    tensors: Vec<TensorInfo>,
}

#[derive(Default)]
struct Collect {
    infos: Vec<TensorInfo>,
    data: Vec<u8>,
}

impl Collect {
    fn push(&mut self, name: &str, value: ArrayViewMutD<f32>, trainable: bool) {
        self.infos.push(TensorInfo {
            name: name.to_string(),
            shape: value.shape().to_vec(),
            trainable,
        });
        for v in value.iter() {
            self.data.extend_from_slice(&v.to_le_bytes());
        }
    }
}

impl Visitor<f32> for Collect {
    fn param(&mut self, name: &str, value: ArrayViewMutD<f32>, _: ArrayViewMutD<f32>) {
        self.push(name, value, true);
    }
    fn buffer(&mut self, name: &str, value: ArrayViewMutD<f32>) {
        self.push(name, value, false);
    }
}

/// Writes through a sibling temporary file so readers never see a partial
/// checkpoint.
pub fn save_checkpoint<M: Module<f32>>(
    path: &Path,
    spec: &ModelSpec,
    meta: &CheckpointMeta,
    model: &mut M,
) -> Result<()> {
    let mut c = Collect::default();
    model.visit("", &mut c);
    let header = Header {
        format_version: FORMAT_VERSION,
        model: spec.clone(),
        meta: meta.clone(),
        tensors: c.infos,
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::json("checkpoint header", e))?;
    let mut bytes = Vec::with_capacity(16 + json.len() + c.data.len());
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&(json.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&json);
    bytes.extend_from_slice(&c.data);

    let ctx = || format!("writing checkpoint {}", path.display());
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(ctx(), e))?;
    f.write_all(&bytes).map_err(|e| Error::io(ctx(), e))?;
    f.sync_all().map_err(|e| Error::io(ctx(), e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(ctx(), e))
}

struct Assign {
    tensors: HashMap<String, (Vec<usize>, Vec<f32>)>,
    error: Option<Error>,
}

impl Assign {
    fn take(&mut self, name: &str, mut value: ArrayViewMutD<f32>) {
        if self.error.is_some() {
            return;
        }
        match self.tensors.remove(name) {
            None => self.error = Some(Error::Checkpoint(format!("missing tensor {name}"))),
            Some((shape, _)) if shape != value.shape() => {
                self.error = Some(Error::Checkpoint(format!(
                    "tensor {name} has shape {shape:?}, model expects {:?}",
                    value.shape()
                )))
            }
            Some((_, data)) => value.iter_mut().zip(data).for_each(|(v, d)| *v = d),
        }
    }
}

impl Visitor<f32> for Assign {
    fn param(&mut self, name: &str, value: ArrayViewMutD<f32>, _: ArrayViewMutD<f32>) {
        self.take(name, value);
    }
    fn buffer(&mut self, name: &str, value: ArrayViewMutD<f32>) {
        self.take(name, value);
    }
}

#[derive(Clone, Debug)]
pub enum LoadedModel {
    Contrastive(ContrastiveModel<f32>),
    Multilabel(MultilabelModel<f32>),
}

impl LoadedModel {
    pub fn signal_config(&self) -> &SignalEncoderConfig {
        match self {
            LoadedModel::Contrastive(m) => &m.config.signal,
            LoadedModel::Multilabel(m) => &m.config.signal,
        }
    }
}

pub fn load_checkpoint(path: &Path) -> Result<(LoadedModel, CheckpointMeta)> {
    let bytes = fs::read(path).map_err(|e| Error::io(format!("reading checkpoint {}", path.display()), e))?;
    let bad = |why: &str| Error::Checkpoint(format!("{}: {why}", path.display()));
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = bytes.get(16..16 + hlen).ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(body).map_err(|e| Error::json("checkpoint header", e))?;
    if header.format_version != FORMAT_VERSION {
        return Err(bad(&format!("unsupported format version {}", header.format_version)));
    }

    let mut offset = 16 + hlen;
    let mut tensors = HashMap::new();
    for t in &header.tensors {
        let n: usize = t.shape.iter().product();
        let raw = bytes
            .get(offset..offset + 4 * n)
            .ok_or_else(|| bad(&format!("truncated data for {}", t.name)))?;
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("checkpoint tensor {}", t.name)));
        }
        tensors.insert(t.name.clone(), (t.shape.clone(), data));
        offset += 4 * n;
    }
    if offset != bytes.len() {
        return Err(bad("trailing bytes after tensor data"));
    }

    let mut assign = Assign {
        tensors,
        error: None,
    };
    let model = match &header.model {
        ModelSpec::Contrastive(cfg) => {
            let mut m = ContrastiveModel::new(cfg.clone(), 0)?;
            m.visit("", &mut assign);
            LoadedModel::Contrastive(m)
        }
        ModelSpec::Multilabel(cfg) => {
            let mut m = MultilabelModel::new(cfg.clone(), 0)?;
            m.visit("", &mut assign);
            LoadedModel::Multilabel(m)
        }
    };
    if let Some(e) = assign.error {
        return Err(e);
    }
    if let Some(name) = assign.tensors.keys().next() {
        return Err(bad(&format!("unexpected tensor {name}")));
    }
    Ok((model, header.meta))
}
