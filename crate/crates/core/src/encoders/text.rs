use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ndarray::{Array2, Ix2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{parse_training_text, NUM_FINDINGS};
use crate::nn::{join, normal_array, Linear, Module, Param, Scalar, Visitor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TextEncoderConfig {
    /// Trainable per-finding table; a text is the mean of its findings' rows.
    Toy { table_dim: usize },
    /// Fixed vectors read from a JSON-lines file of `{text, vector}`.
    Frozen { path: PathBuf },
}

impl Default for TextEncoderConfig {
    fn default() -> Self {
        Self::Toy { table_dim: 64 }
    }
}

/// Precomputed text vectors keyed by exact text.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FrozenEmbeddings {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct FrozenLine {
    text: String,
    vector: Vec<f64>,
}

impl FrozenEmbeddings {
    pub fn new(entries: impl IntoIterator<Item = (String, Vec<f64>)>) -> Result<Self> {
        let mut out = Self::default();
        for (text, v) in entries {
            out.insert(text, v)?;
        }
        Ok(out)
    }

    fn insert(&mut self, text: String, vector: Vec<f64>) -> Result<()> {
        if vector.is_empty() {
            return Err(Error::Shape(format!("empty vector for text {text:?}")));
        }
        if self.vectors.is_empty() {
            self.dim = vector.len();
        } else if vector.len() != self.dim {
            return Err(Error::Shape(format!(
                "vector for {text:?} has dim {}, expected {}",
                vector.len(),
                self.dim
            )));
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("text embedding for {text:?}")));
        }
        self.vectors.insert(text, vector);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, text: &str) -> Result<&[f64]> {
        self.vectors
            .get(text)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownText(text.to_string()))
    }

    pub fn read_jsonl(path: &Path) -> Result<Self> {
        let ctx = || format!("reading text embeddings {}", path.display());
        let file = fs::File::open(path).map_err(|e| Error::io(ctx(), e))?;
        let mut out = Self::default();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(ctx(), e))?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: FrozenLine = serde_json::from_str(&line)
                .map_err(|e| Error::json(format!("{} line {}", path.display(), i + 1), e))?;
            out.insert(parsed.text, parsed.vector)?;
        }
        if out.is_empty() {
            return Err(Error::Config(format!("{} holds no embeddings", path.display())));
        }
        Ok(out)
    }

    /// Writes entries sorted by text, so output is deterministic.
    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut keys: Vec<&String> = self.vectors.keys().collect();
        keys.sort();
        let mut buf = Vec::new();
        for k in keys {
            let line = FrozenLine {
                text: k.clone(),
                vector: self.vectors[k].clone(),
            };
            serde_json::to_writer(&mut buf, &line).map_err(|e| Error::json("embedding line", e))?;
            buf.push(b'\n');
        }
        let ctx = || format!("writing text embeddings {}", path.display());
        let mut f = fs::File::create(path).map_err(|e| Error::io(ctx(), e))?;
        f.write_all(&buf).map_err(|e| Error::io(ctx(), e))
    }
}

#[derive(Clone, Debug)]
pub struct ToyTextEncoder<S: Scalar> {
    pub table: Param<S, Ix2>,
    pub projection: Linear<S>,
    cache: Option<Array2<S>>,
}

impl<S: Scalar> ToyTextEncoder<S> {
    pub fn new<R: Rng + ?Sized>(table_dim: usize, embed_dim: usize, rng: &mut R) -> Self {
        let table = normal_array(Ix2(NUM_FINDINGS, table_dim), 1.0, rng);
        Self {
            table: Param::new(table),
            projection: Linear::new(table_dim, embed_dim, false, rng),
            cache: None,
        }
    }

    /// Row-averaging matrix `[n, 26]` for the parsed texts.
    fn averaging(texts: &[String]) -> Result<Array2<S>> {
        let mut m = Array2::zeros((texts.len(), NUM_FINDINGS));
        for (i, t) in texts.iter().enumerate() {
            let set = parse_training_text(t)?;
            let w = S::of(1.0 / set.len() as f64);
            for l in set.iter() {
                m[[i, l.id()]] = w;
            }
        }
        Ok(m)
    }

    pub fn forward(&mut self, texts: &[String], train: bool) -> Result<Array2<S>> {
        let m = Self::averaging(texts)?;
        let e = m.dot(&self.table.value);
        let z = self.projection.forward(&e, train);
        self.cache = train.then_some(m);
        Ok(z)
    }

    pub fn backward(&mut self, dz: &Array2<S>) {
        let m = self.cache.take().expect("backward without training forward");
        let de = self.projection.backward(dz);
        self.table.grad += &m.t().dot(&de);
    }
}

#[derive(Clone, Debug)]
pub struct FrozenTextEncoder<S: Scalar> {
    pub embeddings: Arc<FrozenEmbeddings>,
    pub projection: Linear<S>,
}

impl<S: Scalar> FrozenTextEncoder<S> {
    pub fn new<R: Rng + ?Sized>(
        embeddings: Arc<FrozenEmbeddings>,
        embed_dim: usize,
        rng: &mut R,
    ) -> Self {
        let projection = Linear::new(embeddings.dim(), embed_dim, false, rng);
        Self {
            embeddings,
            projection,
        }
    }

    pub fn forward(&mut self, texts: &[String], train: bool) -> Result<Array2<S>> {
        let d = self.embeddings.dim();
        let mut x = Array2::zeros((texts.len(), d));
        for (i, t) in texts.iter().enumerate() {
            let v = self.embeddings.get(t)?;
            for (j, &val) in v.iter().enumerate() {
                x[[i, j]] = S::of(val);
            }
        }
        Ok(self.projection.forward(&x, train))
    }

    pub fn backward(&mut self, dz: &Array2<S>) {
        self.projection.backward(dz);
    }
}

#[derive(Clone, Debug)]
pub enum TextEncoder<S: Scalar> {
    Toy(ToyTextEncoder<S>),
    Frozen(FrozenTextEncoder<S>),
}

impl<S: Scalar> TextEncoder<S> {
    pub fn from_config<R: Rng + ?Sized>(
        config: &TextEncoderConfig,
        embed_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(match config {
            TextEncoderConfig::Toy { table_dim } => {
                if *table_dim == 0 {
                    return Err(Error::Config("table_dim must be >= 1".into()));
                }
                Self::Toy(ToyTextEncoder::new(*table_dim, embed_dim, rng))
            }
            TextEncoderConfig::Frozen { path } => {
                let emb = Arc::new(FrozenEmbeddings::read_jsonl(path)?);
                Self::Frozen(FrozenTextEncoder::new(emb, embed_dim, rng))
            }
        })
    }

    /// Pre-normalization embeddings `[n, embed_dim]`.
    pub fn forward(&mut self, texts: &[String], train: bool) -> Result<Array2<S>> {
        match self {
            Self::Toy(t) => t.forward(texts, train),
            Self::Frozen(t) => t.forward(texts, train),
        }
    }

    pub fn backward(&mut self, dz: &Array2<S>) {
        match self {
            Self::Toy(t) => t.backward(dz),
            Self::Frozen(t) => t.backward(dz),
        }
    }
}

impl<S: Scalar> Module<S> for TextEncoder<S> {
    fn visit(&mut self, prefix: &str, v: &mut dyn Visitor<S>) {
        match self {
            Self::Toy(t) => {
                t.table.visit(&join(prefix, "table"), v);
                t.projection.visit(&join(prefix, "projection"), v);
            }
            Self::Frozen(t) => t.projection.visit(&join(prefix, "projection"), v),
        }
    }
}
