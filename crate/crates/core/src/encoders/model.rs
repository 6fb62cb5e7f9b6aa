use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::pair::{from_f64, normalize_and_pair, normalize_rows, to_f64, ContrastiveHead, EmbeddingBatch};
use super::signal::{batch_input, SignalEncoder, SignalEncoderConfig};
use super::text::{TextEncoder, TextEncoderConfig};
use crate::error::{Error, Result};
use crate::labels::{render_label_prompt, FindingLabel, NUM_FINDINGS};
use crate::loss::{sigmoid_contrastive_loss, TargetMatrix};
use crate::nn::{join, Act, Linear, Module, ResNet1d, Scalar, Visitor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default)]
    pub signal: SignalEncoderConfig,
    #[serde(default)]
    pub text: TextEncoderConfig,
    #[serde(default = "default_embed_dim")]
    pub embed_dim: usize,
}

fn default_embed_dim() -> usize {
    256
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            signal: SignalEncoderConfig::default(),
            text: TextEncoderConfig::default(),
            embed_dim: default_embed_dim(),
        }
    }
}

/// Signal tower, text tower and pairwise sigmoid head.
#[derive(Clone, Debug)]
pub struct ContrastiveModel<S: Scalar> {
    pub config: ModelConfig,
    pub signal: SignalEncoder<S>,
    pub text: TextEncoder<S>,
    pub head: ContrastiveHead<S>,
}

/// Result of one forward/backward pass over a batch.
#[derive(Clone, Debug)]
pub struct StepOutput<S> {
    pub loss: f64,
    pub d_input: Act<S>,
}

impl<S: Scalar> ContrastiveModel<S> {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        Self::with_rng(config, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn with_rng<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        if config.embed_dim == 0 {
            return Err(Error::Config("embed_dim must be >= 1".into()));
        }
        let signal = SignalEncoder::new(config.signal.clone(), config.embed_dim, rng)?;
        let text = TextEncoder::from_config(&config.text, config.embed_dim, rng)?;
        Ok(Self {
            config,
            signal,
            text,
            head: ContrastiveHead::default(),
        })
    }

    pub fn embed_signals(&mut self, signals: &[ArrayView2<S>], train: bool) -> Result<Array2<S>> {
        self.signal.forward(signals, train)
    }

    pub fn embed_texts(&mut self, texts: &[String], train: bool) -> Result<Array2<S>> {
        self.text.forward(texts, train)
    }

    /// Normalized embeddings paired with the current head.
    pub fn pair(&mut self, signals: &[ArrayView2<S>], texts: &[String], train: bool) -> Result<EmbeddingBatch> {
        let img = self.embed_signals(signals, train)?;
        let txt = self.embed_texts(texts, train)?;
        normalize_and_pair(&to_f64(&img), &to_f64(&txt), self.head.params())
    }

    /// Computes the loss and accumulates gradients into every parameter.
    pub fn forward_backward(
        &mut self,
        signals: &[ArrayView2<S>],
        texts: &[String],
        targets: &TargetMatrix,
    ) -> Result<StepOutput<S>> {
        let batch = self.pair(signals, texts, true)?;
        let l = sigmoid_contrastive_loss(&batch, targets)?;
        let (d_img, d_txt) = batch.backward(&l.d_zimg, &l.d_ztxt);
        self.head.accumulate(l.d_t_prime, l.d_bias);
        self.text.backward(&from_f64(&d_txt));
        let d_input = self.signal.backward(&from_f64(&d_img));
        Ok(StepOutput {
            loss: l.loss,
            d_input,
        })
    }

    /// Unit-norm embeddings `[26, embed_dim]` of the per-finding prompts.
    pub fn prompt_embeddings(&mut self) -> Result<Array2<f64>> {
        let prompts: Vec<String> = FindingLabel::all().map(render_label_prompt).collect();
        let txt = to_f64(&self.embed_texts(&prompts, false)?);
        Ok(normalize_rows(&txt)?.0)
    }

    /// Per-finding probabilities `σ(t·cos + b)` for prepared signals,
    /// given unit-norm prompt embeddings.
    pub fn score(&mut self, signals: &[ArrayView2<S>], prompts: &Array2<f64>) -> Result<Array2<f64>> {
        let (zimg, _) = normalize_rows(&to_f64(&self.embed_signals(signals, false)?))?;
        let head = self.head.params();
        Ok(zimg.dot(&prompts.t()).mapv(|c| head.score(c)))
    }
}

impl<S: Scalar> Module<S> for ContrastiveModel<S> {
    fn visit(&mut self, prefix: &str, v: &mut dyn Visitor<S>) {
        self.signal.visit(&join(prefix, "signal"), v);
        self.text.visit(&join(prefix, "text"), v);
        self.head.visit(&join(prefix, "head"), v);
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineModelConfig {
    #[serde(default)]
    pub signal: SignalEncoderConfig,
}

/// The signal trunk topped by a per-finding linear classifier.
#[derive(Clone, Debug)]
pub struct MultilabelModel<S: Scalar> {
    pub config: BaselineModelConfig,
    pub trunk: ResNet1d<S>,
    pub classifier: Linear<S>,
}

impl<S: Scalar> MultilabelModel<S> {
    pub fn new(config: BaselineModelConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        config.signal.validate()?;
        let trunk = ResNet1d::new(config.signal.resnet(), &mut rng)?;
        let classifier = Linear::new(config.signal.feature_dim(), NUM_FINDINGS, true, &mut rng);
        Ok(Self {
            config,
            trunk,
            classifier,
        })
    }

    /// Logits `[n, 26]` for prepared signals.
    pub fn forward(&mut self, signals: &[ArrayView2<S>], train: bool) -> Result<Array2<S>> {
        let x = batch_input(signals, self.config.signal.in_leads)?;
        let feats = self.trunk.forward(&x, train)?;
        Ok(self.classifier.forward(&feats, train))
    }

    pub fn backward(&mut self, d_logits: &Array2<S>) -> Act<S> {
        let d = self.classifier.backward(d_logits);
        self.trunk.backward(&d)
    }
}

impl<S: Scalar> Module<S> for MultilabelModel<S> {
    fn visit(&mut self, prefix: &str, v: &mut dyn Visitor<S>) {
        self.trunk.visit(&join(prefix, "trunk"), v);
        self.classifier.visit(&join(prefix, "classifier"), v);
    }
}
