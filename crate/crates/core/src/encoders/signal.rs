use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{join, Act, Linear, Module, ResNet1d, ResNetConfig, Scalar, Visitor};
use crate::signal::NUM_LEADS;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalEncoderConfig {
    #[serde(default = "default_leads")]
    pub in_leads: usize,
    #[serde(default = "default_channels")]
    pub channels: [usize; 4],
    #[serde(default = "default_blocks")]
    pub blocks_per_stage: usize,
    /// Average-pooling factor applied to raw signals before the network.
    /// 1 feeds the 500 Hz signal unchanged.
    #[serde(default = "default_decimation")]
    pub input_decimation: usize,
}

fn default_leads() -> usize {
    NUM_LEADS
}
fn default_channels() -> [usize; 4] {
    [64, 128, 256, 512]
}
fn default_blocks() -> usize {
    2
}
fn default_decimation() -> usize {
    1
}

impl Default for SignalEncoderConfig {
    fn default() -> Self {
        Self {
            in_leads: default_leads(),
            channels: default_channels(),
            blocks_per_stage: default_blocks(),
            input_decimation: default_decimation(),
        }
    }
}

impl SignalEncoderConfig {
    pub fn resnet(&self) -> ResNetConfig {
        ResNetConfig {
            in_channels: self.in_leads,
            channels: self.channels,
            blocks_per_stage: self.blocks_per_stage,
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.channels[3]
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_decimation == 0 {
            return Err(Error::Config("input_decimation must be >= 1".into()));
        }
        self.resnet().validate()
    }

    /// Network input for a raw `[leads, samples]` signal.
    pub fn prepare(&self, signal: ArrayView2<f32>) -> Array2<f32> {
        decimate(signal, self.input_decimation)
    }
}

/// Non-overlapping mean over `factor` samples; a trailing remainder is dropped.
pub fn decimate(signal: ArrayView2<f32>, factor: usize) -> Array2<f32> {
    let (leads, n) = signal.dim();
    if factor <= 1 {
        return signal.to_owned();
    }
    let m = n / factor;
    let inv = 1.0 / factor as f32;
    Array2::from_shape_fn((leads, m), |(l, t)| {
        (0..factor).map(|k| signal[[l, t * factor + k]]).sum::<f32>() * inv
    })
}

/// ResNet trunk followed by a bias-free projection to the embedding space.
#[derive(Clone, Debug)]
pub struct SignalEncoder<S: Scalar> {
    pub config: SignalEncoderConfig,
    pub trunk: ResNet1d<S>,
    pub projection: Linear<S>,
}

impl<S: Scalar> SignalEncoder<S> {
    pub fn new<R: Rng + ?Sized>(
        config: SignalEncoderConfig,
        embed_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let trunk = ResNet1d::new(config.resnet(), rng)?;
        let projection = Linear::new(config.feature_dim(), embed_dim, false, rng);
        Ok(Self {
            config,
            trunk,
            projection,
        })
    }

    /// Pre-normalization embeddings `[n, embed_dim]` for prepared signals.
    pub fn forward(&mut self, signals: &[ArrayView2<S>], train: bool) -> Result<Array2<S>> {
        let x = batch_input(signals, self.config.in_leads)?;
        let feats = self.trunk.forward(&x, train)?;
        Ok(self.projection.forward(&feats, train))
    }

    /// Returns the gradient with respect to the prepared input batch.
    pub fn backward(&mut self, dz: &Array2<S>) -> Act<S> {
        let dfeat = self.projection.backward(dz);
        self.trunk.backward(&dfeat)
    }
}

pub(crate) fn batch_input<S: Scalar>(signals: &[ArrayView2<S>], leads: usize) -> Result<Act<S>> {
    let Some(first) = signals.first() else {
        return Err(Error::Shape("empty signal batch".into()));
    };
    let len = first.dim().1;
    for s in signals {
        if s.dim() != (leads, len) {
            return Err(Error::Shape(format!(
                "signal shape {:?}, expected ({leads}, {len})",
                s.dim()
            )));
        }
    }
    Ok(Act::from_signals(signals.iter().cloned()))
}

impl<S: Scalar> Module<S> for SignalEncoder<S> {
    fn visit(&mut self, prefix: &str, v: &mut dyn Visitor<S>) {
        self.trunk.visit(&join(prefix, "trunk"), v);
        self.projection.visit(&join(prefix, "projection"), v);
    }
}
