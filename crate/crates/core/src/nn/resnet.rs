use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    global_avg_pool, global_avg_pool_backward, join, relu_backward, relu_inplace, Act, BatchNorm1d,
    Conv1d, MaxPool1d, Module, Scalar, Visitor,
};
use crate::error::{Error, Result};

/// 1D ResNet-18 layout: stem conv (kernel 7, stride 2) and max pool
/// (kernel 3, stride 2), then four stages of basic blocks with kernel 3,
/// stride 2 entering stages 2 to 4, then global average pooling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResNetConfig {
    pub in_channels: usize,
    /// Output channels of stages 1 to 4; the stem emits `channels[0]`.
    pub channels: [usize; 4],
    pub blocks_per_stage: usize,
}

impl Default for ResNetConfig {
    fn default() -> Self {
        Self {
            in_channels: 12,
            channels: [64, 128, 256, 512],
            blocks_per_stage: 2,
        }
    }
}

impl ResNetConfig {
    pub const STEM_KERNEL: usize = 7;
    pub const BLOCK_KERNEL: usize = 3;
    /// Shortest input that survives the five stride-2 reductions.
    pub const MIN_LEN: usize = 64;

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.channels.contains(&0) || self.blocks_per_stage == 0 {
            return Err(Error::Config("resnet channels and blocks must be >= 1".into()));
        }
        Ok(())
    }

    pub fn feature_dim(&self) -> usize {
        self.channels[3]
    }

    /// Temporal length after the stem+pool and after each stage.
    pub fn stage_lengths(&self, len: usize) -> [usize; 5] {
        let down = |l: usize, k: usize, p: usize| (l + 2 * p - k) / 2 + 1;
        let stem = down(len, Self::STEM_KERNEL, 3);
        let pooled = down(stem, 3, 1);
        let s2 = down(pooled, Self::BLOCK_KERNEL, 1);
        let s3 = down(s2, Self::BLOCK_KERNEL, 1);
        let s4 = down(s3, Self::BLOCK_KERNEL, 1);
        [stem, pooled, s2, s3, s4]
    }
}

#[derive(Clone, Debug)]
pub struct BasicBlock<S: Scalar> {
    conv1: Conv1d<S>,
    bn1: BatchNorm1d<S>,
    conv2: Conv1d<S>,
    bn2: BatchNorm1d<S>,
    downsample: Option<(Conv1d<S>, BatchNorm1d<S>)>,
    cache: Option<(Act<S>, Act<S>)>,
}

impl<S: Scalar> BasicBlock<S> {
    pub fn new<R: Rng + ?Sized>(cin: usize, cout: usize, stride: usize, rng: &mut R) -> Self {
        let k = ResNetConfig::BLOCK_KERNEL;
        let downsample = (stride != 1 || cin != cout)
            .then(|| (Conv1d::new(cin, cout, 1, stride, 0, rng), BatchNorm1d::new(cout)));
        Self {
            conv1: Conv1d::new(cin, cout, k, stride, k / 2, rng),
            bn1: BatchNorm1d::new(cout),
            conv2: Conv1d::new(cout, cout, k, 1, k / 2, rng),
            bn2: BatchNorm1d::new(cout),
            downsample,
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Act<S>, train: bool) -> Act<S> {
        let mut h = self.bn1.forward(&self.conv1.forward(x, train), train);
        relu_inplace(&mut h);
        let mut out = self.bn2.forward(&self.conv2.forward(&h, train), train);
        match &mut self.downsample {
            Some((conv, bn)) => out.x += &bn.forward(&conv.forward(x, train), train).x,
            None => out.x += &x.x,
        }
        relu_inplace(&mut out);
        self.cache = train.then(|| (h, out.clone()));
        out
    }

    pub fn backward(&mut self, dy: &Act<S>) -> Act<S> {
        let (h, out) = self.cache.take().expect("backward without training forward");
        let mut d = dy.clone();
        relu_backward(&out, &mut d);
        let mut dh = self.conv2.backward(&self.bn2.backward(&d));
        relu_backward(&h, &mut dh);
        let mut dx = self.conv1.backward(&self.bn1.backward(&dh));
        match &mut self.downsample {
            Some((conv, bn)) => dx.x += &conv.backward(&bn.backward(&d)).x,
            None => dx.x += &d.x,
        }
        dx
    }
}

impl<S: Scalar> Module<S> for BasicBlock<S> {
    fn visit(&mut self, prefix: &str, v: &mut dyn Visitor<S>) {
        self.conv1.visit(&join(prefix, "conv1"), v);
        self.bn1.visit(&join(prefix, "bn1"), v);
        self.conv2.visit(&join(prefix, "conv2"), v);
        self.bn2.visit(&join(prefix, "bn2"), v);
        if let Some((conv, bn)) = &mut self.downsample {
            conv.visit(&join(prefix, "downsample.conv"), v);
            bn.visit(&join(prefix, "downsample.bn"), v);
        }
    }
}

/// Trunk producing `[batch, feature_dim]` pooled features.
#[derive(Clone, Debug)]
pub struct ResNet1d<S: Scalar> {
    pub config: ResNetConfig,
    stem: Conv1d<S>,
    stem_bn: BatchNorm1d<S>,
    pool: MaxPool1d,
    blocks: Vec<BasicBlock<S>>,
    cache: Option<(Act<S>, usize)>,
}

impl<S: Scalar> ResNet1d<S> {
    pub fn new<R: Rng + ?Sized>(config: ResNetConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let c = config.channels;
        let stem = Conv1d::new(config.in_channels, c[0], ResNetConfig::STEM_KERNEL, 2, 3, rng);
        let mut blocks = Vec::new();
        let mut cin = c[0];
        for (stage, &cout) in c.iter().enumerate() {
            for i in 0..config.blocks_per_stage {
                let stride = if stage > 0 && i == 0 { 2 } else { 1 };
                blocks.push(BasicBlock::new(cin, cout, stride, rng));
                cin = cout;
            }
        }
        Ok(Self {
            stem_bn: BatchNorm1d::new(c[0]),
            stem,
            pool: MaxPool1d::new(3, 2, 1),
            blocks,
            config,
            cache: None,
        })
    }

    pub fn check_input(&self, x: &Act<S>) -> Result<()> {
        if x.channels() != self.config.in_channels {
            return Err(Error::Shape(format!(
                "expected {} input channels, got {}",
                self.config.in_channels,
                x.channels()
            )));
        }
        if x.len < ResNetConfig::MIN_LEN {
            return Err(Error::Shape(format!(
                "input length {} below minimum {}",
                x.len,
                ResNetConfig::MIN_LEN
            )));
        }
        Ok(())
    }

    /// Runs the trunk and also returns the temporal length after the stem
    /// and each block (for shape inspection).
    pub fn forward_traced(&mut self, x: &Act<S>, train: bool) -> Result<(Array2<S>, Vec<usize>)> {
        self.check_input(x)?;
        let mut trace = Vec::with_capacity(self.blocks.len() + 2);
        let mut h = self.stem_bn.forward(&self.stem.forward(x, train), train);
        relu_inplace(&mut h);
        trace.push(h.len);
        let stem_out = train.then(|| h.clone());
        h = self.pool.forward(&h, train);
        trace.push(h.len);
        for block in &mut self.blocks {
            h = block.forward(&h, train);
            trace.push(h.len);
        }
        let feats = global_avg_pool(&h);
        self.cache = stem_out.map(|s| (s, h.len));
        Ok((feats, trace))
    }

    pub fn forward(&mut self, x: &Act<S>, train: bool) -> Result<Array2<S>> {
        self.forward_traced(x, train).map(|(f, _)| f)
    }

    /// Gradient with respect to the input signal.
    pub fn backward(&mut self, dfeats: &Array2<S>) -> Act<S> {
        let (stem_out, len) = self.cache.take().expect("backward without training forward");
        let mut d = global_avg_pool_backward(dfeats, len);
        for block in self.blocks.iter_mut().rev() {
            d = block.backward(&d);
        }
        let mut d = self.pool.backward(&d);
        relu_backward(&stem_out, &mut d);
        self.stem.backward(&self.stem_bn.backward(&d))
    }
}

impl<S: Scalar> Module<S> for ResNet1d<S> {
    fn visit(&mut self, prefix: &str, v: &mut dyn Visitor<S>) {
        self.stem.visit(&join(prefix, "stem.conv"), v);
        self.stem_bn.visit(&join(prefix, "stem.bn"), v);
        let per = self.config.blocks_per_stage;
        for (i, block) in self.blocks.iter_mut().enumerate() {
            block.visit(&join(prefix, &format!("stage{}.block{}", i / per + 1, i % per)), v);
        }
    }
}
