//! Minimal layers with hand-written backward passes.
//!
//! Activations are stored channel-major as `[channels, batch * len]`, so a
//! convolution is a single matrix product over an im2col buffer. Every layer
//! caches what its backward pass needs during a training-mode forward, and
//! `backward` accumulates into parameter gradients.

mod conv;
mod linear;
mod norm;
mod pool;
mod resnet;

use std::fmt::Debug;
use std::iter::Sum;

use ndarray::{Array, Array2, ArrayViewMutD, Dimension, LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive};
use rand::Rng;
use rand_distr::{Distribution, Normal};

pub use conv::Conv1d;
pub use linear::Linear;
pub use norm::BatchNorm1d;
pub use pool::{global_avg_pool, global_avg_pool_backward, MaxPool1d};
pub use resnet::{BasicBlock, ResNet1d, ResNetConfig};

/// Floating-point element type: `f32` for training, `f64` for gradient checks.
pub trait Scalar:
    Float
    + FromPrimitive
    + LinalgScalar
    + ScalarOperand
    + Debug
    + Default
    + Sum
    + Send
    + Sync
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
    + 'static
{
    fn of(x: f64) -> Self;
    fn f64(self) -> f64;
}

impl Scalar for f32 {
    fn of(x: f64) -> Self {
        x as f32
    }
    fn f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn of(x: f64) -> Self {
        x
    }
    fn f64(self) -> f64 {
        self
    }
}

/// Trainable tensor with its accumulated gradient (same shape).
#[derive(Clone, Debug)]
pub struct Param<S, D: Dimension> {
    pub value: Array<S, D>,
    pub grad: Array<S, D>,
}

impl<S: Scalar, D: Dimension> Param<S, D> {
    pub fn new(value: Array<S, D>) -> Self {
        let grad = Array::zeros(value.raw_dim());
        Self { value, grad }
    }

    pub fn visit(&mut self, name: &str, v: &mut dyn Visitor<S>) {
        v.param(name, self.value.view_mut().into_dyn(), self.grad.view_mut().into_dyn());
    }
}

/// Walks named parameters and buffers in a fixed order. The order is part of
/// the optimizer-state and checkpoint contract.
pub trait Visitor<S> {
    fn param(&mut self, name: &str, value: ArrayViewMutD<S>, grad: ArrayViewMutD<S>);
    /// Non-trainable state such as batch-norm running statistics.
    fn buffer(&mut self, _name: &str, _value: ArrayViewMutD<S>) {}
}

pub trait Module<S: Scalar> {
    fn visit(&mut self, prefix: &str, v: &mut dyn Visitor<S>);

    fn zero_grad(&mut self) {
        struct Zero;
        impl<S: Scalar> Visitor<S> for Zero {
            fn param(&mut self, _: &str, _: ArrayViewMutD<S>, mut grad: ArrayViewMutD<S>) {
                grad.fill(S::zero());
            }
        }
        self.visit("", &mut Zero);
    }

    fn num_params(&mut self) -> usize {
        struct Count(usize);
        impl<S> Visitor<S> for Count {
            fn param(&mut self, _: &str, value: ArrayViewMutD<S>, _: ArrayViewMutD<S>) {
                self.0 += value.len();
            }
        }
        let mut c = Count(0);
        self.visit("", &mut c);
        c.0
    }
}

pub fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Batched 1D activation: row `c`, column `b * len + t`.
#[derive(Clone, Debug, PartialEq)]
pub struct Act<S> {
    pub x: Array2<S>,
    pub batch: usize,
    pub len: usize,
}

impl<S: Scalar> Act<S> {
    pub fn new(x: Array2<S>, batch: usize, len: usize) -> Self {
        assert_eq!(x.dim().1, batch * len, "activation width must equal batch * len");
        Self { x, batch, len }
    }

    pub fn channels(&self) -> usize {
        self.x.dim().0
    }

    /// Stacks `[channels, len]` signals that share one length.
    pub fn from_signals<'a, I>(signals: I) -> Self
    where
        I: IntoIterator<Item = ndarray::ArrayView2<'a, S>>,
    {
        let signals: Vec<_> = signals.into_iter().collect();
        assert!(!signals.is_empty(), "empty batch");
        let (c, len) = signals[0].dim();
        let mut x = Array2::zeros((c, signals.len() * len));
        for (b, s) in signals.iter().enumerate() {
            assert_eq!(s.dim(), (c, len), "batch signals must share a shape");
            x.slice_mut(ndarray::s![.., b * len..(b + 1) * len]).assign(s);
        }
        Self::new(x, signals.len(), len)
    }
}

pub fn relu_inplace<S: Scalar>(a: &mut Act<S>) {
    a.x.mapv_inplace(|v| if v > S::zero() { v } else { S::zero() });
}

/// Masks `dy` where the forward output `y` was clamped to zero.
pub fn relu_backward<S: Scalar>(y: &Act<S>, dy: &mut Act<S>) {
    ndarray::Zip::from(&mut dy.x).and(&y.x).for_each(|d, &v| {
        if v <= S::zero() {
            *d = S::zero();
        }
    });
}

/// He-normal initialization with the given fan.
pub(crate) fn he_normal<S: Scalar, D: Dimension, R: Rng + ?Sized>(
    shape: D,
    fan: usize,
    rng: &mut R,
) -> Array<S, D> {
    let std = (2.0 / fan as f64).sqrt();
    normal_array(shape, std, rng)
}

pub fn normal_array<S: Scalar, D: Dimension, R: Rng + ?Sized>(
    shape: D,
    std: f64,
    rng: &mut R,
) -> Array<S, D> {
    let dist = Normal::new(0.0, std).expect("finite std");
    let mut a = Array::zeros(shape);
    a.iter_mut().for_each(|v| *v = S::of(dist.sample(rng)));
    a
}
