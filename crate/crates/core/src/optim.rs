//! Adam and the warmup learning-rate schedule.

use ndarray::{ArrayD, ArrayViewMutD, Zip};
use serde::{Deserialize, Serialize};

use crate::nn::{Module, Scalar, Visitor};

/// Linear ramp from 0 to `peak` over `warmup_steps`, then constant.
pub fn lr_at_step(step: usize, peak: f64, warmup_steps: usize) -> f64 {
    if warmup_steps == 0 || step >= warmup_steps {
        peak
    } else {
        peak * step as f64 / warmup_steps as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    /// Coupled L2 penalty added to gradients before the update.
    #[serde(default)]
    pub weight_decay: f64,
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
            weight_decay: 0.0,
        }
    }
}

/// Moment estimates are matched to parameters by visitation order.
#[derive(Clone, Debug)]
pub struct Adam<S> {
    pub config: AdamConfig,
    step: i32,
    moments: Vec<(ArrayD<S>, ArrayD<S>)>,
}

impl<S: Scalar> Adam<S> {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            moments: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> usize {
        self.step as usize
    }

    /// Applies one update with learning rate `lr` and clears gradients.
    pub fn step<M: Module<S> + ?Sized>(&mut self, model: &mut M, lr: f64) {
        self.step += 1;
        let c = self.config;
        let mut v = Update {
            lr,
            c,
            bias1: 1.0 - c.beta1.powi(self.step),
            bias2: 1.0 - c.beta2.powi(self.step),
            moments: &mut self.moments,
            index: 0,
        };
        model.visit("", &mut v);
    }
}

struct Update<'a, S> {
    lr: f64,
    c: AdamConfig,
    bias1: f64,
    bias2: f64,
    moments: &'a mut Vec<(ArrayD<S>, ArrayD<S>)>,
    index: usize,
}

impl<S: Scalar> Visitor<S> for Update<'_, S> {
    fn param(&mut self, _: &str, mut value: ArrayViewMutD<S>, mut grad: ArrayViewMutD<S>) {
        if self.moments.len() == self.index {
            self.moments.push((ArrayD::zeros(value.raw_dim()), ArrayD::zeros(value.raw_dim())));
        }
        let (m, v) = &mut self.moments[self.index];
        assert_eq!(m.shape(), value.shape(), "parameter order changed between steps");
        self.index += 1;
        let (b1, b2) = (S::of(self.c.beta1), S::of(self.c.beta2));
        let (one, wd) = (S::one(), S::of(self.c.weight_decay));
        let (lr, eps) = (S::of(self.lr), S::of(self.c.eps));
        let (bc1, bc2) = (S::of(self.bias1), S::of(self.bias2));
        Zip::from(&mut value)
            .and(&mut grad)
            .and(m)
            .and(v)
            .for_each(|p, g, m, v| {
                let gi = *g + wd * *p;
                *m = b1 * *m + (one - b1) * gi;
                *v = b2 * *v + (one - b2) * gi * gi;
                let mhat = *m / bc1;
                let vhat = *v / bc2;
                *p -= lr * mhat / (vhat.sqrt() + eps);
                *g = S::zero();
            });
    }
}
