use ndarray::{Array1, Array2, Axis, Ix1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{join, Module, Param, Scalar, Visitor};

/// Learnable log-temperature `t'` and bias `b` of the pairwise sigmoid.
#[derive(Clone, Debug)]
pub struct ContrastiveHead<S: Scalar> {
    pub t_prime: Param<S, Ix1>,
    pub bias: Param<S, Ix1>,
}

impl<S: Scalar> Default for ContrastiveHead<S> {
    /// `t' = log 10`, `b = -10`.
    fn default() -> Self {
        Self::new(10f64.ln(), -10.0)
    }
}

impl<S: Scalar> ContrastiveHead<S> {
    pub fn new(t_prime: f64, bias: f64) -> Self {
        Self {
            t_prime: Param::new(Array1::from_elem(1, S::of(t_prime))),
            bias: Param::new(Array1::from_elem(1, S::of(bias))),
        }
    }

    pub fn params(&self) -> HeadParams {
        HeadParams {
            t_prime: self.t_prime.value[0].f64(),
            bias: self.bias.value[0].f64(),
        }
    }

    pub fn accumulate(&mut self, d_t_prime: f64, d_bias: f64) {
        self.t_prime.grad[0] += S::of(d_t_prime);
        self.bias.grad[0] += S::of(d_bias);
    }
}

impl<S: Scalar> Module<S> for ContrastiveHead<S> {
    fn visit(&mut self, prefix: &str, v: &mut dyn Visitor<S>) {
        self.t_prime.visit(&join(prefix, "t_prime"), v);
        self.bias.visit(&join(prefix, "bias"), v);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadParams {
    pub t_prime: f64,
    pub bias: f64,
}

impl HeadParams {
    pub fn temperature(&self) -> f64 {
        self.t_prime.exp()
    }

    /// Pair probability `σ(t·cos + b)`.
    pub fn score(&self, cos: f64) -> f64 {
        sigmoid(self.temperature() * cos + self.bias)
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Unit-norm image and text embeddings with the head that scores them.
/// The pre-normalization norms are kept for the backward pass.
#[derive(Clone, Debug)]
pub struct EmbeddingBatch {
    pub zimg: Array2<f64>,
    pub ztxt: Array2<f64>,
    pub head: HeadParams,
    img_norms: Array1<f64>,
    txt_norms: Array1<f64>,
}

pub(crate) fn normalize_rows(x: &Array2<f64>) -> Result<(Array2<f64>, Array1<f64>)> {
    let norms = x.map_axis(Axis(1), |r| r.dot(&r).sqrt());
    if let Some(i) = norms.iter().position(|&n| !(n > 0.0) || !n.is_finite()) {
        return Err(if norms[i].is_finite() {
            Error::ZeroNorm(i)
        } else {
            Error::NonFinite(format!("embedding row {i}"))
        });
    }
    let z = x / &norms.view().insert_axis(Axis(1));
    Ok((z, norms))
}

/// Gradient through `u = x / |x|`: `dx = (du - u (u·du)) / |x|`.
fn normalize_backward(u: &Array2<f64>, norms: &Array1<f64>, du: &Array2<f64>) -> Array2<f64> {
    let mut dx = du.clone();
    for ((mut d, ur), &n) in dx.outer_iter_mut().zip(u.outer_iter()).zip(norms) {
        let proj = ur.dot(&d);
        d.zip_mut_with(&ur, |a, &b| *a = (*a - b * proj) / n);
    }
    dx
}

pub fn normalize_and_pair(
    img: &Array2<f64>,
    txt: &Array2<f64>,
    head: HeadParams,
) -> Result<EmbeddingBatch> {
    if img.dim().0 != txt.dim().0 {
        return Err(Error::Shape(format!(
            "{} image rows vs {} text rows",
            img.dim().0,
            txt.dim().0
        )));
    }
    if img.dim().1 != txt.dim().1 {
        return Err(Error::Shape("image and text embedding widths differ".into()));
    }
    let (zimg, img_norms) = normalize_rows(img)?;
    let (ztxt, txt_norms) = normalize_rows(txt)?;
    Ok(EmbeddingBatch {
        zimg,
        ztxt,
        head,
        img_norms,
        txt_norms,
    })
}

impl EmbeddingBatch {
    pub fn len(&self) -> usize {
        self.zimg.dim().0
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `zimg · ztxtᵀ`.
    pub fn cosines(&self) -> Array2<f64> {
        self.zimg.dot(&self.ztxt.t())
    }

    /// Maps gradients on the unit rows back to the raw embeddings.
    pub fn backward(&self, d_zimg: &Array2<f64>, d_ztxt: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
        (
            normalize_backward(&self.zimg, &self.img_norms, d_zimg),
            normalize_backward(&self.ztxt, &self.txt_norms, d_ztxt),
        )
    }
}

pub(crate) fn to_f64<S: Scalar>(x: &Array2<S>) -> Array2<f64> {
    x.mapv(|v| v.f64())
}

pub(crate) fn from_f64<S: Scalar>(x: &Array2<f64>) -> Array2<S> {
    x.mapv(S::of)
}
