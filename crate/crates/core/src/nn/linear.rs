use ndarray::{Array1, Array2, Axis, Ix1, Ix2};
use rand::Rng;

use super::{join, normal_array, Module, Param, Scalar, Visitor};

/// `y = x Wᵀ (+ b)` on row-major batches `[n, in]`.
#[derive(Clone, Debug)]
pub struct Linear<S: Scalar> {
    pub weight: Param<S, Ix2>,
    pub bias: Option<Param<S, Ix1>>,
    cache: Option<Array2<S>>,
}

impl<S: Scalar> Linear<S> {
    /// Weights drawn from N(0, 1/in).
    pub fn new<R: Rng + ?Sized>(input: usize, output: usize, bias: bool, rng: &mut R) -> Self {
        let w = normal_array(Ix2(output, input), (1.0 / input as f64).sqrt(), rng);
        Self::from_weights(w, bias.then(|| Array1::zeros(output)))
    }

    pub fn from_weights(weight: Array2<S>, bias: Option<Array1<S>>) -> Self {
        if let Some(b) = &bias {
            assert_eq!(b.len(), weight.dim().0, "bias length");
        }
        Self {
            weight: Param::new(weight),
            bias: bias.map(Param::new),
            cache: None,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.value.dim().1
    }

    pub fn output_dim(&self) -> usize {
        self.weight.value.dim().0
    }

    pub fn forward(&mut self, x: &Array2<S>, train: bool) -> Array2<S> {
        let mut y = x.dot(&self.weight.value.t());
        if let Some(b) = &self.bias {
            y += &b.value;
        }
        self.cache = train.then(|| x.clone());
        y
    }

    pub fn backward(&mut self, dy: &Array2<S>) -> Array2<S> {
        let x = self.cache.take().expect("backward without training forward");
        self.weight.grad += &dy.t().dot(&x);
        if let Some(b) = &mut self.bias {
            b.grad += &dy.sum_axis(Axis(0));
        }
        dy.dot(&self.weight.value)
    }
}

impl<S: Scalar> Module<S> for Linear<S> {
    fn visit(&mut self, prefix: &str, v: &mut dyn Visitor<S>) {
        self.weight.visit(&join(prefix, "weight"), v);
        if let Some(b) = &mut self.bias {
            b.visit(&join(prefix, "bias"), v);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn forward_and_backward() {
        let mut l = Linear::from_weights(array![[1.0, 2.0], [0.0, -1.0]], Some(array![0.5, 0.0]));
        let y = l.forward(&array![[1.0, 1.0]], true);
        assert_eq!(y, array![[3.5, -1.0]]);
        let dx = l.backward(&array![[1.0, 2.0]]);
        assert_eq!(dx, array![[1.0, 0.0]]);
        assert_eq!(l.weight.grad, array![[1.0, 1.0], [2.0, 2.0]]);
        assert_eq!(l.bias.as_ref().unwrap().grad, array![1.0, 2.0]);
    }
}
