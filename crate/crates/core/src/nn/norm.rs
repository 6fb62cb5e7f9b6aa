use ndarray::{Array1, Array2, Axis, Ix1, Zip};

use super::{join, Act, Module, Param, Scalar, Visitor};

/// Per-channel batch normalization over `batch * len` positions.
/// Training mode normalizes with batch statistics and updates running
/// statistics (unbiased variance); inference mode uses running statistics.
#[derive(Clone, Debug)]
pub struct BatchNorm1d<S: Scalar> {
    pub gamma: Param<S, Ix1>,
    pub beta: Param<S, Ix1>,
    pub running_mean: Array1<S>,
    pub running_var: Array1<S>,
    pub momentum: f64,
    pub eps: f64,
    cache: Option<(Array2<S>, Array1<S>)>,
}

impl<S: Scalar> BatchNorm1d<S> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Param::new(Array1::ones(channels)),
            beta: Param::new(Array1::zeros(channels)),
            running_mean: Array1::zeros(channels),
            running_var: Array1::ones(channels),
            momentum: 0.1,
            eps: 1e-5,
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Act<S>, train: bool) -> Act<S> {
        let n = x.x.dim().1;
        let mut y = x.x.clone();
        if !train {
            for (c, mut row) in y.axis_iter_mut(Axis(0)).enumerate() {
                let inv = S::one() / (self.running_var[c] + S::of(self.eps)).sqrt();
                let (m, g, b) = (self.running_mean[c], self.gamma.value[c], self.beta.value[c]);
                row.mapv_inplace(|v| (v - m) * inv * g + b);
            }
            self.cache = None;
            return Act::new(y, x.batch, x.len);
        }
        let nf = S::of(n as f64);
        let mut inv_std = Array1::zeros(y.dim().0);
        let mom = S::of(self.momentum);
        for (c, mut row) in y.axis_iter_mut(Axis(0)).enumerate() {
            let mean = row.sum() / nf;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<S>() / nf;
            let inv = S::one() / (var + S::of(self.eps)).sqrt();
            row.mapv_inplace(|v| (v - mean) * inv);
            inv_std[c] = inv;
            let unbiased = if n > 1 {
                var * nf / S::of((n - 1) as f64)
            } else {
                var
            };
            self.running_mean[c] = (S::one() - mom) * self.running_mean[c] + mom * mean;
            self.running_var[c] = (S::one() - mom) * self.running_var[c] + mom * unbiased;
        }
        let mut out = y.clone();
        for (c, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
            let (g, b) = (self.gamma.value[c], self.beta.value[c]);
            row.mapv_inplace(|v| v * g + b);
        }
        self.cache = Some((y, inv_std));
        Act::new(out, x.batch, x.len)
    }

    pub fn backward(&mut self, dy: &Act<S>) -> Act<S> {
        let (xhat, inv_std) = self.cache.take().expect("backward without training forward");
        let nf = S::of(dy.x.dim().1 as f64);
        let mut dx = Array2::zeros(dy.x.raw_dim());
        for c in 0..xhat.dim().0 {
            let (dyr, xr) = (dy.x.row(c), xhat.row(c));
            let sum_dy = dyr.sum();
            let sum_dy_x = Zip::from(&dyr).and(&xr).fold(S::zero(), |a, &d, &x| a + d * x);
            self.beta.grad[c] += sum_dy;
            self.gamma.grad[c] += sum_dy_x;
            let k = self.gamma.value[c] * inv_std[c] / nf;
            Zip::from(dx.row_mut(c))
                .and(&dyr)
                .and(&xr)
                .for_each(|o, &d, &x| *o = k * (nf * d - sum_dy - x * sum_dy_x));
        }
        Act::new(dx, dy.batch, dy.len)
    }
}

impl<S: Scalar> Module<S> for BatchNorm1d<S> {
    fn visit(&mut self, prefix: &str, v: &mut dyn Visitor<S>) {
        self.gamma.visit(&join(prefix, "gamma"), v);
        self.beta.visit(&join(prefix, "beta"), v);
        v.buffer(&join(prefix, "running_mean"), self.running_mean.view_mut().into_dyn());
        v.buffer(&join(prefix, "running_var"), self.running_var.view_mut().into_dyn());
    }
}
