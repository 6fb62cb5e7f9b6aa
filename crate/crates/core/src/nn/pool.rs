use ndarray::Array2;

use super::{Act, Scalar};

/// Max pooling with implicit `-inf` padding.
#[derive(Clone, Debug)]
pub struct MaxPool1d {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    cache: Option<(Vec<u32>, usize)>,
}

impl MaxPool1d {
    pub fn new(kernel: usize, stride: usize, padding: usize) -> Self {
        Self {
            kernel,
            stride,
            padding,
            cache: None,
        }
    }

    pub fn out_len(&self, len: usize) -> usize {
        (len + 2 * self.padding - self.kernel) / self.stride + 1
    }

    pub fn forward<S: Scalar>(&mut self, x: &Act<S>, train: bool) -> Act<S> {
        let (c, len, b) = (x.channels(), x.len, x.batch);
        let lout = self.out_len(len);
        let mut y = Array2::zeros((c, b * lout));
        let mut arg = if train { vec![0u32; c * b * lout] } else { Vec::new() };
        for ci in 0..c {
            for bi in 0..b {
                for t in 0..lout {
                    let start = (t * self.stride) as isize - self.padding as isize;
                    let mut best = S::neg_infinity();
                    let mut at = 0usize;
                    for k in 0..self.kernel as isize {
                        let ti = start + k;
                        if ti >= 0 && (ti as usize) < len {
                            let v = x.x[[ci, bi * len + ti as usize]];
                            if v > best {
                                best = v;
                                at = ti as usize;
                            }
                        }
                    }
                    y[[ci, bi * lout + t]] = best;
                    if train {
                        arg[(ci * b + bi) * lout + t] = at as u32;
                    }
                }
            }
        }
        self.cache = train.then_some((arg, len));
        Act::new(y, b, lout)
    }

    pub fn backward<S: Scalar>(&mut self, dy: &Act<S>) -> Act<S> {
        let (arg, len) = self.cache.take().expect("backward without training forward");
        let (c, b, lout) = (dy.channels(), dy.batch, dy.len);
        let mut dx = Array2::zeros((c, b * len));
        for ci in 0..c {
            for bi in 0..b {
                for t in 0..lout {
                    let src = arg[(ci * b + bi) * lout + t] as usize;
                    dx[[ci, bi * len + src]] += dy.x[[ci, bi * lout + t]];
                }
            }
        }
        Act::new(dx, b, len)
    }
}

/// Mean over time: `[C, B*L]` to `[B, C]`.
pub fn global_avg_pool<S: Scalar>(x: &Act<S>) -> Array2<S> {
    let (c, b, len) = (x.channels(), x.batch, x.len);
    let inv = S::of(1.0 / len as f64);
    Array2::from_shape_fn((b, c), |(bi, ci)| {
        x.x.row(ci).slice(ndarray::s![bi * len..(bi + 1) * len]).sum() * inv
    })
}

pub fn global_avg_pool_backward<S: Scalar>(dy: &Array2<S>, len: usize) -> Act<S> {
    let (b, c) = dy.dim();
    let inv = S::of(1.0 / len as f64);
    let dx = Array2::from_shape_fn((c, b * len), |(ci, j)| dy[[j / len, ci]] * inv);
    Act::new(dx, b, len)
}
