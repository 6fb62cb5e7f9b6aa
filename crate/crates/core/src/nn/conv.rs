use ndarray::{Array2, Ix2};
use rand::Rng;

use super::{he_normal, join, Act, Module, Param, Scalar, Visitor};

/// 1D convolution without bias. Weight is stored `[out, in * kernel]`,
/// row-major over `(in, kernel)`.
#[derive(Clone, Debug)]
pub struct Conv1d<S: Scalar> {
    pub weight: Param<S, Ix2>,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    cache: Option<(Array2<S>, usize)>,
}

impl<S: Scalar> Conv1d<S> {
    pub fn new<R: Rng + ?Sized>(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut R,
    ) -> Self {
        let weight = he_normal(
            Ix2(out_channels, in_channels * kernel),
            out_channels * kernel,
            rng,
        );
        Self {
            weight: Param::new(weight),
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            cache: None,
        }
    }

    pub fn out_len(&self, len: usize) -> usize {
        (len + 2 * self.padding - self.kernel) / self.stride + 1
    }

    /// Output positions `t` whose input index `t * stride + k - padding`
    /// lies inside `[0, len)`.
    fn valid_range(&self, k: usize, len: usize, lout: usize) -> (usize, usize) {
        let (s, p) = (self.stride, self.padding);
        let lo = if k >= p { 0 } else { (p - k).div_ceil(s) };
        let hi = if len + p > k {
            ((len + p - k - 1) / s + 1).min(lout)
        } else {
            0
        };
        (lo, hi.max(lo))
    }

    fn im2col(&self, x: &Act<S>, lout: usize) -> Array2<S> {
        let (b, len, k) = (x.batch, x.len, self.kernel);
        let mut cols = Array2::zeros((self.in_channels * k, b * lout));
        let xs = x.x.as_standard_layout();
        for ci in 0..self.in_channels {
            let xrow = xs.row(ci);
            let xrow = xrow.as_slice().expect("contiguous");
            for kk in 0..k {
                let (lo, hi) = self.valid_range(kk, len, lout);
                let mut crow = cols.row_mut(ci * k + kk);
                let crow = crow.as_slice_mut().expect("contiguous");
                for bi in 0..b {
                    let xb = &xrow[bi * len..(bi + 1) * len];
                    let cb = &mut crow[bi * lout..(bi + 1) * lout];
                    if self.stride == 1 {
                        let start = lo + kk - self.padding;
                        cb[lo..hi].copy_from_slice(&xb[start..start + hi - lo]);
                    } else {
                        for t in lo..hi {
                            cb[t] = xb[t * self.stride + kk - self.padding];
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, cols: &Array2<S>, batch: usize, len: usize, lout: usize) -> Array2<S> {
        let k = self.kernel;
        let mut dx = Array2::zeros((self.in_channels, batch * len));
        for ci in 0..self.in_channels {
            let mut xrow = dx.row_mut(ci);
            let xrow = xrow.as_slice_mut().expect("contiguous");
            for kk in 0..k {
                let (lo, hi) = self.valid_range(kk, len, lout);
                let crow = cols.row(ci * k + kk);
                let crow = crow.as_slice().expect("contiguous");
                for bi in 0..batch {
                    let xb = &mut xrow[bi * len..(bi + 1) * len];
                    let cb = &crow[bi * lout..(bi + 1) * lout];
                    for t in lo..hi {
                        xb[t * self.stride + kk - self.padding] += cb[t];
                    }
                }
            }
        }
        dx
    }

    pub fn forward(&mut self, x: &Act<S>, train: bool) -> Act<S> {
        assert_eq!(x.channels(), self.in_channels, "conv input channels");
        let lout = self.out_len(x.len);
        let cols = self.im2col(x, lout);
        let y = self.weight.value.dot(&cols);
        self.cache = train.then_some((cols, x.len));
        Act::new(y, x.batch, lout)
    }

    pub fn backward(&mut self, dy: &Act<S>) -> Act<S> {
        let (cols, len) = self.cache.take().expect("backward without training forward");
        self.weight.grad += &dy.x.dot(&cols.t());
        let dcols = self.weight.value.t().dot(&dy.x);
        let dx = self.col2im(&dcols, dy.batch, len, dy.len);
        Act::new(dx, dy.batch, len)
    }
}

impl<S: Scalar> Module<S> for Conv1d<S> {
    fn visit(&mut self, prefix: &str, v: &mut dyn Visitor<S>) {
        self.weight.visit(&join(prefix, "weight"), v);
    }
}
