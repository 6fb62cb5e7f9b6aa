//! Pairwise sigmoid contrastive loss with identity or Jaccard targets, and
//! the class-weighted binary cross-entropy used by the multilabel baseline.

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::encoders::EmbeddingBatch;
use crate::error::{Error, Result};
use crate::labels::{LabelSet, NUM_FINDINGS};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    /// Only the matched pair `(i, i)` is positive.
    #[default]
    Standard,
    /// Pair `(i, j)` targets the Jaccard similarity of the two label sets.
    Jaccard,
}

/// `|a ∩ b| / |a ∪ b|`, with two empty sets scoring 1.
pub fn jaccard_similarity(a: LabelSet, b: LabelSet) -> f64 {
    let union = a.union(b).len();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).len() as f64 / union as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct TargetMatrix {
    pub values: Array2<f64>,
    pub mode: LossMode,
}

impl TargetMatrix {
    pub fn len(&self) -> usize {
        self.values.dim().0
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn build_target_matrix(label_sets: &[LabelSet], mode: LossMode) -> Result<TargetMatrix> {
    let n = label_sets.len();
    if n == 0 {
        return Err(Error::Shape("target matrix needs at least one record".into()));
    }
    let values = match mode {
        LossMode::Standard => Array2::eye(n),
        LossMode::Jaccard => {
            let mut v = Array2::zeros((n, n));
            for i in 0..n {
                for j in i..n {
                    let s = jaccard_similarity(label_sets[i], label_sets[j]);
                    v[[i, j]] = s;
                    v[[j, i]] = s;
                }
            }
            v
        }
    };
    Ok(TargetMatrix { values, mode })
}

/// `log σ(x)` without overflow for large `|x|`.
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Loss value with gradients for every input of the pairwise loss.
#[derive(Clone, Debug)]
pub struct ContrastiveLoss {
    pub loss: f64,
    pub d_zimg: Array2<f64>,
    pub d_ztxt: Array2<f64>,
    pub d_t_prime: f64,
    pub d_bias: f64,
}

/// `-Σ_ij log σ(y_ij (t·zimg_i·ztxt_j + b)) / n` with `y = 2·targets - 1`
/// and `t = exp(t')`.
pub fn sigmoid_contrastive_loss(
    batch: &EmbeddingBatch,
    targets: &TargetMatrix,
) -> Result<ContrastiveLoss> {
    let n = batch.len();
    if targets.values.dim() != (n, n) {
        return Err(Error::Shape(format!(
            "targets {:?} for a batch of {n}",
            targets.values.dim()
        )));
    }
    let t = batch.head.temperature();
    let b = batch.head.bias;
    let cos = batch.cosines();
    let inv_n = 1.0 / n as f64;
    let mut loss = 0.0;
    // g = dL/dlogit = -y σ(-y·logit) / n
    let mut g = Array2::zeros((n, n));
    Zip::from(&mut g)
        .and(&cos)
        .and(&targets.values)
        .for_each(|g, &c, &target| {
            let y = 2.0 * target - 1.0;
            let z = t * c + b;
            loss -= log_sigmoid(y * z);
            *g = -y * sigmoid(-y * z) * inv_n;
        });
    let d_bias = g.sum();
    let d_t_prime = t * (&g * &cos).sum();
    let d_zimg = g.dot(&batch.ztxt) * t;
    let d_ztxt = g.t().dot(&batch.zimg) * t;
    Ok(ContrastiveLoss {
        loss: loss * inv_n,
        d_zimg,
        d_ztxt,
        d_t_prime,
        d_bias,
    })
}

pub const MIN_CLASS_WEIGHT: f64 = 0.5;
pub const MAX_CLASS_WEIGHT: f64 = 50.0;

/// `n_total / (2·n_pos)` per finding, clipped to `[0.5, 50]`; a finding
/// with no positives gets the upper clip.
pub fn class_weights(label_sets: &[LabelSet]) -> [f64; NUM_FINDINGS] {
    let mut pos = [0usize; NUM_FINDINGS];
    for s in label_sets {
        for l in s.iter() {
            pos[l.id()] += 1;
        }
    }
    let n = label_sets.len() as f64;
    pos.map(|p| {
        if p == 0 {
            MAX_CLASS_WEIGHT
        } else {
            (n / (2.0 * p as f64)).clamp(MIN_CLASS_WEIGHT, MAX_CLASS_WEIGHT)
        }
    })
}

#[derive(Clone, Debug)]
pub struct BceLoss {
    pub loss: f64,
    pub d_logits: Array2<f64>,
}

/// Mean over all cells of `w_c·y·(-log σ(z)) + (1-y)·(-log(1-σ(z)))`.
pub fn weighted_bce_loss(
    logits: &Array2<f64>,
    truth: &Array2<bool>,
    class_weights: &[f64],
) -> Result<BceLoss> {
    if logits.dim() != truth.dim() {
        return Err(Error::Shape(format!(
            "logits {:?} vs truth {:?}",
            logits.dim(),
            truth.dim()
        )));
    }
    if class_weights.len() != logits.dim().1 {
        return Err(Error::Shape(format!(
            "{} class weights for {} columns",
            class_weights.len(),
            logits.dim().1
        )));
    }
    if let Some(w) = class_weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
        return Err(Error::Config(format!("class weight {w} must be positive")));
    }
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(Error::NonFinite("baseline logits".into()));
    }
    let cells = logits.len().max(1) as f64;
    let mut loss = 0.0;
    let mut d = Array2::zeros(logits.dim());
    for ((i, c), &z) in logits.indexed_iter() {
        let w = class_weights[c];
        if truth[[i, c]] {
            loss -= w * log_sigmoid(z);
            d[[i, c]] = w * (sigmoid(z) - 1.0) / cells;
        } else {
            loss -= log_sigmoid(-z);
            d[[i, c]] = sigmoid(z) / cells;
        }
    }
    Ok(BceLoss {
        loss: loss / cells,
        d_logits: d,
    })
}
