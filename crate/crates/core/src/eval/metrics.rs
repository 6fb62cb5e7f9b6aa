use ndarray::{Array2, ArrayView1, Axis, Zip};
use serde::{Deserialize, Serialize};

use super::roc::roc_curve;
use crate::error::{Error, Result};

fn check_shapes<A, B>(a: &Array2<A>, b: &Array2<B>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!("{:?} vs {:?}", a.dim(), b.dim())));
    }
    Ok(())
}

/// Confusion counts over any set of cells.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Counts {
    pub fn of<'a>(
        pred: impl IntoIterator<Item = &'a bool>,
        truth: impl IntoIterator<Item = &'a bool>,
    ) -> Self {
        let mut c = Self::default();
        for (&p, &t) in pred.into_iter().zip(truth) {
            match (p, t) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn prf(&self) -> Prf {
        let precision = ratio(self.tp, self.tp + self.fp);
        let recall = ratio(self.tp, self.tp + self.fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Prf {
            precision,
            recall,
            f1,
        }
    }
}

/// `num / den`, or 0 when `den` is 0.
fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Fraction of disagreeing cells.
pub fn hamming_loss(pred: &Array2<bool>, truth: &Array2<bool>) -> Result<f64> {
    check_shapes(pred, truth)?;
    let wrong = Zip::from(pred).and(truth).fold(0usize, |a, p, t| a + (p != t) as usize);
    Ok(ratio(wrong, pred.len()))
}

/// Precision, recall and F1 from TP/FP/FN pooled over all cells.
pub fn micro_prf(pred: &Array2<bool>, truth: &Array2<bool>) -> Result<Prf> {
    check_shapes(pred, truth)?;
    Ok(Counts::of(pred.iter(), truth.iter()).prf())
}

fn set_jaccard(p: ArrayView1<bool>, t: ArrayView1<bool>) -> f64 {
    let c = Counts::of(p.iter(), t.iter());
    let union = c.tp + c.fp + c.fn_;
    if union == 0 {
        1.0
    } else {
        c.tp as f64 / union as f64
    }
}

/// Mean over records of `|pred ∩ truth| / |pred ∪ truth|`; an empty union
/// scores 1.
pub fn sample_jaccard_index(pred: &Array2<bool>, truth: &Array2<bool>) -> Result<f64> {
    check_shapes(pred, truth)?;
    let m = pred.dim().0;
    if m == 0 {
        return Ok(1.0);
    }
    let total: f64 = pred
        .outer_iter()
        .zip(truth.outer_iter())
        .map(|(p, t)| set_jaccard(p, t))
        .sum();
    Ok(total / m as f64)
}

/// `TP / (TP + FP + FN)` pooled over all cells; 1 when all three are 0.
pub fn micro_jaccard(pred: &Array2<bool>, truth: &Array2<bool>) -> Result<f64> {
    check_shapes(pred, truth)?;
    let c = Counts::of(pred.iter(), truth.iter());
    let union = c.tp + c.fp + c.fn_;
    Ok(if union == 0 {
        1.0
    } else {
        c.tp as f64 / union as f64
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelMetrics {
    pub label: String,
    pub support: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1_score: f64,
    /// `None` when the column holds a single class.
    pub auc: Option<f64>,
}

/// One row per column; `names` labels the rows.
pub fn per_label_metrics(
    pred: &Array2<bool>,
    truth: &Array2<bool>,
    scores: &Array2<f64>,
    names: &[String],
) -> Result<Vec<LabelMetrics>> {
    check_shapes(pred, truth)?;
    check_shapes(pred, scores)?;
    if names.len() != pred.dim().1 {
        return Err(Error::Shape(format!(
            "{} names for {} columns",
            names.len(),
            pred.dim().1
        )));
    }
    let mut rows = Vec::with_capacity(names.len());
    for (c, name) in names.iter().enumerate() {
        let (p, t) = (pred.column(c), truth.column(c));
        let counts = Counts::of(p.iter(), t.iter());
        let prf = counts.prf();
        let s: Vec<f64> = scores.column(c).to_vec();
        let tv: Vec<bool> = t.to_vec();
        rows.push(LabelMetrics {
            label: name.clone(),
            support: counts.tp + counts.fn_,
            accuracy: ratio(counts.tp + counts.tn, counts.total()),
            precision: prf.precision,
            recall: prf.recall,
            f1_score: prf.f1,
            auc: roc_curve(&s, &tv).auc,
        });
    }
    Ok(rows)
}

/// `pred(r, c) = score(r, c) >= thresholds[c]`.
pub fn binarize(scores: &Array2<f64>, thresholds: &[f64]) -> Result<Array2<bool>> {
    if thresholds.len() != scores.dim().1 {
        return Err(Error::Shape(format!(
            "{} thresholds for {} columns",
            thresholds.len(),
            scores.dim().1
        )));
    }
    if let Some(t) = thresholds.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
        return Err(Error::Config(format!("threshold {t} outside (0, 1)")));
    }
    let mut pred = Array2::from_elem(scores.dim(), false);
    for (c, mut col) in pred.axis_iter_mut(Axis(1)).enumerate() {
        Zip::from(&mut col)
            .and(scores.column(c))
            .for_each(|p, &s| *p = s >= thresholds[c]);
    }
    Ok(pred)
}

pub const DEFAULT_THRESHOLD: f64 = 0.5;

fn column_f1(scores: ArrayView1<f64>, truth: ArrayView1<bool>, threshold: f64) -> f64 {
    let p: Vec<bool> = scores.iter().map(|&s| s >= threshold).collect();
    Counts::of(p.iter(), truth.iter()).prf().f1
}

/// Per-label thresholds tuned on held-out scores.
///
/// Each label's candidate is the threshold (from 0.5 and the observed
/// scores) with the best per-label F1; it replaces 0.5 only if pooled
/// micro-F1 does not drop. So neither any per-label F1 nor micro-F1 can fall
/// below its value at 0.5 on the tuning data.
pub fn tune_thresholds(scores: &Array2<f64>, truth: &Array2<bool>) -> Result<Vec<f64>> {
    check_shapes(scores, truth)?;
    let cols = scores.dim().1;
    let mut thresholds = vec![DEFAULT_THRESHOLD; cols];
    let mut current = micro_prf(&binarize(scores, &thresholds)?, truth)?.f1;
    for c in 0..cols {
        let (s, t) = (scores.column(c), truth.column(c));
        let mut candidates: Vec<f64> = s.iter().copied().filter(|v| *v > 0.0 && *v < 1.0).collect();
        candidates.sort_by(|a, b| b.total_cmp(a));
        candidates.dedup();
        let mut best = (DEFAULT_THRESHOLD, column_f1(s, t, DEFAULT_THRESHOLD));
        for &cand in &candidates {
            let f1 = column_f1(s, t, cand);
            if f1 > best.1 {
                best = (cand, f1);
            }
        }
        if best.0 == DEFAULT_THRESHOLD {
            continue;
        }
        let mut trial = thresholds.clone();
        trial[c] = best.0;
        let f1 = micro_prf(&binarize(scores, &trial)?, truth)?.f1;
        if f1 >= current {
            thresholds = trial;
            current = f1;
        }
    }
    Ok(thresholds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn hamming_examples() {
        let t = array![[true, false], [false, true]];
        assert_eq!(hamming_loss(&t, &t).unwrap(), 0.0);
        assert_eq!(hamming_loss(&t.mapv(|v| !v), &t).unwrap(), 1.0);
        let truth = Array2::from_elem((2, 26), false);
        let mut pred = truth.clone();
        pred[[0, 1]] = true;
        pred[[1, 5]] = true;
        pred[[1, 25]] = true;
        assert_eq!(hamming_loss(&pred, &truth).unwrap(), 3.0 / 52.0);
    }

    #[test]
    fn micro_examples() {
        let t = array![[true, false], [false, true]];
        assert_eq!(micro_prf(&t, &t).unwrap(), Prf { precision: 1.0, recall: 1.0, f1: 1.0 });
        let none = Array2::from_elem((2, 2), false);
        assert_eq!(micro_prf(&none, &t).unwrap(), Prf { precision: 0.0, recall: 0.0, f1: 0.0 });
        let c = Counts { tp: 3, fp: 1, fn_: 2, tn: 0 };
        let prf = c.prf();
        assert_eq!((prf.precision, prf.recall), (0.75, 0.6));
        assert!((prf.f1 - 2.0 * 0.75 * 0.6 / 1.35).abs() < 1e-15);
    }

    #[test]
    fn jaccard_examples() {
        let t = array![[true, true, false], [true, false, false]];
        assert_eq!(sample_jaccard_index(&t, &t).unwrap(), 1.0);
        let p = array![[false, true, true], [true, false, false]];
        assert!((sample_jaccard_index(&p, &t).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        let a = array![[true, false]];
        let b = array![[false, true]];
        assert_eq!(sample_jaccard_index(&a, &b).unwrap(), 0.0);
        let empty = array![[false, false]];
        assert_eq!(sample_jaccard_index(&empty, &empty).unwrap(), 1.0);
    }

    #[test]
    fn all_negative_label_row() {
        let f = Array2::from_elem((4, 1), false);
        let rows = per_label_metrics(&f, &f, &Array2::from_elem((4, 1), 0.1), &["x".into()]).unwrap();
        let r = &rows[0];
        assert_eq!((r.accuracy, r.precision, r.recall, r.f1_score), (1.0, 0.0, 0.0, 0.0));
        assert_eq!(r.auc, None);
    }

    #[test]
    fn binarize_rules() {
        let s = array![[0.5, 0.4]];
        assert_eq!(binarize(&s, &[0.5, 0.5]).unwrap(), array![[true, false]]);
        assert!(binarize(&s, &[0.0, 0.5]).is_err());
        assert!(binarize(&s, &[0.5]).is_err());
    }

    #[test]
    fn tuning_never_hurts_on_tuning_data() {
        let scores = array![[0.3, 0.9], [0.2, 0.6], [0.45, 0.55], [0.1, 0.7]];
        let truth = array![[true, true], [false, false], [true, false], [false, true]];
        let th = tune_thresholds(&scores, &truth).unwrap();
        let base = binarize(&scores, &[0.5, 0.5]).unwrap();
        let tuned = binarize(&scores, &th).unwrap();
        assert!(micro_prf(&tuned, &truth).unwrap().f1 >= micro_prf(&base, &truth).unwrap().f1);
        assert!(th[0] < 0.5);
    }
}
