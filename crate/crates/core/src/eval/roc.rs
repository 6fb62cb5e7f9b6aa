use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    /// `None` when truth holds only one class.
    pub auc: Option<f64>,
}

/// Sweeps thresholds over the unique scores in descending order, starting
/// from `(0, 0)` at `+inf`. Equal scores form a single step, so ties add a
/// diagonal segment. A rate whose class is empty is reported as 0.
pub fn roc_curve(scores: &[f64], truth: &[bool]) -> RocCurve {
    assert_eq!(scores.len(), truth.len(), "scores and truth lengths differ");
    let pos = truth.iter().filter(|&&t| t).count();
    let neg = truth.len() - pos;
    let rate = |k: usize, n: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if truth[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            fpr: rate(fp, neg),
            tpr: rate(tp, pos),
            threshold: s,
        });
    }

    let auc = (pos > 0 && neg > 0).then(|| {
        points
            .windows(2)
            .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) * 0.5)
            .sum()
    });
    RocCurve { points, auc }
}

impl RocCurve {
    /// CSV with header `fpr,tpr,threshold`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("fpr,tpr,threshold\n");
        for p in &self.points {
            writeln!(out, "{},{},{}", p.fpr, p.tpr, p.threshold).expect("string write");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separated_and_constant() {
        let c = roc_curve(&[0.9, 0.8, 0.3, 0.1], &[true, true, false, false]);
        assert_eq!(c.auc, Some(1.0));
        let flat = roc_curve(&[0.4; 4], &[true, false, true, false]);
        assert_eq!(flat.auc, Some(0.5));
        assert_eq!(flat.points.len(), 2);
    }

    #[test]
    fn single_class_is_undefined() {
        let c = roc_curve(&[0.2, 0.7], &[false, false]);
        assert_eq!(c.auc, None);
        assert_eq!(c.points.len(), 3);
    }

    #[test]
    fn csv_rows() {
        let c = roc_curve(&[0.9, 0.9, 0.1], &[true, false, false]);
        let csv = c.to_csv();
        assert_eq!(csv.lines().count(), 1 + 3);
        assert!(csv.lines().nth(1).unwrap().ends_with(",inf"));
    }
}
