//! Metrics checked against brute-force oracles written from the definitions.

mod common;

use common::oracles::{metric_oracle_gap, random_instance, Instance};
use ecg_siglip::eval::{
    binarize, hamming_loss, micro_prf, per_label_metrics, roc_curve, sample_jaccard_index, tune_thresholds,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn metrics_match_brute_force_oracles() {
    let gap = metric_oracle_gap(200, 2024);
    assert!(gap <= 1e-12, "worst gap {gap:e}");
}

#[test]
fn roc_has_one_row_per_unique_score_plus_origin() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let inst = random_instance(&mut rng);
        let s = inst.scores.column(0).to_vec();
        let t = inst.truth.column(0).to_vec();
        let mut uniq = s.clone();
        uniq.sort_by(f64::total_cmp);
        uniq.dedup();
        let curve = roc_curve(&s, &t);
        assert_eq!(curve.points.len(), uniq.len() + 1);
        assert_eq!((curve.points[0].fpr, curve.points[0].tpr), (0.0, 0.0));
        let last = curve.points.last().unwrap();
        let has = |b: bool| t.contains(&b);
        assert_eq!((last.fpr, last.tpr), (has(false) as u8 as f64, has(true) as u8 as f64));
        assert!(curve.points.windows(2).all(|w| w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr && w[1].threshold < w[0].threshold));
    }
}

#[test]
fn tuned_thresholds_never_lower_validation_f1() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..100 {
        let Instance { truth, scores, .. } = random_instance(&mut rng);
        let k = scores.ncols();
        let th = tune_thresholds(&scores, &truth).unwrap();
        let base = binarize(&scores, &vec![0.5; k]).unwrap();
        let tuned = binarize(&scores, &th).unwrap();
        assert!(micro_prf(&tuned, &truth).unwrap().f1 >= micro_prf(&base, &truth).unwrap().f1);
        let names: Vec<String> = (0..k).map(|c| c.to_string()).collect();
        let a = per_label_metrics(&base, &truth, &scores, &names).unwrap();
        let b = per_label_metrics(&tuned, &truth, &scores, &names).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!(y.f1_score >= x.f1_score);
        }
    }
}

proptest! {
    #[test]
    fn auc_is_invariant_under_monotone_transforms(
        scores in prop::collection::vec(0.0f64..1.0, 2..60),
        flips in prop::collection::vec(any::<bool>(), 60),
    ) {
        let truth = &flips[..scores.len()];
        let a = roc_curve(&scores, truth).auc;
        let warped: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() + s * s).collect();
        let b = roc_curve(&warped, truth).auc;
        match (a, b) {
            (Some(a), Some(b)) => prop_assert!((a - b).abs() < 1e-12),
            (a, b) => prop_assert_eq!(a, b),
        }
    }

    #[test]
    fn metrics_stay_in_unit_interval(seed in any::<u64>()) {
        let Instance { pred, truth, .. } = random_instance(&mut ChaCha8Rng::seed_from_u64(seed));
        let prf = micro_prf(&pred, &truth).unwrap();
        for v in [hamming_loss(&pred, &truth).unwrap(), prf.precision, prf.recall, prf.f1, sample_jaccard_index(&pred, &truth).unwrap()] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert_eq!(hamming_loss(&truth, &truth).unwrap(), 0.0);
    }
}
