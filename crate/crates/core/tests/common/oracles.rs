//! Independent oracles shared by the property tests and the acceptance
//! suite. Each check returns its worst observed error; callers compare it
//! with their own tolerance.

#![allow(dead_code)]

use ecg_siglip::encoders::{
    normalize_and_pair, ContrastiveHead, ContrastiveModel, EmbeddingBatch, HeadParams, ModelConfig,
    SignalEncoderConfig, TextEncoderConfig,
};
use ecg_siglip::eval::{hamming_loss, micro_jaccard, micro_prf, per_label_metrics, sample_jaccard_index};
use ecg_siglip::labels::{render_training_text, FindingLabel, LabelSet, NUM_FINDINGS};
use ecg_siglip::loss::{build_target_matrix, sigmoid_contrastive_loss, LossMode, TargetMatrix};
use ecg_siglip::nn::{normal_array, Module, Visitor};
use ndarray::{Array2, ArrayView2, ArrayViewMutD, Ix2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Direct transcription of the pairwise loss, independent of the library.
pub fn oracle_loss(zimg: &Array2<f64>, ztxt: &Array2<f64>, t_prime: f64, b: f64, targets: &Array2<f64>) -> f64 {
    let n = zimg.nrows();
    let t = t_prime.exp();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            let cos: f64 = (0..zimg.ncols()).map(|k| zimg[[i, k]] * ztxt[[j, k]]).sum();
            let y = 2.0 * targets[[i, j]] - 1.0;
            total += (1.0 + (-y * (t * cos + b)).exp()).ln();
        }
    }
    total / n as f64
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Relative error, or 0 when both sides are within `floor` of each other.
fn err_above_floor(a: f64, b: f64, floor: f64) -> f64 {
    if (a - b).abs() < floor {
        0.0
    } else {
        rel_err(a, b)
    }
}

/// Non-empty sets over the first four findings, so overlaps are common.
pub fn random_labels(rng: &mut ChaCha8Rng, n: usize) -> Vec<LabelSet> {
    (0..n)
        .map(|_| {
            let mut s = LabelSet::default();
            while s.is_empty() {
                for id in 0..4 {
                    if rng.random_bool(0.4) {
                        s.insert(FindingLabel::new(id).unwrap());
                    }
                }
            }
            s
        })
        .collect()
}

pub fn random_batch(rng: &mut ChaCha8Rng, n: usize, d: usize) -> EmbeddingBatch {
    let img: Array2<f64> = normal_array(Ix2(n, d), 1.0, rng);
    let txt: Array2<f64> = normal_array(Ix2(n, d), 1.0, rng);
    let head = HeadParams {
        t_prime: rng.random_range(-0.5..2.5),
        bias: rng.random_range(-5.0..1.0),
    };
    normalize_and_pair(&img, &txt, head).unwrap()
}

/// Largest |standard − jaccard| loss over random batches of pairwise
/// disjoint single-finding sets, n in 1..=8.
pub fn disjoint_mode_gap(batches: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..batches {
        let n = rng.random_range(1..=8);
        let mut ids: Vec<usize> = (0..NUM_FINDINGS).collect();
        let mut sets = Vec::with_capacity(n);
        for _ in 0..n {
            let id = ids.swap_remove(rng.random_range(0..ids.len()));
            sets.push(LabelSet::single(FindingLabel::new(id).unwrap()));
        }
        let batch = random_batch(&mut rng, n, 8);
        let a = sigmoid_contrastive_loss(&batch, &build_target_matrix(&sets, LossMode::Standard).unwrap()).unwrap();
        let b = sigmoid_contrastive_loss(&batch, &build_target_matrix(&sets, LossMode::Jaccard).unwrap()).unwrap();
        worst = worst.max((a.loss - b.loss).abs());
    }
    worst
}

/// Worst relative error of every analytic loss gradient against central
/// differences of the oracle, over `trials` batches with n ≤ 5. Pairs that
/// agree to 1e-10 absolute count as exact.
pub fn loss_gradcheck(trials: usize, seed: u64) -> f64 {
    let h = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for trial in 0..trials {
        let n = 1 + trial % 5;
        let batch = random_batch(&mut rng, n, 6);
        let mode = if trial % 2 == 0 { LossMode::Standard } else { LossMode::Jaccard };
        let targets = build_target_matrix(&random_labels(&mut rng, n), mode).unwrap();
        let y = &targets.values;
        let l = sigmoid_contrastive_loss(&batch, &targets).unwrap();
        let f = |zi: &Array2<f64>, zt: &Array2<f64>, tp: f64, b: f64| oracle_loss(zi, zt, tp, b, y);
        let (tp, b) = (batch.head.t_prime, batch.head.bias);
        worst = worst.max(rel_err(l.loss, f(&batch.zimg, &batch.ztxt, tp, b)));

        for (which, analytic) in [(0, &l.d_zimg), (1, &l.d_ztxt)] {
            for idx in ndarray::indices(analytic.dim()) {
                let (mut p, mut m) = (batch.clone(), batch.clone());
                let (pz, mz) = if which == 0 { (&mut p.zimg, &mut m.zimg) } else { (&mut p.ztxt, &mut m.ztxt) };
                pz[idx] += h;
                mz[idx] -= h;
                let fd = (f(&p.zimg, &p.ztxt, tp, b) - f(&m.zimg, &m.ztxt, tp, b)) / (2.0 * h);
                worst = worst.max(err_above_floor(fd, analytic[idx], 1e-10));
            }
        }
        let fd_t = (f(&batch.zimg, &batch.ztxt, tp + h, b) - f(&batch.zimg, &batch.ztxt, tp - h, b)) / (2.0 * h);
        let fd_b = (f(&batch.zimg, &batch.ztxt, tp, b + h) - f(&batch.zimg, &batch.ztxt, tp, b - h)) / (2.0 * h);
        worst = worst.max(rel_err(fd_t, l.d_t_prime)).max(rel_err(fd_b, l.d_bias));
    }
    worst
}

pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        signal: SignalEncoderConfig {
            in_leads: 12,
            channels: [2, 2, 2, 2],
            blocks_per_stage: 1,
            input_decimation: 1,
        },
        text: TextEncoderConfig::Toy { table_dim: 3 },
        embed_dim: 4,
    }
}

struct Nudge<'a> {
    name: &'a str,
    index: usize,
    delta: f64,
}

impl Visitor<f64> for Nudge<'_> {
    fn param(&mut self, name: &str, mut value: ArrayViewMutD<f64>, _: ArrayViewMutD<f64>) {
        if name == self.name {
            *value.iter_mut().nth(self.index).unwrap() += self.delta;
        }
    }
}

#[derive(Default)]
struct Grads(Vec<(String, Vec<f64>)>);

impl Visitor<f64> for Grads {
    fn param(&mut self, name: &str, _: ArrayViewMutD<f64>, grad: ArrayViewMutD<f64>) {
        self.0.push((name.to_string(), grad.iter().copied().collect()));
    }
}

fn model_loss(model: &mut ContrastiveModel<f64>, signals: &[ArrayView2<f64>], texts: &[String], targets: &TargetMatrix) -> f64 {
    let batch = model.pair(signals, texts, true).unwrap();
    sigmoid_contrastive_loss(&batch, targets).unwrap().loss
}

pub struct NetworkGradcheck {
    pub tensors: usize,
    /// Worst `‖fd − analytic‖ / max(‖fd‖, ‖analytic‖)` over parameter tensors.
    pub worst_tensor: f64,
    pub worst_tensor_name: String,
    /// Worst relative error over sampled input positions.
    pub worst_input: f64,
}

/// End-to-end check of a tiny network: 3 records of length 64, Jaccard
/// targets, every parameter perturbed by central differences.
pub fn tiny_network_gradcheck(seed: u64) -> NetworkGradcheck {
    let h = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = ContrastiveModel::<f64>::new(tiny_config(), 4).unwrap();
    model.head = ContrastiveHead::new(0.7, -1.0);
    let signals: Vec<Array2<f64>> = (0..3).map(|_| normal_array(Ix2(12, 64), 1.0, &mut rng)).collect();
    let views: Vec<_> = signals.iter().map(|s| s.view()).collect();
    let labels = random_labels(&mut rng, 3);
    let texts: Vec<String> = labels.iter().map(|l| render_training_text(*l).unwrap()).collect();
    let targets = build_target_matrix(&labels, LossMode::Jaccard).unwrap();

    model.zero_grad();
    let out = model.forward_backward(&views, &texts, &targets).unwrap();
    let mut grads = Grads::default();
    model.visit("", &mut grads);

    let mut report = NetworkGradcheck {
        tensors: grads.0.len(),
        worst_tensor: 0.0,
        worst_tensor_name: String::new(),
        worst_input: 0.0,
    };
    for (name, analytic) in &grads.0 {
        let mut fd = Vec::with_capacity(analytic.len());
        for index in 0..analytic.len() {
            model.visit("", &mut Nudge { name, index, delta: h });
            let lp = model_loss(&mut model, &views, &texts, &targets);
            model.visit("", &mut Nudge { name, index, delta: -2.0 * h });
            let lm = model_loss(&mut model, &views, &texts, &targets);
            model.visit("", &mut Nudge { name, index, delta: h });
            fd.push((lp - lm) / (2.0 * h));
        }
        let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
        let diff: f64 = fd.iter().zip(analytic).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let e = diff / norm(&fd).max(norm(analytic)).max(1e-8);
        if e > report.worst_tensor {
            report.worst_tensor = e;
            report.worst_tensor_name = name.clone();
        }
    }

    for &(r, l, t) in &[(0, 0, 0), (1, 5, 31), (2, 11, 63), (0, 7, 12)] {
        let bump = |d: f64| {
            let mut s = signals.clone();
            s[r][[l, t]] += d;
            s
        };
        let (sp, sm) = (bump(h), bump(-h));
        let vp: Vec<_> = sp.iter().map(|s| s.view()).collect();
        let vm: Vec<_> = sm.iter().map(|s| s.view()).collect();
        let fd = (model_loss(&mut model, &vp, &texts, &targets) - model_loss(&mut model, &vm, &texts, &targets)) / (2.0 * h);
        let analytic = out.d_input.x[[l, r * 64 + t]];
        report.worst_input = report.worst_input.max(err_above_floor(fd, analytic, 1e-9));
    }
    report
}

pub struct Instance {
    pub pred: Array2<bool>,
    pub truth: Array2<bool>,
    pub scores: Array2<f64>,
}

pub fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let m = rng.random_range(1..40);
    let k = rng.random_range(1..8);
    let p_true = rng.random_range(0.05..0.6);
    let truth = Array2::from_shape_fn((m, k), |_| rng.random_bool(p_true));
    // Coarse scores produce ties.
    let coarse = rng.random_bool(0.5);
    let scores = Array2::from_shape_fn((m, k), |_| {
        let s: f64 = rng.random_range(0.001..0.999);
        if coarse {
            (s * 10.0).round().clamp(1.0, 9.0) / 10.0
        } else {
            s
        }
    });
    let pred = scores.mapv(|s| s >= 0.5);
    Instance { pred, truth, scores }
}

fn div(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        0.0
    } else {
        a / b
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Mann-Whitney: fraction of (positive, negative) pairs ranked correctly,
/// ties counting one half.
pub fn mann_whitney(scores: &[f64], truth: &[bool]) -> Option<f64> {
    let pos: Vec<f64> = scores.iter().zip(truth).filter(|(_, &t)| t).map(|(s, _)| *s).collect();
    let neg: Vec<f64> = scores.iter().zip(truth).filter(|(_, &t)| !t).map(|(s, _)| *s).collect();
    if pos.is_empty() || neg.is_empty() {
        return None;
    }
    let mut wins = 0.0;
    for p in &pos {
        for n in &neg {
            wins += if p > n {
                1.0
            } else if p == n {
                0.5
            } else {
                0.0
            };
        }
    }
    Some(wins / (pos.len() * neg.len()) as f64)
}

/// Worst absolute gap between library metrics and brute-force counts over
/// `instances` random instances. A definedness mismatch of AUC is infinite.
pub fn metric_oracle_gap(instances: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut see = |a: f64, b: f64| worst = worst.max((a - b).abs());
    for _ in 0..instances {
        let Instance { pred, truth, scores } = random_instance(&mut rng);
        let (m, k) = pred.dim();
        let (mut tp, mut fp, mut fnn, mut wrong) = (0.0, 0.0, 0.0, 0.0);
        let mut jac = 0.0;
        for i in 0..m {
            let (mut inter, mut union) = (0.0, 0.0);
            for c in 0..k {
                let (p, t) = (pred[[i, c]], truth[[i, c]]);
                tp += (p && t) as u8 as f64;
                fp += (p && !t) as u8 as f64;
                fnn += (!p && t) as u8 as f64;
                wrong += (p != t) as u8 as f64;
                inter += (p && t) as u8 as f64;
                union += (p || t) as u8 as f64;
            }
            jac += if union == 0.0 { 1.0 } else { inter / union };
        }
        let (p, r) = (div(tp, tp + fp), div(tp, tp + fnn));
        let prf = micro_prf(&pred, &truth).unwrap();
        see(hamming_loss(&pred, &truth).unwrap(), wrong / (m * k) as f64);
        see(prf.precision, p);
        see(prf.recall, r);
        see(prf.f1, f1(p, r));
        see(sample_jaccard_index(&pred, &truth).unwrap(), jac / m as f64);
        let u = tp + fp + fnn;
        see(micro_jaccard(&pred, &truth).unwrap(), if u == 0.0 { 1.0 } else { tp / u });

        let names: Vec<String> = (0..k).map(|c| format!("l{c}")).collect();
        let rows = per_label_metrics(&pred, &truth, &scores, &names).unwrap();
        for (c, row) in rows.iter().enumerate() {
            let (pc, tc) = (pred.column(c).to_vec(), truth.column(c).to_vec());
            let count = |f: &dyn Fn(bool, bool) -> bool| pc.iter().zip(&tc).filter(|(a, b)| f(**a, **b)).count() as f64;
            let (tp, fp, fnn, tn) = (count(&|a, b| a && b), count(&|a, b| a && !b), count(&|a, b| !a && b), count(&|a, b| !a && !b));
            let (p, r) = (div(tp, tp + fp), div(tp, tp + fnn));
            see(row.precision, p);
            see(row.recall, r);
            see(row.f1_score, f1(p, r));
            see(row.accuracy, (tp + tn) / m as f64);
            see(row.support as f64, tp + fnn);
            match (row.auc, mann_whitney(&scores.column(c).to_vec(), &tc)) {
                (Some(a), Some(b)) => see(a, b),
                (None, None) => {}
                _ => see(f64::INFINITY, 0.0),
            }
        }
    }
    worst
}
