//! Zero-shot and classifier scoring, multi-label metrics, ROC curves and
//! evaluation reports.

mod metrics;
mod roc;
mod score;

use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use metrics::{
    binarize, hamming_loss, micro_jaccard, micro_prf, per_label_metrics, sample_jaccard_index,
    tune_thresholds, Counts, LabelMetrics, Prf, DEFAULT_THRESHOLD,
};
pub use roc::{roc_curve, RocCurve, RocPoint};
pub use score::{score_prepared, Scorer};

use crate::dataset::{DatasetManifest, Split};
use crate::error::{Error, Result};
use crate::labels::{FindingLabel, LabelSet, NUM_FINDINGS};
use crate::synth::{apply_drift, InstitutionDrift};
use crate::train::data::prepare_for_eval;

/// Scores and ground truth of one split, full 26-column width.
#[derive(Clone, Debug)]
pub struct SplitScores {
    pub record_ids: Vec<String>,
    pub scores: Array2<f64>,
    pub truth: Array2<bool>,
}

pub fn truth_matrix(labels: &[LabelSet]) -> Array2<bool> {
    Array2::from_shape_fn((labels.len(), NUM_FINDINGS), |(r, c)| {
        labels[r].contains(FindingLabel::new(c).expect("column < 26"))
    })
}

#[derive(Clone, Debug)]
pub struct ScoreOptions {
    /// Raw-sample window for center cropping; `None` scores full signals.
    pub crop_len: Option<usize>,
    /// Applied to every record before preparation, with the seed.
    pub drift: Option<(InstitutionDrift, u64)>,
    pub batch_size: usize,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        Self {
            crop_len: None,
            drift: None,
            batch_size: 64,
        }
    }
}

/// Scores every record of `split`, streaming from disk in batches.
pub fn score_split<M: Scorer + ?Sized>(
    model: &mut M,
    manifest: &DatasetManifest,
    split: Split,
    options: &ScoreOptions,
) -> Result<SplitScores> {
    let entries: Vec<_> = manifest.split(split).collect();
    if entries.is_empty() {
        return Err(Error::Config(format!("split {split} is empty")));
    }
    let config = model.signal_config().clone();
    let mut parts = Vec::new();
    for (b, chunk) in entries.chunks(options.batch_size.max(1)).enumerate() {
        let mut prepared = Vec::with_capacity(chunk.len());
        for (k, e) in chunk.iter().enumerate() {
            let mut rec = manifest.load_record(e)?;
            if let Some((drift, seed)) = &options.drift {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                rng.set_stream((b * options.batch_size.max(1) + k) as u64);
                let params = drift.sample(&mut rng);
                rec = apply_drift(&rec, &params, rng.random())?;
            }
            prepared.push(prepare_for_eval(rec.signal.view(), &config, options.crop_len)?);
        }
        parts.push(score_prepared(model, &prepared, prepared.len())?);
    }
    let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
    let labels: Vec<LabelSet> = entries.iter().map(|e| e.labels).collect();
    Ok(SplitScores {
        record_ids: entries.iter().map(|e| e.record_id.clone()).collect(),
        scores: ndarray::concatenate(ndarray::Axis(0), &views).expect("equal widths"),
        truth: truth_matrix(&labels),
    })
}

/// Every finding, in id order.
pub fn all_labels() -> Vec<FindingLabel> {
    FindingLabel::all().collect()
}

fn select_columns<T: Clone>(m: &Array2<T>, labels: &[FindingLabel]) -> Array2<T> {
    let cols: Vec<usize> = labels.iter().map(|l| l.id()).collect();
    m.select(ndarray::Axis(1), &cols)
}

/// Thresholds for all 26 findings: tuned on `val` for `labels`, 0.5
/// elsewhere.
pub fn tune_on(val: &SplitScores, labels: &[FindingLabel]) -> Result<Vec<f64>> {
    let tuned = tune_thresholds(&select_columns(&val.scores, labels), &select_columns(&val.truth, labels))?;
    let mut out = vec![DEFAULT_THRESHOLD; NUM_FINDINGS];
    for (l, t) in labels.iter().zip(tuned) {
        out[l.id()] = t;
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub split: String,
    pub n_records: usize,
    /// Findings the aggregate metrics are computed over.
    pub labels_evaluated: Vec<String>,
    pub thresholds: Vec<f64>,
    pub hamming_loss: f64,
    pub precision_micro: f64,
    pub recall_micro: f64,
    pub f1_micro: f64,
    pub jaccard_index: f64,
    pub jaccard_micro: f64,
    /// Mean AUC over evaluated findings whose AUC is defined.
    pub macro_auc: Option<f64>,
    /// One row per evaluated finding.
    pub per_label: Vec<LabelMetrics>,
}

/// Metrics over the `labels` columns of `scores`; `thresholds` has one
/// entry per finding.
pub fn metrics_report(
    scores: &SplitScores,
    split: Split,
    thresholds: &[f64],
    labels: &[FindingLabel],
) -> Result<(MetricsReport, Vec<RocCurve>)> {
    if thresholds.len() != NUM_FINDINGS {
        return Err(Error::Shape(format!("{} thresholds, expected {NUM_FINDINGS}", thresholds.len())));
    }
    if labels.is_empty() {
        return Err(Error::Config("no labels to evaluate".into()));
    }
    let s = select_columns(&scores.scores, labels);
    let t = select_columns(&scores.truth, labels);
    let th: Vec<f64> = labels.iter().map(|l| thresholds[l.id()]).collect();
    let pred = binarize(&s, &th)?;
    let names: Vec<String> = labels.iter().map(|l| l.name().to_string()).collect();
    let per_label = per_label_metrics(&pred, &t, &s, &names)?;
    let rocs: Vec<RocCurve> = (0..labels.len())
        .map(|c| roc_curve(&s.column(c).to_vec(), &t.column(c).to_vec()))
        .collect();
    let aucs: Vec<f64> = per_label.iter().filter_map(|r| r.auc).collect();
    let prf = micro_prf(&pred, &t)?;
    let report = MetricsReport {
        split: split.to_string(),
        n_records: scores.record_ids.len(),
        labels_evaluated: names,
        thresholds: th,
        hamming_loss: hamming_loss(&pred, &t)?,
        precision_micro: prf.precision,
        recall_micro: prf.recall,
        f1_micro: prf.f1,
        jaccard_index: sample_jaccard_index(&pred, &t)?,
        jaccard_micro: micro_jaccard(&pred, &t)?,
        macro_auc: (!aucs.is_empty()).then(|| aucs.iter().sum::<f64>() / aucs.len() as f64),
        per_label,
    };
    Ok((report, rocs))
}

/// `<id>_<slug>.csv`, e.g. `25_atrial_fibrillation.csv`.
pub fn roc_file_name(label: FindingLabel) -> String {
    let mut slug = String::new();
    for ch in label.name().chars() {
        if ch.is_ascii_alphanumeric() {
            slug.push(ch.to_ascii_lowercase());
        } else if !slug.ends_with('_') {
            slug.push('_');
        }
    }
    format!("{:02}_{}.csv", label.id(), slug.trim_end_matches('_'))
}

/// Writes ROC curves of `labels` into `dir`.
pub fn write_rocs(dir: &Path, labels: &[FindingLabel], rocs: &[RocCurve]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    for (l, roc) in labels.iter().zip(rocs) {
        let path = dir.join(roc_file_name(*l));
        fs::write(&path, roc.to_csv()).map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    }
    Ok(())
}

/// Writes `report.json` and `roc/<id>_<slug>.csv` per evaluated finding.
pub fn write_report(dir: &Path, report: &MetricsReport, rocs: &[RocCurve]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    let json = serde_json::to_string_pretty(report).map_err(|e| Error::json("metrics report", e))?;
    let path = dir.join("report.json");
    fs::write(&path, json + "\n").map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    let labels = report
        .labels_evaluated
        .iter()
        .map(|n| FindingLabel::from_name(n))
        .collect::<Result<Vec<_>>>()?;
    write_rocs(&dir.join("roc"), &labels, rocs)
}
