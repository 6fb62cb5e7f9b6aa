//! Label-conditioned synthetic 12-lead ECG corpus.
//!
//! A record's signal is a sinus template whose morphology parameters are
//! modified once per finding, in vocabulary order, and then rendered beat by
//! beat. Findings without a crisp ECG correlate get deliberately weak or
//! noisy effects.

mod drift;
mod morphology;
mod render;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use drift::{apply_drift, DriftParams, InstitutionDrift};
pub use morphology::{Conduction, Ectopy, LeadVector, MorphologyParams};

use crate::dataset::{DatasetManifest, EcgRecord, ManifestEntry};
use crate::error::{Error, Result};
use crate::labels::{FindingLabel, LabelSet, NUM_FINDINGS};
use crate::signal::{self, Signal};

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const SIGNAL_DIR: &str = "signals";

/// Morphology parameters for a label set, deterministic in `seed`.
pub fn morphology_for(labels: LabelSet, seed: u64) -> Result<(MorphologyParams, ChaCha8Rng)> {
    if labels.is_empty() {
        return Err(Error::EmptyLabelSet);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = MorphologyParams::sample_individual(&mut rng);
    params.apply_labels(labels, &mut rng);
    params.validate()?;
    Ok((params, rng))
}

pub fn generate_signal(labels: LabelSet, seed: u64) -> Result<Signal> {
    let (params, mut rng) = morphology_for(labels, seed)?;
    Ok(render::render(&params, &mut rng))
}

/// Renders an arbitrary parameter set; used for controlled experiments.
pub fn render_params(params: &MorphologyParams, seed: u64) -> Result<Signal> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(render::render(params, &mut rng))
}

pub fn generate_record(labels: LabelSet, seed: u64) -> Result<EcgRecord> {
    let signal = generate_signal(labels, seed)?;
    EcgRecord::new(
        format!("synthetic-{seed}"),
        format!("synthetic-{seed}"),
        "synthetic",
        signal,
        labels,
    )
}

/// Per-label Bernoulli probabilities, serialized as a map from finding name
/// to probability (absent findings have probability 0).
#[derive(Clone, Debug, PartialEq)]
pub struct LabelPrior(pub [f64; NUM_FINDINGS]);

impl LabelPrior {
    pub fn zeros() -> Self {
        Self([0.0; NUM_FINDINGS])
    }

    pub fn with(mut self, label: FindingLabel, p: f64) -> Self {
        self.0[label.id()] = p;
        self
    }

    /// Prevalences for the full vocabulary at desk scale. These are
    /// illustrative choices, not measured hospital statistics.
    pub fn full_vocabulary() -> Self {
        use FindingLabel as F;
        let table = [
            (F::LVH, 0.08),
            (F::LAE, 0.06),
            (F::LOW_EF, 0.06),
            (F::PROLONGED_QT, 0.05),
            (F::TALL_T, 0.03),
            (F::LEFT_AXIS, 0.06),
            (F::PACEMAKER, 0.02),
            (F::IVCD, 0.03),
            (F::RBBB, 0.05),
            (F::LBBB, 0.02),
            (F::FLAT_T, 0.08),
            (F::INVERTED_T, 0.05),
            (F::ST_T, 0.08),
            (F::POOR_R_PROGRESSION, 0.04),
            (F::ABNORMAL_Q, 0.03),
            (F::ANTERIOR_MI, 0.02),
            (F::LATERAL_MI, 0.02),
            (F::INFERIOR_MI, 0.02),
            (F::ANTEROSEPTAL_MI, 0.02),
            (F::PVC, 0.06),
            (F::FREQUENT_PVC, 0.02),
            (F::BIGEMINY, 0.01),
            (F::VT, 0.01),
            (F::COUPLET, 0.01),
            (F::AFIB, 0.06),
        ];
        table.into_iter().fold(Self::zeros(), |p, (l, v)| p.with(l, v))
    }

    /// Overlapping priors over the seven abnormal strong-morphology findings;
    /// records without any of them are "Normal range".
    pub fn strong_morphology() -> Self {
        use FindingLabel as F;
        Self::zeros()
            .with(F::AFIB, 0.12)
            .with(F::PROLONGED_QT, 0.12)
            .with(F::LBBB, 0.08)
            .with(F::RBBB, 0.10)
            .with(F::ST_T, 0.12)
            .with(F::PVC, 0.12)
            .with(F::TALL_T, 0.10)
    }

    pub fn validate(&self) -> Result<()> {
        if self.0.iter().all(|p| (0.0..=1.0).contains(p)) {
            Ok(())
        } else {
            Err(Error::Config("label priors must lie in [0, 1]".into()))
        }
    }

    /// Draws a label set: independent Bernoulli per finding, then "Normal
    /// range" is forced when nothing abnormal was drawn and removed otherwise.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> LabelSet {
        let mut set = LabelSet::EMPTY;
        for l in FindingLabel::all() {
            if rng.random_bool(self.0[l.id()]) {
                set.insert(l);
            }
        }
        let mut abnormal = set;
        abnormal.remove(FindingLabel::NORMAL);
        if abnormal.is_empty() {
            LabelSet::single(FindingLabel::NORMAL)
        } else {
            abnormal
        }
    }
}

impl Serialize for LabelPrior {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let map: BTreeMap<&str, f64> = FindingLabel::all()
            .filter(|l| self.0[l.id()] != 0.0)
            .map(|l| (l.name(), self.0[l.id()]))
            .collect();
        map.serialize(s)
    }
}

impl<'de> Deserialize<'de> for LabelPrior {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let map = BTreeMap::<String, f64>::deserialize(d)?;
        let mut out = Self::zeros();
        for (name, p) in map {
            let l = FindingLabel::from_name(&name).map_err(serde::de::Error::custom)?;
            out.0[l.id()] = p;
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusConfig {
    pub n_patients: usize,
    pub records_per_patient: usize,
    pub label_prior: LabelPrior,
    #[serde(default)]
    pub drift: Option<InstitutionDrift>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_institution")]
    pub institution: String,
}

fn default_institution() -> String {
    "synthetic-a".into()
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_patients == 0 || self.records_per_patient == 0 {
            return Err(Error::Config(
                "n_patients and records_per_patient must be >= 1".into(),
            ));
        }
        self.label_prior.validate()
    }

    pub fn total_records(&self) -> usize {
        self.n_patients * self.records_per_patient
    }
}

fn record_stream(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Label sets of every corpus record, without rendering signals. Matches
/// the labels written by [`generate_corpus`] for the same config.
pub fn sample_corpus_labels(config: &CorpusConfig) -> Vec<LabelSet> {
    (0..config.total_records())
        .map(|i| config.label_prior.sample(&mut record_stream(config.seed, i)))
        .collect()
}

/// Labels and signal for the `index`-th record of a corpus.
pub fn corpus_record(config: &CorpusConfig, index: usize) -> Result<(LabelSet, Signal)> {
    let mut rng = record_stream(config.seed, index);
    let labels = config.label_prior.sample(&mut rng);
    let record_seed: u64 = rng.random();
    let mut signal = generate_signal(labels, record_seed)?;
    if let Some(drift) = &config.drift {
        let params = drift.sample(&mut rng);
        let rec = EcgRecord::new("tmp", "tmp", "tmp", signal, labels)?;
        signal = apply_drift(&rec, &params, rng.random())?.signal;
        signal.mapv_inplace(|v| v.clamp(-render::SIGNAL_LIMIT_MV, render::SIGNAL_LIMIT_MV));
    }
    Ok((labels, signal))
}

/// Writes `manifest.jsonl` and one `.f32` file per record under `out_dir`.
pub fn generate_corpus(config: &CorpusConfig, out_dir: &Path) -> Result<DatasetManifest> {
    config.validate()?;
    let sig_dir = out_dir.join(SIGNAL_DIR);
    fs::create_dir_all(&sig_dir)
        .map_err(|e| Error::io(format!("creating {}", sig_dir.display()), e))?;

    let entries: Vec<ManifestEntry> = (0..config.total_records())
        .into_par_iter()
        .map(|i| {
            let (labels, signal) = corpus_record(config, i)?;
            let record_id = format!("rec{i:06}");
            let rel = format!("{SIGNAL_DIR}/{record_id}.f32");
            signal::save_signal(&out_dir.join(&rel), &signal)?;
            Ok(ManifestEntry {
                record_id,
                patient_id: format!("pat{:05}", i / config.records_per_patient),
                institution: config.institution.clone(),
                labels,
                signal_path: rel,
                split: None,
            })
        })
        .collect::<Result<_>>()?;

    let manifest = DatasetManifest::new(entries, out_dir);
    manifest.write_jsonl(&out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

/// Positive count per finding.
pub fn label_counts(manifest: &DatasetManifest) -> [usize; NUM_FINDINGS] {
    let mut counts = [0; NUM_FINDINGS];
    for r in &manifest.records {
        for l in r.labels.iter() {
            counts[l.id()] += 1;
        }
    }
    counts
}
