//! Patient-grouped iterative stratification.
//!
//! Patients are the unit of assignment. At each round the label with the
//! fewest remaining positives is picked, and every unassigned patient
//! carrying it goes to the split that still needs the most positives of
//! that label (ties: most records still wanted, then a seeded coin).
//! A local search of patient moves and swaps then reduces the deviation of
//! each split's label prevalence and size from the global targets.

use std::collections::BTreeMap;

use log::warn;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{DatasetManifest, Split};
use crate::error::{Error, Result};
use crate::labels::{FindingLabel, NUM_FINDINGS};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl SplitRatios {
    pub fn new(train: f64, val: f64, test: f64) -> Result<Self> {
        let r = Self { train, val, test };
        r.validate()?;
        Ok(r)
    }

    fn validate(&self) -> Result<()> {
        let all = self.as_array();
        if all.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Config(format!("split ratios must be positive: {all:?}")));
        }
        if (all.iter().sum::<f64>() - 1.0).abs() > 1e-6 {
            return Err(Error::Config(format!("split ratios must sum to 1: {all:?}")));
        }
        Ok(())
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.train, self.val, self.test]
    }
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.7,
            val: 0.15,
            test: 0.15,
        }
    }
}

struct Patient {
    record_idx: Vec<usize>,
    label_counts: [usize; NUM_FINDINGS],
}

pub fn split_dataset(
    manifest: &DatasetManifest,
    ratios: SplitRatios,
    seed: u64,
) -> Result<DatasetManifest> {
    ratios.validate()?;
    if manifest.records.iter().any(|r| r.labels.is_empty()) {
        return Err(Error::EmptyLabelSet);
    }

    let mut by_patient: BTreeMap<&str, Patient> = BTreeMap::new();
    for (i, r) in manifest.records.iter().enumerate() {
        let p = by_patient.entry(&r.patient_id).or_insert_with(|| Patient {
            record_idx: Vec::new(),
            label_counts: [0; NUM_FINDINGS],
        });
        p.record_idx.push(i);
        for l in r.labels.iter() {
            p.label_counts[l.id()] += 1;
        }
    }
    let mut patients: Vec<Patient> = by_patient.into_values().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    patients.shuffle(&mut rng);

    warn_single_patient_labels(&patients);

    let ratio = ratios.as_array();
    let total_records = manifest.len() as f64;
    let mut wanted_records: [f64; 3] = ratio.map(|r| r * total_records);
    let mut wanted_labels = [[0.0f64; NUM_FINDINGS]; 3];
    let mut remaining = [0usize; NUM_FINDINGS];
    for p in &patients {
        for c in 0..NUM_FINDINGS {
            remaining[c] += p.label_counts[c];
        }
    }
    for s in 0..3 {
        for c in 0..NUM_FINDINGS {
            wanted_labels[s][c] = ratio[s] * remaining[c] as f64;
        }
    }

    let mut assignment: Vec<Option<usize>> = vec![None; patients.len()];
    let mut unassigned = patients.len();
    while unassigned > 0 {
        let label = (0..NUM_FINDINGS)
            .filter(|&c| remaining[c] > 0)
            .min_by_key(|&c| (remaining[c], c))
            .expect("every unassigned patient carries a label");
        for (pi, p) in patients.iter().enumerate() {
            if assignment[pi].is_some() || p.label_counts[label] == 0 {
                continue;
            }
            let split = choose_split(&wanted_labels, &wanted_records, label, &mut rng);
            assignment[pi] = Some(split);
            unassigned -= 1;
            wanted_records[split] -= p.record_idx.len() as f64;
            for c in 0..NUM_FINDINGS {
                wanted_labels[split][c] -= p.label_counts[c] as f64;
                remaining[c] -= p.label_counts[c];
            }
        }
    }

    let mut assignment: Vec<usize> = assignment
        .into_iter()
        .map(|s| s.expect("all patients assigned"))
        .collect();
    refine(&patients, &mut assignment, ratio, &mut rng);

    let mut out = manifest.clone();
    for (p, s) in patients.iter().zip(assignment) {
        let split = Split::ALL[s];
        for &i in &p.record_idx {
            out.records[i].split = Some(split);
        }
    }
    Ok(out)
}

fn choose_split(
    wanted_labels: &[[f64; NUM_FINDINGS]; 3],
    wanted_records: &[f64; 3],
    label: usize,
    rng: &mut ChaCha8Rng,
) -> usize {
    let best_label = (0..3)
        .map(|s| wanted_labels[s][label])
        .fold(f64::NEG_INFINITY, f64::max);
    let tied: Vec<usize> = (0..3)
        .filter(|&s| wanted_labels[s][label] == best_label)
        .collect();
    if tied.len() == 1 {
        return tied[0];
    }
    let best_records = tied
        .iter()
        .map(|&s| wanted_records[s])
        .fold(f64::NEG_INFINITY, f64::max);
    let tied: Vec<usize> = tied
        .into_iter()
        .filter(|&s| wanted_records[s] == best_records)
        .collect();
    tied[rng.random_range(0..tied.len())]
}

/// Per-split record and label counts, with the objective the refinement
/// minimizes: squared prevalence deviation summed over labels and splits,
/// plus squared relative size deviation.
struct Balance {
    ratio: [f64; 3],
    total_records: f64,
    global_prev: [f64; NUM_FINDINGS],
    records: [f64; 3],
    labels: [[f64; NUM_FINDINGS]; 3],
}

impl Balance {
    fn new(patients: &[Patient], assignment: &[usize], ratio: [f64; 3]) -> Self {
        let mut b = Balance {
            ratio,
            total_records: 0.0,
            global_prev: [0.0; NUM_FINDINGS],
            records: [0.0; 3],
            labels: [[0.0; NUM_FINDINGS]; 3],
        };
        for (p, &s) in patients.iter().zip(assignment) {
            b.add(p, s, 1.0);
        }
        b.total_records = b.records.iter().sum();
        for c in 0..NUM_FINDINGS {
            b.global_prev[c] = (0..3).map(|s| b.labels[s][c]).sum::<f64>() / b.total_records;
        }
        b
    }

    fn add(&mut self, p: &Patient, s: usize, sign: f64) {
        self.records[s] += sign * p.record_idx.len() as f64;
        for c in 0..NUM_FINDINGS {
            self.labels[s][c] += sign * p.label_counts[c] as f64;
        }
    }

    fn split_cost(&self, s: usize) -> f64 {
        let target = self.ratio[s] * self.total_records;
        let size = (self.records[s] - target) / target;
        let mut cost = size * size;
        if self.records[s] > 0.0 {
            for c in 0..NUM_FINDINGS {
                let d = self.labels[s][c] / self.records[s] - self.global_prev[c];
                cost += d * d;
            }
        } else {
            cost += self.global_prev.iter().map(|g| g * g).sum::<f64>();
        }
        cost
    }

    /// Cost change if `moves` were applied, leaving `self` unchanged.
    fn delta(&mut self, moves: &[(&Patient, usize, usize)]) -> f64 {
        let mut touched = [false; 3];
        for &(_, from, to) in moves {
            touched[from] = true;
            touched[to] = true;
        }
        let before: f64 = (0..3).filter(|&s| touched[s]).map(|s| self.split_cost(s)).sum();
        for &(p, from, to) in moves {
            self.add(p, from, -1.0);
            self.add(p, to, 1.0);
        }
        let after: f64 = (0..3).filter(|&s| touched[s]).map(|s| self.split_cost(s)).sum();
        for &(p, from, to) in moves {
            self.add(p, to, -1.0);
            self.add(p, from, 1.0);
        }
        after - before
    }
}

const REFINE_PASSES: usize = 8;
const SWAP_PARTNERS: usize = 64;

/// Improves a greedy assignment by single-patient moves and pairwise swaps,
/// accepting only strict cost decreases. Deterministic given `rng`.
fn refine(patients: &[Patient], assignment: &mut [usize], ratio: [f64; 3], rng: &mut ChaCha8Rng) {
    const MIN_GAIN: f64 = 1e-12;
    let n = patients.len();
    let mut bal = Balance::new(patients, assignment, ratio);
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..REFINE_PASSES {
        let mut improved = false;
        order.shuffle(rng);
        for &i in &order {
            let from = assignment[i];
            for to in 0..3 {
                if to == from {
                    continue;
                }
                if bal.delta(&[(&patients[i], from, to)]) < -MIN_GAIN {
                    bal.add(&patients[i], from, -1.0);
                    bal.add(&patients[i], to, 1.0);
                    assignment[i] = to;
                    improved = true;
                    break;
                }
            }
            for _ in 0..SWAP_PARTNERS.min(n) {
                let j = rng.random_range(0..n);
                let (a, b) = (assignment[i], assignment[j]);
                if a == b {
                    continue;
                }
                if bal.delta(&[(&patients[i], a, b), (&patients[j], b, a)]) < -MIN_GAIN {
                    bal.add(&patients[i], a, -1.0);
                    bal.add(&patients[i], b, 1.0);
                    bal.add(&patients[j], b, -1.0);
                    bal.add(&patients[j], a, 1.0);
                    assignment.swap(i, j);
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
}

fn warn_single_patient_labels(patients: &[Patient]) {
    for c in 0..NUM_FINDINGS {
        let carriers = patients.iter().filter(|p| p.label_counts[c] > 0).count();
        if carriers == 1 {
            warn!(
                "all positives of {:?} belong to one patient; the label will be absent from some splits",
                FindingLabel::new(c).map(FindingLabel::name).unwrap_or("?")
            );
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ManifestEntry;
    use crate::labels::LabelSet;

    fn manifest(items: &[(&str, LabelSet)]) -> DatasetManifest {
        let records = items
            .iter()
            .enumerate()
            .map(|(i, (p, l))| ManifestEntry {
                record_id: format!("r{i}"),
                patient_id: p.to_string(),
                institution: "A".into(),
                labels: *l,
                signal_path: format!("r{i}.f32"),
                split: None,
            })
            .collect();
        DatasetManifest::new(records, "")
    }

    fn sizes(m: &DatasetManifest) -> [usize; 3] {
        Split::ALL.map(|s| m.split(s).count())
    }

    #[test]
    fn ten_single_label_patients() {
        let normal = LabelSet::single(FindingLabel::NORMAL);
        let names: Vec<String> = (0..10).map(|i| format!("p{i}")).collect();
        let items: Vec<_> = names.iter().map(|n| (n.as_str(), normal)).collect();
        let ratios = SplitRatios::new(0.8, 0.1, 0.1).unwrap();
        for seed in 0..20 {
            let out = split_dataset(&manifest(&items), ratios, seed).unwrap();
            assert_eq!(sizes(&out), [8, 1, 1], "seed {seed}");
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let items: Vec<_> = (0..40)
            .map(|i| {
                let l = LabelSet::from_bits(1 + (i as u32).wrapping_mul(2654435761u32) % ((1 << 26) - 1));
                (format!("p{}", i / 2), l)
            })
            .collect();
        let refs: Vec<_> = items.iter().map(|(p, l)| (p.as_str(), *l)).collect();
        let m = manifest(&refs);
        let a = split_dataset(&m, SplitRatios::default(), 3).unwrap();
        let b = split_dataset(&m, SplitRatios::default(), 3).unwrap();
        assert_eq!(a, b);
        a.validate().unwrap();
    }

    #[test]
    fn rejects_bad_ratios() {
        assert!(SplitRatios::new(0.5, 0.5, 0.0).is_err());
        assert!(SplitRatios::new(0.5, 0.3, 0.3).is_err());
    }

    #[test]
    fn single_patient_label_still_splits() {
        let normal = LabelSet::single(FindingLabel::NORMAL);
        let af = LabelSet::single(FindingLabel::AFIB);
        let items = [("p0", af), ("p0", af), ("p1", normal), ("p2", normal), ("p3", normal)];
        let out = split_dataset(&manifest(&items), SplitRatios::default(), 0).unwrap();
        out.validate().unwrap();
        assert!(out.records.iter().all(|r| r.split.is_some()));
    }
}
