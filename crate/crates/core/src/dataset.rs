//! Records, manifests, and the JSON-lines manifest format.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::LabelSet;
use crate::signal::{self, Signal, SAMPLE_RATE_HZ};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split {other:?}"))),
        }
    }
}

/// One ECG with its metadata and signal loaded.
#[derive(Clone, Debug)]
pub struct EcgRecord {
    pub record_id: String,
    pub patient_id: String,
    pub institution: String,
    pub sample_rate: f64,
    pub signal: Signal,
    pub labels: LabelSet,
}

impl EcgRecord {
    pub fn new(
        record_id: impl Into<String>,
        patient_id: impl Into<String>,
        institution: impl Into<String>,
        signal: Signal,
        labels: LabelSet,
    ) -> Result<Self> {
        let record_id = record_id.into();
        signal::check_signal(&signal, &record_id)?;
        if labels.is_empty() {
            return Err(Error::EmptyLabelSet);
        }
        Ok(Self {
            record_id,
            patient_id: patient_id.into(),
            institution: institution.into(),
            sample_rate: SAMPLE_RATE_HZ,
            signal,
            labels,
        })
    }
}

/// One manifest line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub record_id: String,
    pub patient_id: String,
    pub institution: String,
    pub labels: LabelSet,
    /// Relative paths resolve against the manifest's directory.
    pub signal_path: String,
    #[serde(default)]
    pub split: Option<Split>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DatasetManifest {
    pub records: Vec<ManifestEntry>,
    /// Directory used to resolve relative signal paths.
    pub root: PathBuf,
}

impl DatasetManifest {
    pub fn new(records: Vec<ManifestEntry>, root: impl Into<PathBuf>) -> Self {
        Self {
            records,
            root: root.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn signal_path(&self, entry: &ManifestEntry) -> PathBuf {
        let p = Path::new(&entry.signal_path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    pub fn load_record(&self, entry: &ManifestEntry) -> Result<EcgRecord> {
        let signal = signal::load_signal(&self.signal_path(entry))?;
        EcgRecord::new(
            entry.record_id.clone(),
            entry.patient_id.clone(),
            entry.institution.clone(),
            signal,
            entry.labels,
        )
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.records.iter().filter(move |r| r.split == Some(split))
    }

    /// Copy of the manifest keeping only one split.
    pub fn subset(&self, split: Split) -> DatasetManifest {
        DatasetManifest {
            records: self.split(split).cloned().collect(),
            root: self.root.clone(),
        }
    }

    /// Patients per split, for split-hygiene checks.
    pub fn patients_by_split(&self) -> BTreeMap<Split, BTreeSet<String>> {
        let mut out: BTreeMap<Split, BTreeSet<String>> = BTreeMap::new();
        for r in &self.records {
            if let Some(s) = r.split {
                out.entry(s).or_default().insert(r.patient_id.clone());
            }
        }
        out
    }

    /// Checks record-level invariants: nonempty labels, unique record ids,
    /// and no patient shared between splits.
    pub fn validate(&self) -> Result<()> {
        let mut ids = BTreeSet::new();
        let mut patient_split: BTreeMap<&str, Split> = BTreeMap::new();
        for r in &self.records {
            if r.labels.is_empty() {
                return Err(Error::EmptyLabelSet);
            }
            if !ids.insert(r.record_id.as_str()) {
                return Err(Error::Config(format!("duplicate record_id {}", r.record_id)));
            }
            if let Some(s) = r.split {
                match patient_split.get(r.patient_id.as_str()) {
                    Some(prev) if *prev != s => {
                        return Err(Error::Config(format!(
                            "patient {} appears in both {prev} and {s}",
                            r.patient_id
                        )))
                    }
                    _ => {
                        patient_split.insert(&r.patient_id, s);
                    }
                }
            }
        }
        Ok(())
    }

    pub fn read_jsonl(path: &Path) -> Result<Self> {
        let file = fs::File::open(path)
            .map_err(|e| Error::io(format!("opening manifest {}", path.display()), e))?;
        let mut records = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: ManifestEntry = serde_json::from_str(&line)
                .map_err(|e| Error::json(format!("{} line {}", path.display(), i + 1), e))?;
            records.push(entry);
        }
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let m = Self { records, root };
        m.validate()?;
        Ok(m)
    }

    /// Copy to be written into `dir`. Relative signal paths are made
    /// absolute unless `dir` is the current root, so they keep resolving.
    pub fn rebased(&self, dir: &Path) -> Result<DatasetManifest> {
        let canon = |p: &Path| {
            let p = if p.as_os_str().is_empty() { Path::new(".") } else { p };
            fs::canonicalize(p).map_err(|e| Error::io(format!("resolving {}", p.display()), e))
        };
        let old = canon(&self.root)?;
        let mut out = self.clone();
        if canon(dir)? != old {
            for r in &mut out.records {
                if Path::new(&r.signal_path).is_relative() {
                    r.signal_path = old.join(&r.signal_path).to_string_lossy().into_owned();
                }
            }
        }
        out.root = dir.to_path_buf();
        Ok(out)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("manifest entries serialize"));
            out.push('\n');
        }
        out
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path)
            .map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
        f.write_all(self.to_jsonl().as_bytes())
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::FindingLabel;

    fn entry(id: &str, patient: &str, split: Option<Split>) -> ManifestEntry {
        ManifestEntry {
            record_id: id.into(),
            patient_id: patient.into(),
            institution: "A".into(),
            labels: LabelSet::single(FindingLabel::NORMAL),
            signal_path: format!("{id}.f32"),
            split,
        }
    }

    #[test]
    fn jsonl_line_format() {
        let m = DatasetManifest::new(vec![entry("r1", "p1", Some(Split::Val))], "");
        assert_eq!(
            m.to_jsonl(),
            "{\"record_id\":\"r1\",\"patient_id\":\"p1\",\"institution\":\"A\",\
             \"labels\":[\"Normal range\"],\"signal_path\":\"r1.f32\",\"split\":\"val\"}\n"
        );
    }

    #[test]
    fn read_back_and_resolve_paths() {
        let dir = tempfile::tempdir().unwrap();
        let m = DatasetManifest::new(
            vec![entry("r1", "p1", Some(Split::Train)), entry("r2", "p2", None)],
            dir.path(),
        );
        let path = dir.path().join("manifest.jsonl");
        m.write_jsonl(&path).unwrap();
        let back = DatasetManifest::read_jsonl(&path).unwrap();
        assert_eq!(back.records, m.records);
        assert_eq!(back.signal_path(&back.records[0]), dir.path().join("r1.f32"));
    }

    #[test]
    fn rebasing_keeps_signal_paths_resolvable() {
        let dir = tempfile::tempdir().unwrap();
        let other = dir.path().join("elsewhere");
        fs::create_dir(&other).unwrap();
        let m = DatasetManifest::new(vec![entry("r1", "p1", None)], dir.path());
        let same = m.rebased(dir.path()).unwrap();
        assert_eq!(same.records, m.records);
        let moved = m.rebased(&other).unwrap();
        assert_eq!(moved.root, other);
        assert_eq!(moved.signal_path(&moved.records[0]), fs::canonicalize(dir.path()).unwrap().join("r1.f32"));
    }

    #[test]
    fn patient_crossing_splits_is_rejected() {
        let m = DatasetManifest::new(
            vec![entry("r1", "p1", Some(Split::Train)), entry("r2", "p1", Some(Split::Test))],
            "",
        );
        assert!(m.validate().is_err());
    }

    #[test]
    fn empty_labels_rejected() {
        let mut e = entry("r1", "p1", None);
        e.labels = LabelSet::EMPTY;
        assert!(DatasetManifest::new(vec![e], "").validate().is_err());
    }
}
