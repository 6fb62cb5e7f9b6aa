//! Finding vocabulary, label sets, and the text templates built from them.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of findings in the vocabulary.
pub const NUM_FINDINGS: usize = 26;

/// Canonical finding names in vocabulary order. Index = finding id.
pub const FINDING_NAMES: [&str; NUM_FINDINGS] = [
    "Left ventricular hypertrophy",
    "Left atrial enlargement",
    "Low ejection fraction (lowEF)",
    "Normal range",
    "Prolonged QT interval",
    "Tall T wave",
    "Left axis deviation",
    "Artificial pacemaker rhythm",
    "Intraventricular conduction delay",
    "Complete right bundle branch block",
    "Complete left bundle branch block",
    "Flat T wave",
    "Inverted T wave",
    "ST-T abnormality",
    "Poor R wave progression",
    "Abnormal Q wave",
    "Anterior wall myocardial infarction",
    "Lateral wall myocardial infarction",
    "Inferior wall myocardial infarction",
    "Anterior septal myocardial infarction",
    "Ventricular premature contraction",
    "Frequent ventricular premature contraction",
    "Ventricular bigeminy",
    "Ventricular tachycardia",
    "Couplet of ventricular premature contractions",
    "Atrial fibrillation",
];

const TEXT_PREFIX: &str = "This ECG shows ";

/// A single finding, identified by its position in the vocabulary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FindingLabel(u8);

impl FindingLabel {
    pub const LVH: Self = Self(0);
    pub const LAE: Self = Self(1);
    pub const LOW_EF: Self = Self(2);
    pub const NORMAL: Self = Self(3);
    pub const PROLONGED_QT: Self = Self(4);
    pub const TALL_T: Self = Self(5);
    pub const LEFT_AXIS: Self = Self(6);
    pub const PACEMAKER: Self = Self(7);
    pub const IVCD: Self = Self(8);
    pub const RBBB: Self = Self(9);
    pub const LBBB: Self = Self(10);
    pub const FLAT_T: Self = Self(11);
    pub const INVERTED_T: Self = Self(12);
    pub const ST_T: Self = Self(13);
    pub const POOR_R_PROGRESSION: Self = Self(14);
    pub const ABNORMAL_Q: Self = Self(15);
    pub const ANTERIOR_MI: Self = Self(16);
    pub const LATERAL_MI: Self = Self(17);
    pub const INFERIOR_MI: Self = Self(18);
    pub const ANTEROSEPTAL_MI: Self = Self(19);
    pub const PVC: Self = Self(20);
    pub const FREQUENT_PVC: Self = Self(21);
    pub const BIGEMINY: Self = Self(22);
    pub const VT: Self = Self(23);
    pub const COUPLET: Self = Self(24);
    pub const AFIB: Self = Self(25);

    /// Labels whose synthetic morphology is crisp enough to be detected by
    /// a simple feature rule.
    pub const STRONG_MORPHOLOGY: [Self; 8] = [
        Self::AFIB,
        Self::PROLONGED_QT,
        Self::LBBB,
        Self::RBBB,
        Self::ST_T,
        Self::PVC,
        Self::TALL_T,
        Self::NORMAL,
    ];

    pub fn new(id: usize) -> Result<Self> {
        if id < NUM_FINDINGS {
            Ok(Self(id as u8))
        } else {
            Err(Error::UnknownLabel(format!("id {id}")))
        }
    }

    pub fn id(self) -> usize {
        self.0 as usize
    }

    pub fn name(self) -> &'static str {
        FINDING_NAMES[self.id()]
    }

    /// Looks up a finding by canonical name. The short forms `Normal`,
    /// `Normal range (Normal)` and `lowEF` are accepted as aliases.
    pub fn from_name(name: &str) -> Result<Self> {
        let name = name.trim();
        if let Some(id) = FINDING_NAMES.iter().position(|n| *n == name) {
            return Ok(Self(id as u8));
        }
        match name {
            "Normal" | "Normal range (Normal)" => Ok(Self::NORMAL),
            "lowEF" => Ok(Self::LOW_EF),
            _ => Err(Error::UnknownLabel(name.to_string())),
        }
    }

    pub fn all() -> impl Iterator<Item = Self> {
        (0..NUM_FINDINGS as u8).map(Self)
    }
}

impl fmt::Display for FindingLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Serialize for FindingLabel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for FindingLabel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Self::from_name(&s).map_err(serde::de::Error::custom)
    }
}

/// A subset of the vocabulary, stored as a bitmask. Iteration is always in
/// vocabulary order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LabelSet(u32);

impl LabelSet {
    pub const EMPTY: Self = Self(0);

    pub fn from_bits(bits: u32) -> Self {
        Self(bits & ((1 << NUM_FINDINGS) - 1))
    }

    pub fn bits(self) -> u32 {
        self.0
    }

    pub fn single(label: FindingLabel) -> Self {
        Self(1 << label.0)
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn contains(self, label: FindingLabel) -> bool {
        self.0 & (1 << label.0) != 0
    }

    pub fn insert(&mut self, label: FindingLabel) {
        self.0 |= 1 << label.0;
    }

    pub fn remove(&mut self, label: FindingLabel) {
        self.0 &= !(1 << label.0);
    }

    pub fn intersection(self, other: Self) -> Self {
        Self(self.0 & other.0)
    }

    pub fn union(self, other: Self) -> Self {
        Self(self.0 | other.0)
    }

    pub fn iter(self) -> impl Iterator<Item = FindingLabel> {
        FindingLabel::all().filter(move |l| self.contains(*l))
    }

    /// Binary indicator vector over the whole vocabulary.
    pub fn to_vector(self) -> [bool; NUM_FINDINGS] {
        let mut v = [false; NUM_FINDINGS];
        for l in self.iter() {
            v[l.id()] = true;
        }
        v
    }

    pub fn from_vector(v: &[bool]) -> Self {
        let mut s = Self::EMPTY;
        for (i, &on) in v.iter().take(NUM_FINDINGS).enumerate() {
            if on {
                s.insert(FindingLabel(i as u8));
            }
        }
        s
    }

    pub fn names(self) -> Vec<&'static str> {
        self.iter().map(FindingLabel::name).collect()
    }

    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        let mut s = Self::EMPTY;
        for n in names {
            s.insert(FindingLabel::from_name(n.as_ref())?);
        }
        Ok(s)
    }
}

impl FromIterator<FindingLabel> for LabelSet {
    fn from_iter<I: IntoIterator<Item = FindingLabel>>(iter: I) -> Self {
        let mut s = Self::EMPTY;
        for l in iter {
            s.insert(l);
        }
        s
    }
}

impl Serialize for LabelSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(self.iter().map(FindingLabel::name))
    }
}

impl<'de> Deserialize<'de> for LabelSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let names = Vec::<String>::deserialize(d)?;
        Self::from_names(&names).map_err(serde::de::Error::custom)
    }
}

/// Training caption: `This ECG shows f1, f2, ..., fk.` in vocabulary order.
pub fn render_training_text(labels: LabelSet) -> Result<String> {
    if labels.is_empty() {
        return Err(Error::EmptyLabelSet);
    }
    Ok(format!("{TEXT_PREFIX}{}.", labels.names().join(", ")))
}

/// Zero-shot prompt for a single finding.
pub fn render_label_prompt(label: FindingLabel) -> String {
    format!("{TEXT_PREFIX}{}.", label.name())
}

/// Inverse of [`render_training_text`].
pub fn parse_training_text(text: &str) -> Result<LabelSet> {
    let body = text
        .strip_prefix(TEXT_PREFIX)
        .and_then(|t| t.strip_suffix('.'))
        .ok_or_else(|| Error::UnparseableText(text.to_string()))?;
    let mut set = LabelSet::EMPTY;
    for part in body.split(", ") {
        set.insert(
            FindingLabel::from_name(part).map_err(|_| Error::UnparseableText(text.to_string()))?,
        );
    }
    if set.is_empty() {
        return Err(Error::UnparseableText(text.to_string()));
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn vocabulary_is_a_bijection() {
        assert_eq!(FINDING_NAMES.len(), 26);
        let mut names: Vec<_> = FINDING_NAMES.to_vec();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), 26);
        for l in FindingLabel::all() {
            assert_eq!(FindingLabel::from_name(l.name()).unwrap(), l);
            assert_eq!(FindingLabel::new(l.id()).unwrap(), l);
        }
        assert!(FindingLabel::new(26).is_err());
    }

    #[test]
    fn training_text_examples() {
        let af = LabelSet::single(FindingLabel::AFIB);
        assert_eq!(
            render_training_text(af).unwrap(),
            "This ECG shows Atrial fibrillation."
        );
        let two: LabelSet = [FindingLabel::AFIB, FindingLabel::ST_T].into_iter().collect();
        assert_eq!(
            render_training_text(two).unwrap(),
            "This ECG shows ST-T abnormality, Atrial fibrillation."
        );
        assert_eq!(
            render_training_text(LabelSet::single(FindingLabel::NORMAL)).unwrap(),
            "This ECG shows Normal range."
        );
        assert!(matches!(
            render_training_text(LabelSet::EMPTY),
            Err(Error::EmptyLabelSet)
        ));
    }

    #[test]
    fn prompt_examples() {
        assert_eq!(
            render_label_prompt(FindingLabel::LOW_EF),
            "This ECG shows Low ejection fraction (lowEF)."
        );
        assert_eq!(
            render_label_prompt(FindingLabel::NORMAL),
            "This ECG shows Normal range."
        );
        assert_eq!(
            render_label_prompt(FindingLabel::LBBB),
            "This ECG shows Complete left bundle branch block."
        );
    }

    #[test]
    fn aliases() {
        assert_eq!(FindingLabel::from_name("Normal").unwrap(), FindingLabel::NORMAL);
        assert_eq!(
            FindingLabel::from_name("Normal range (Normal)").unwrap(),
            FindingLabel::NORMAL
        );
        assert_eq!(FindingLabel::from_name("lowEF").unwrap(), FindingLabel::LOW_EF);
        assert!(FindingLabel::from_name("Sinus arrhythmia").is_err());
    }

    #[test]
    fn serde_uses_names() {
        let s: LabelSet = [FindingLabel::NORMAL, FindingLabel::LVH].into_iter().collect();
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(json, r#"["Left ventricular hypertrophy","Normal range"]"#);
        let back: LabelSet = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
    }

    proptest! {
        #[test]
        fn training_text_is_injective(a in 1u32..(1 << 26), b in 1u32..(1 << 26)) {
            let (sa, sb) = (LabelSet::from_bits(a), LabelSet::from_bits(b));
            let (ta, tb) = (render_training_text(sa).unwrap(), render_training_text(sb).unwrap());
            prop_assert_eq!(sa == sb, ta == tb);
            prop_assert_eq!(parse_training_text(&ta).unwrap(), sa);
        }
    }
}
