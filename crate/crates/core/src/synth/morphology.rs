//! Morphology parameters and the per-label modifiers applied to them.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{FindingLabel, LabelSet};
use crate::signal::NUM_LEADS;

pub type LeadVector = [f64; NUM_LEADS];

const ONES: LeadVector = [1.0; NUM_LEADS];

pub(crate) const V1: usize = 6;

/// Intraventricular conduction pattern.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Conduction {
    #[default]
    Normal,
    RightBundleBlock,
    LeftBundleBlock,
    /// Both bundle blocks requested; rendered with both terminal patterns.
    Bilateral,
}

/// How ectopic ventricular beats are distributed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub enum Ectopy {
    #[default]
    None,
    /// Isolated premature beats replacing a fraction of sinus beats.
    Isolated { min_count: usize },
    /// Every second beat ectopic.
    Bigeminy,
    /// Pairs of consecutive ectopic beats.
    Couplets,
    /// One run of fast ectopic beats.
    Run { beats: usize, rate_bpm: f64 },
}

/// Parameters of one synthetic recording.
///
/// `p_amp`, `qrs_amp`, `t_amp` and `r_amp` are per-lead gains on the base
/// wave template (1.0 leaves the lead unchanged; negative inverts it).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MorphologyParams {
    pub heart_rate_bpm: f64,
    /// Coefficient of variation of RR intervals.
    pub rr_jitter: f64,
    pub p_amp: LeadVector,
    pub qrs_amp: LeadVector,
    pub r_amp: LeadVector,
    pub t_amp: LeadVector,
    pub p_width_ms: f64,
    pub qrs_width_ms: f64,
    /// QRS onset to T-wave end.
    pub qt_ms: f64,
    /// Diffuse ST depression magnitude (mV, negative = depression).
    pub st_offset_mv: f64,
    /// Territorial ST elevation per lead (mV).
    pub st_territory_mv: LeadVector,
    /// Extra pathological Q-wave depth per lead (mV, positive = deeper).
    pub q_wave_mv: LeadVector,
    pub pvc_rate: f64,
    pub ectopy: Ectopy,
    pub axis_rotation_deg: f64,
    pub conduction: Conduction,
    pub paced: bool,
    /// Amplitude of fibrillatory baseline activity (mV).
    pub fibrillation_mv: f64,
    /// White measurement noise (mV).
    pub noise_mv: f64,
    /// Respiratory baseline wander amplitude (mV).
    pub wander_mv: f64,
}

impl MorphologyParams {
    /// Population-average sinus rhythm.
    pub fn baseline() -> Self {
        Self {
            heart_rate_bpm: 70.0,
            rr_jitter: 0.03,
            p_amp: ONES,
            qrs_amp: ONES,
            r_amp: ONES,
            t_amp: ONES,
            p_width_ms: 100.0,
            qrs_width_ms: 90.0,
            qt_ms: 390.0,
            st_offset_mv: 0.0,
            st_territory_mv: [0.0; NUM_LEADS],
            q_wave_mv: [0.0; NUM_LEADS],
            pvc_rate: 0.0,
            ectopy: Ectopy::None,
            axis_rotation_deg: 0.0,
            conduction: Conduction::Normal,
            paced: false,
            fibrillation_mv: 0.0,
            noise_mv: 0.01,
            wander_mv: 0.02,
        }
    }

    /// Draws a random individual around the population average.
    pub fn sample_individual<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mut p = Self::baseline();
        let gain = Normal::new(1.0, 0.12).expect("valid normal");
        let global = rng.random_range(0.8..1.2);
        p.heart_rate_bpm = rng.random_range(55.0..88.0);
        p.rr_jitter = rng.random_range(0.01..0.04);
        for l in 0..NUM_LEADS {
            p.p_amp[l] = global * gain.sample(rng);
            p.qrs_amp[l] = global * gain.sample(rng);
            p.t_amp[l] = global * gain.sample(rng);
        }
        p.p_width_ms = rng.random_range(90.0..110.0);
        p.qrs_width_ms = rng.random_range(80.0..100.0);
        p.qt_ms = rng.random_range(360.0..415.0);
        p.axis_rotation_deg = rng.random_range(-20.0..20.0);
        p
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !(30.0..=220.0).contains(&self.heart_rate_bpm) {
            return Err(Error::Config(format!(
                "heart rate {} outside [30, 220]",
                self.heart_rate_bpm
            )));
        }
        if !(self.p_width_ms > 0.0 && self.qrs_width_ms > 0.0 && self.qt_ms > 0.0) {
            return Err(Error::Config("widths and intervals must be positive".into()));
        }
        if !(finite(&self.p_amp)
            && finite(&self.qrs_amp)
            && finite(&self.r_amp)
            && finite(&self.t_amp)
            && finite(&self.st_territory_mv)
            && finite(&self.q_wave_mv)
            && self.st_offset_mv.is_finite()
            && (0.0..=1.0).contains(&self.pvc_rate)
            && self.rr_jitter >= 0.0)
        {
            return Err(Error::Config("morphology amplitudes must be finite".into()));
        }
        Ok(())
    }

    /// Applies every label's modifier in vocabulary order.
    pub fn apply_labels<R: Rng + ?Sized>(&mut self, labels: LabelSet, rng: &mut R) {
        for label in labels.iter() {
            self.apply_label(label, rng);
        }
    }

    fn apply_label<R: Rng + ?Sized>(&mut self, label: FindingLabel, rng: &mut R) {
        match label {
            FindingLabel::LVH => {
                let g = rng.random_range(1.2..1.6);
                for l in [0, 4, 6, 7, 8, 9, 10, 11] {
                    self.qrs_amp[l] *= g;
                }
                for l in [0, 4, 10, 11] {
                    self.t_amp[l] *= 0.7;
                }
            }
            FindingLabel::LAE => {
                // Weak correlate: a broader, slightly biphasic P.
                self.p_width_ms += rng.random_range(15.0..35.0);
                self.p_amp[V1] *= rng.random_range(-0.5..0.5);
            }
            FindingLabel::LOW_EF => {
                let g = rng.random_range(0.6..0.85);
                for v in &mut self.qrs_amp {
                    *v *= g;
                }
                self.qrs_width_ms += rng.random_range(5.0..15.0);
            }
            FindingLabel::NORMAL => {}
            FindingLabel::PROLONGED_QT => {
                self.qt_ms = rng.random_range(490.0..540.0);
                self.heart_rate_bpm = self.heart_rate_bpm.min(68.0);
            }
            FindingLabel::TALL_T => {
                let g = rng.random_range(2.4..3.0);
                for l in 0..NUM_LEADS {
                    self.t_amp[l] *= if (7..=10).contains(&l) { g } else { 0.6 * g };
                }
            }
            FindingLabel::LEFT_AXIS => {
                self.axis_rotation_deg -= rng.random_range(90.0..115.0);
            }
            FindingLabel::PACEMAKER => {
                self.paced = true;
                self.qrs_width_ms = self.qrs_width_ms.max(rng.random_range(140.0..160.0));
                self.p_amp = [0.0; NUM_LEADS];
                self.rr_jitter = 0.0;
                self.heart_rate_bpm = 70.0;
            }
            FindingLabel::IVCD => {
                self.qrs_width_ms = self.qrs_width_ms.max(rng.random_range(108.0..118.0));
            }
            FindingLabel::RBBB => {
                self.conduction = match self.conduction {
                    Conduction::LeftBundleBlock | Conduction::Bilateral => Conduction::Bilateral,
                    _ => Conduction::RightBundleBlock,
                };
                self.qrs_width_ms = self.qrs_width_ms.max(rng.random_range(135.0..155.0));
            }
            FindingLabel::LBBB => {
                self.conduction = match self.conduction {
                    Conduction::RightBundleBlock | Conduction::Bilateral => Conduction::Bilateral,
                    _ => Conduction::LeftBundleBlock,
                };
                self.qrs_width_ms = self.qrs_width_ms.max(rng.random_range(140.0..165.0));
            }
            FindingLabel::FLAT_T => {
                for v in &mut self.t_amp {
                    *v *= 0.15;
                }
            }
            FindingLabel::INVERTED_T => {
                for l in [0, 1, 4, 5, 8, 9, 10, 11] {
                    self.t_amp[l] *= -rng.random_range(0.5..0.9);
                }
            }
            FindingLabel::ST_T => {
                self.st_offset_mv -= rng.random_range(0.15..0.25);
                for v in &mut self.t_amp {
                    *v *= 0.5;
                }
            }
            FindingLabel::POOR_R_PROGRESSION => {
                for l in 6..10 {
                    self.r_amp[l] *= 0.3;
                }
            }
            FindingLabel::ABNORMAL_Q => {
                for l in [1, 2, 5] {
                    self.q_wave_mv[l] += rng.random_range(0.2..0.35);
                }
            }
            FindingLabel::ANTERIOR_MI => self.infarct(&[8, 9], rng),
            FindingLabel::LATERAL_MI => self.infarct(&[0, 4, 10, 11], rng),
            FindingLabel::INFERIOR_MI => self.infarct(&[1, 2, 5], rng),
            FindingLabel::ANTEROSEPTAL_MI => self.infarct(&[6, 7, 8], rng),
            FindingLabel::PVC => {
                self.pvc_rate = self.pvc_rate.max(rng.random_range(0.12..0.2));
                if self.ectopy == Ectopy::None {
                    self.ectopy = Ectopy::Isolated { min_count: 2 };
                }
            }
            FindingLabel::FREQUENT_PVC => {
                self.pvc_rate = self.pvc_rate.max(rng.random_range(0.3..0.4));
                if matches!(self.ectopy, Ectopy::None | Ectopy::Isolated { .. }) {
                    self.ectopy = Ectopy::Isolated { min_count: 3 };
                }
            }
            FindingLabel::BIGEMINY => {
                self.pvc_rate = 0.5;
                self.ectopy = Ectopy::Bigeminy;
            }
            FindingLabel::VT => {
                self.ectopy = Ectopy::Run {
                    beats: rng.random_range(4..8),
                    rate_bpm: rng.random_range(150.0..190.0),
                };
            }
            FindingLabel::COUPLET => {
                self.pvc_rate = self.pvc_rate.max(0.2);
                self.ectopy = Ectopy::Couplets;
            }
            FindingLabel::AFIB => {
                self.p_amp = [0.0; NUM_LEADS];
                self.rr_jitter = rng.random_range(0.2..0.3);
                self.fibrillation_mv = 0.008;
            }
            _ => unreachable!("vocabulary has 26 labels"),
        }
    }

    fn infarct<R: Rng + ?Sized>(&mut self, leads: &[usize], rng: &mut R) {
        let q = rng.random_range(0.15..0.3);
        let st = rng.random_range(0.05..0.12);
        for &l in leads {
            self.q_wave_mv[l] += q;
            self.st_territory_mv[l] += st;
            self.r_amp[l] *= 0.6;
            self.t_amp[l] = -self.t_amp[l].abs() * 0.6;
        }
    }
}
