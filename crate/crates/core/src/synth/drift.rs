//! Acquisition drift: gain change, timing offset, baseline wander, noise.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::EcgRecord;
use crate::error::{Error, Result};
use crate::signal::{NUM_SAMPLES, SAMPLE_RATE_HZ};

/// Drift applied to one record.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftParams {
    pub amplitude_scale: f64,
    pub baseline_wander_mv: f64,
    pub noise_std_mv: f64,
    pub time_offset_ms: f64,
}

impl DriftParams {
    pub const IDENTITY: Self = Self {
        amplitude_scale: 1.0,
        baseline_wander_mv: 0.0,
        noise_std_mv: 0.0,
        time_offset_ms: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude_scale.is_finite() && self.amplitude_scale > 0.0) {
            return Err(Error::Config("amplitude_scale must be > 0".into()));
        }
        if !(self.baseline_wander_mv >= 0.0 && self.noise_std_mv >= 0.0)
            || !self.time_offset_ms.is_finite()
        {
            return Err(Error::Config("drift wander/noise must be >= 0".into()));
        }
        Ok(())
    }

    /// Circular shift in samples; positive moves content later in time.
    pub fn shift_samples(&self) -> isize {
        (self.time_offset_ms * SAMPLE_RATE_HZ / 1000.0).round() as isize
    }
}

/// Institution-level drift: fixed gain, wander and noise, with a per-record
/// timing offset drawn uniformly from `[-max_time_offset_ms, max_time_offset_ms]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstitutionDrift {
    pub amplitude_scale: f64,
    pub baseline_wander_mv: f64,
    pub noise_std_mv: f64,
    pub max_time_offset_ms: f64,
}

impl Default for InstitutionDrift {
    fn default() -> Self {
        Self {
            amplitude_scale: 0.9,
            baseline_wander_mv: 0.05,
            noise_std_mv: 0.02,
            max_time_offset_ms: 600.0,
        }
    }
}

impl InstitutionDrift {
    pub fn identity() -> Self {
        Self {
            amplitude_scale: 1.0,
            baseline_wander_mv: 0.0,
            noise_std_mv: 0.0,
            max_time_offset_ms: 0.0,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DriftParams {
        let offset = if self.max_time_offset_ms > 0.0 {
            rng.random_range(-self.max_time_offset_ms..=self.max_time_offset_ms)
        } else {
            0.0
        };
        DriftParams {
            amplitude_scale: self.amplitude_scale,
            baseline_wander_mv: self.baseline_wander_mv,
            noise_std_mv: self.noise_std_mv,
            time_offset_ms: offset,
        }
    }
}

pub fn apply_drift(record: &EcgRecord, drift: &DriftParams, seed: u64) -> Result<EcgRecord> {
    drift.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let src = &record.signal;
    let (leads, n) = src.dim();
    let shift = drift.shift_samples().rem_euclid(n as isize) as usize;
    let gain = drift.amplitude_scale as f32;

    let mut out = src.clone();
    for l in 0..leads {
        for t in 0..n {
            out[[l, (t + shift) % n]] = gain * src[[l, t]];
        }
    }
    if drift.baseline_wander_mv > 0.0 {
        let dt = 1.0 / SAMPLE_RATE_HZ;
        for l in 0..leads {
            let f = rng.random_range(0.1..0.5);
            let ph = rng.random_range(0.0..2.0 * PI);
            for t in 0..n {
                out[[l, t]] +=
                    (drift.baseline_wander_mv * (2.0 * PI * f * t as f64 * dt + ph).sin()) as f32;
            }
        }
    }
    if drift.noise_std_mv > 0.0 {
        let noise = Normal::new(0.0, drift.noise_std_mv).expect("validated std");
        for v in out.iter_mut() {
            *v += noise.sample(&mut rng) as f32;
        }
    }
    debug_assert_eq!(n, NUM_SAMPLES);
    Ok(EcgRecord {
        signal: out,
        ..record.clone()
    })
}
