//! Beat scheduling and waveform synthesis from morphology parameters.
//!
//! Every wave is a Gaussian bump with a per-lead amplitude. Limb-lead
//! amplitudes come from projecting a frontal-plane vector onto the lead
//! axes; precordial amplitudes are given directly.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::morphology::{Conduction, Ectopy, LeadVector, MorphologyParams};
use crate::signal::{Signal, NUM_LEADS, NUM_SAMPLES, SAMPLE_RATE_HZ};

const LIMB_ANGLES_DEG: [f64; 6] = [0.0, 60.0, 120.0, -150.0, -30.0, 90.0];
const DURATION_MS: f64 = NUM_SAMPLES as f64 * 1000.0 / SAMPLE_RATE_HZ;
const PR_MS: f64 = 160.0;
const T_SIGMA_MS: f64 = 40.0;
pub(crate) const SIGNAL_LIMIT_MV: f32 = 10.0;

fn project(mag: f64, angle_deg: f64, precordial: [f64; 6]) -> LeadVector {
    let mut out = [0.0; NUM_LEADS];
    for (i, a) in LIMB_ANGLES_DEG.iter().enumerate() {
        out[i] = mag * ((angle_deg - a) * PI / 180.0).cos();
    }
    out[6..].copy_from_slice(&precordial);
    out
}

fn scale(v: LeadVector, gains: &LeadVector) -> LeadVector {
    let mut out = v;
    for (o, g) in out.iter_mut().zip(gains) {
        *o *= g;
    }
    out
}

struct Wave {
    center_ms: f64,
    sigma_ms: f64,
    amp: LeadVector,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum BeatKind {
    Sinus,
    Ectopic,
}

fn sinus_waves(p: &MorphologyParams) -> Vec<Wave> {
    let w = p.qrs_width_ms;
    let onset = -0.5 * w;
    let axis = 60.0 + p.axis_rotation_deg;
    let mut waves = Vec::new();

    if p.p_amp.iter().any(|a| *a != 0.0) && !p.paced {
        waves.push(Wave {
            center_ms: -PR_MS,
            sigma_ms: p.p_width_ms / 4.5,
            amp: scale(project(0.13, 50.0, [0.06, 0.07, 0.08, 0.08, 0.08, 0.07]), &p.p_amp),
        });
    }

    let left_block = p.paced
        || matches!(
            p.conduction,
            Conduction::LeftBundleBlock | Conduction::Bilateral
        );
    let right_block = matches!(
        p.conduction,
        Conduction::RightBundleBlock | Conduction::Bilateral
    );

    let mut qrs = Vec::new();
    if left_block {
        // Broad notched R laterally, deep broad S in the right precordium.
        let r = project(0.9, axis - 70.0, [0.1, 0.15, 0.3, 0.6, 1.1, 1.1]);
        qrs.push(Wave {
            center_ms: -0.15 * w,
            sigma_ms: w / 8.0,
            amp: scale(r, &p.r_amp),
        });
        qrs.push(Wave {
            center_ms: 0.15 * w,
            sigma_ms: w / 8.0,
            amp: scale(r.map(|v| 0.9 * v), &p.r_amp),
        });
        qrs.push(Wave {
            center_ms: 0.05 * w,
            sigma_ms: w / 6.0,
            amp: project(0.0, 0.0, [-1.5, -1.9, -1.3, -0.5, 0.0, 0.0]),
        });
    } else {
        qrs.push(Wave {
            center_ms: -0.3 * w,
            sigma_ms: w / 12.0,
            amp: project(0.08, axis + 180.0, [0.0, 0.0, 0.0, -0.04, -0.07, -0.07]),
        });
        qrs.push(Wave {
            center_ms: 0.0,
            sigma_ms: w / 10.0,
            amp: scale(project(1.1, axis, [0.3, 0.6, 0.9, 1.3, 1.4, 1.1]), &p.r_amp),
        });
        let s_v1 = if right_block { 0.4 } else { 1.0 };
        qrs.push(Wave {
            center_ms: 0.3 * w,
            sigma_ms: w / 12.0,
            amp: project(0.25, axis - 180.0, [-0.9 * s_v1, -1.2 * s_v1, -0.8, -0.4, -0.2, -0.1]),
        });
    }
    if right_block {
        // Terminal R' in V1-V2 and a broad terminal S in I, V5, V6.
        qrs.push(Wave {
            center_ms: 0.38 * w,
            sigma_ms: w / 9.0,
            amp: project(0.0, 0.0, [0.75, 0.45, 0.1, 0.0, 0.0, 0.0]),
        });
        qrs.push(Wave {
            center_ms: 0.38 * w,
            sigma_ms: w / 8.0,
            amp: project(0.35, 180.0, [0.0, 0.0, 0.0, -0.1, -0.35, -0.4]),
        });
    }
    for wave in &mut qrs {
        wave.amp = scale(wave.amp, &p.qrs_amp);
    }
    waves.extend(qrs);

    if p.q_wave_mv.iter().any(|q| *q != 0.0) {
        waves.push(Wave {
            center_ms: onset + 0.15 * w,
            sigma_ms: 12.0,
            amp: p.q_wave_mv.map(|q| -q),
        });
    }

    let mut t_amp = scale(
        project(0.35, 40.0, [-0.05, 0.35, 0.45, 0.4, 0.3, 0.25]),
        &p.t_amp,
    );
    if left_block {
        // Secondary repolarization changes, discordant to the QRS.
        for l in [0, 4, 10, 11] {
            t_amp[l] = -t_amp[l].abs();
        }
        for l in [6, 7, 8] {
            t_amp[l] = t_amp[l].abs() + 0.2;
        }
    }
    if right_block {
        for l in [6, 7] {
            t_amp[l] = -t_amp[l].abs() - 0.1;
        }
    }
    waves.push(Wave {
        center_ms: onset + p.qt_ms - 2.2 * T_SIGMA_MS,
        sigma_ms: T_SIGMA_MS,
        amp: t_amp,
    });

    if p.paced {
        waves.push(Wave {
            center_ms: onset - 4.0,
            sigma_ms: 1.0,
            amp: project(1.2, 70.0, [0.8, 1.0, 1.0, 1.0, 0.9, 0.8]),
        });
    }
    waves
}

fn ectopic_waves() -> Vec<Wave> {
    let w = 150.0;
    vec![
        Wave {
            center_ms: 0.0,
            sigma_ms: w / 6.0,
            amp: project(1.4, -100.0, [1.0, 1.3, 1.1, 0.6, -0.4, -0.8]),
        },
        Wave {
            center_ms: 0.2 * w,
            sigma_ms: w / 7.0,
            amp: project(0.55, -60.0, [0.4, 0.5, 0.4, 0.2, -0.2, -0.3]),
        },
        Wave {
            center_ms: 300.0,
            sigma_ms: 50.0,
            amp: project(0.45, 80.0, [-0.5, -0.6, -0.4, -0.2, 0.2, 0.4]),
        },
    ]
}

/// ST plateau pattern for diffuse depression, per lead.
const ST_PATTERN: LeadVector = [1.0, 1.0, 0.5, -1.0, 0.6, 0.8, -0.3, 0.3, 0.7, 1.0, 1.0, 1.0];

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Sinus beat times (ms), possibly starting before zero so the window is
/// filled from the first sample.
fn sinus_schedule<R: Rng + ?Sized>(p: &MorphologyParams, rng: &mut R) -> Vec<f64> {
    let rr = 60_000.0 / p.heart_rate_bpm;
    let jitter = Normal::new(0.0, 1.0).expect("valid normal");
    let mut t = -rng.random_range(0.0..rr);
    let mut out = Vec::new();
    while t < DURATION_MS + rr {
        out.push(t);
        let factor = (1.0 + p.rr_jitter * jitter.sample(rng)).clamp(0.5, 1.9);
        t += rr * factor;
    }
    out
}

fn in_window(t: f64) -> bool {
    (250.0..DURATION_MS - 400.0).contains(&t)
}

/// Replaces sinus beats with ectopic ones according to the ectopy pattern.
fn place_ectopy<R: Rng + ?Sized>(
    p: &MorphologyParams,
    sinus: &[f64],
    rng: &mut R,
) -> Vec<(f64, BeatKind)> {
    let n = sinus.len();
    let mut ectopic = vec![false; n];
    let interval = |k: usize| sinus[k] - sinus[k - 1];
    match p.ectopy {
        Ectopy::None => {}
        Ectopy::Isolated { min_count } => {
            for k in 1..n {
                if !ectopic[k - 1] && rng.random_bool(p.pvc_rate) {
                    ectopic[k] = true;
                }
            }
            let eligible = |e: &[bool], k: usize| {
                k >= 1
                    && k + 1 < n
                    && in_window(sinus[k])
                    && !e[k]
                    && !e[k - 1]
                    && !e[k + 1]
            };
            let mut count = (1..n).filter(|&k| ectopic[k] && in_window(sinus[k])).count();
            let mut guard = 0;
            while count < min_count && guard < 1000 {
                guard += 1;
                let k = rng.random_range(1..n);
                if eligible(&ectopic, k) {
                    ectopic[k] = true;
                    count += 1;
                }
            }
        }
        Ectopy::Bigeminy => {
            for k in (1..n).step_by(2) {
                ectopic[k] = true;
            }
        }
        Ectopy::Couplets => {
            let mut placed = false;
            let mut k = 1;
            while k + 1 < n {
                if rng.random_bool(p.pvc_rate / 2.0) {
                    ectopic[k] = true;
                    ectopic[k + 1] = true;
                    placed |= in_window(sinus[k]);
                    k += 3;
                } else {
                    k += 1;
                }
            }
            if !placed {
                let candidates: Vec<usize> =
                    (1..n.saturating_sub(1)).filter(|&k| in_window(sinus[k])).collect();
                if let Some(&k) = candidates.get(rng.random_range(0..candidates.len().max(1))) {
                    ectopic[k] = true;
                    ectopic[k + 1] = true;
                }
            }
        }
        Ectopy::Run { .. } => {}
    }

    let mut beats = Vec::with_capacity(n);
    let mut k = 0;
    while k < n {
        if !ectopic[k] || k == 0 {
            beats.push((sinus[k], BeatKind::Sinus));
            k += 1;
            continue;
        }
        // Premature beat after the previous sinus beat; the replaced sinus
        // beat is dropped, leaving a compensatory pause.
        let rr = interval(k);
        let mut t = sinus[k - 1] + 0.6 * rr;
        beats.push((t, BeatKind::Ectopic));
        k += 1;
        while k < n && ectopic[k] {
            t += 0.5 * rr;
            beats.push((t, BeatKind::Ectopic));
            k += 1;
        }
    }

    if let Ectopy::Run { beats: run_len, rate_bpm } = p.ectopy {
        let spacing = 60_000.0 / rate_bpm;
        let start = rng.random_range(1500.0..(DURATION_MS - 1500.0 - spacing * run_len as f64).max(1600.0));
        let end = start + spacing * (run_len as f64 - 1.0);
        beats.retain(|(t, _)| *t < start - 0.5 * spacing || *t > end + 0.7 * spacing);
        for i in 0..run_len {
            beats.push((start + spacing * i as f64, BeatKind::Ectopic));
        }
        beats.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite times"));
    }
    beats
}

fn add_wave(signal: &mut Signal, beat_ms: f64, wave: &Wave) {
    let dt = 1000.0 / SAMPLE_RATE_HZ;
    let center = beat_ms + wave.center_ms;
    let reach = 5.0 * wave.sigma_ms;
    let lo = (((center - reach) / dt).floor().max(0.0)) as usize;
    let hi = (((center + reach) / dt).ceil().min(NUM_SAMPLES as f64 - 1.0)) as isize;
    if hi < lo as isize {
        return;
    }
    for i in lo..=hi as usize {
        let x = (i as f64 * dt - center) / wave.sigma_ms;
        let g = (-0.5 * x * x).exp();
        for l in 0..NUM_LEADS {
            signal[[l, i]] += (wave.amp[l] * g) as f32;
        }
    }
}

fn add_st(signal: &mut Signal, beat_ms: f64, p: &MorphologyParams, amp: &LeadVector) {
    let dt = 1000.0 / SAMPLE_RATE_HZ;
    let j = beat_ms + 0.5 * p.qrs_width_ms;
    let t_center = beat_ms - 0.5 * p.qrs_width_ms + p.qt_ms - 2.2 * T_SIGMA_MS;
    let end = t_center + T_SIGMA_MS;
    let lo = (((j - 40.0) / dt).max(0.0)) as usize;
    let hi = (((end + 80.0) / dt).min(NUM_SAMPLES as f64 - 1.0)) as isize;
    if hi < lo as isize {
        return;
    }
    for i in lo..=hi as usize {
        let t = i as f64 * dt;
        let w = sigmoid((t - j) / 5.0) * sigmoid((end - t) / 15.0);
        for l in 0..NUM_LEADS {
            signal[[l, i]] += (amp[l] * w) as f32;
        }
    }
}

pub(crate) fn render<R: Rng + ?Sized>(p: &MorphologyParams, rng: &mut R) -> Signal {
    let sinus = sinus_schedule(p, rng);
    let beats = place_ectopy(p, &sinus, rng);
    let sinus_w = sinus_waves(p);
    let ectopic_w = ectopic_waves();

    let mut st_amp = [0.0; NUM_LEADS];
    for l in 0..NUM_LEADS {
        st_amp[l] = p.st_offset_mv * ST_PATTERN[l] + p.st_territory_mv[l];
    }
    let has_st = st_amp.iter().any(|v| *v != 0.0);

    let mut signal = Signal::zeros((NUM_LEADS, NUM_SAMPLES));
    for &(t, kind) in &beats {
        match kind {
            BeatKind::Sinus => {
                for w in &sinus_w {
                    add_wave(&mut signal, t, w);
                }
                if has_st {
                    add_st(&mut signal, t, p, &st_amp);
                }
            }
            BeatKind::Ectopic => {
                for w in &ectopic_w {
                    add_wave(&mut signal, t, w);
                }
            }
        }
    }

    let dt_s = 1.0 / SAMPLE_RATE_HZ;
    if p.fibrillation_mv > 0.0 {
        let comps: Vec<(f64, f64)> = (0..3)
            .map(|_| (rng.random_range(5.0..8.0), rng.random_range(0.0..2.0 * PI)))
            .collect();
        for l in 0..NUM_LEADS {
            let gain = if l == 6 { 1.0 } else { 0.5 };
            for i in 0..NUM_SAMPLES {
                let t = i as f64 * dt_s;
                let v: f64 = comps.iter().map(|(f, ph)| (2.0 * PI * f * t + ph).sin()).sum();
                signal[[l, i]] += (p.fibrillation_mv * gain * v / 3.0) as f32;
            }
        }
    }
    if p.wander_mv > 0.0 {
        for l in 0..NUM_LEADS {
            let f = rng.random_range(0.15..0.35);
            let ph = rng.random_range(0.0..2.0 * PI);
            let a = p.wander_mv * rng.random_range(0.5..1.0);
            for i in 0..NUM_SAMPLES {
                signal[[l, i]] += (a * (2.0 * PI * f * i as f64 * dt_s + ph).sin()) as f32;
            }
        }
    }
    if p.noise_mv > 0.0 {
        let noise = Normal::new(0.0, p.noise_mv).expect("valid normal");
        for v in signal.iter_mut() {
            *v += noise.sample(rng) as f32;
        }
    }
    signal.mapv_inplace(|v| v.clamp(-SIGNAL_LIMIT_MV, SIGNAL_LIMIT_MV));
    signal
}
