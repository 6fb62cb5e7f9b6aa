//! Independent ECG feature detector used as a test oracle for the
//! synthetic generator. It knows nothing about how signals are produced:
//! beats are found from multi-lead slope energy and every interval is
//! measured on a per-sample median beat template.

#![allow(dead_code)]

use ndarray::Array2;

pub const FS: f64 = 500.0;

fn ms(n: f64) -> isize {
    (n * FS / 1000.0).round() as isize
}

#[derive(Debug, Clone)]
pub struct Features {
    pub beats: Vec<usize>,
    pub rr_cv: f64,
    pub mean_rr_ms: f64,
    /// Max over leads of the largest P-window deflection from baseline (mV).
    pub p_band_mv: f64,
    pub qrs_width_ms: f64,
    pub qt_ms: f64,
    /// Template level 60 ms after the QRS offset, minus baseline (mV).
    pub st_level: [f64; 12],
    /// Signed T-wave peak per lead, relative to baseline (mV).
    pub t_peak: [f64; 12],
    /// Largest positive deflection in V1 late in the QRS.
    pub v1_terminal_r: f64,
    pub ectopic_beats: usize,
}

fn slope_energy(x: &Array2<f32>) -> Vec<f64> {
    let (leads, n) = x.dim();
    let mut e = vec![0.0; n];
    for t in 1..n - 1 {
        let mut s = 0.0;
        for l in 0..leads {
            s += (x[[l, t + 1]] as f64 - x[[l, t - 1]] as f64).abs();
        }
        e[t] = s;
    }
    moving_average(&e, 20)
}

fn moving_average(v: &[f64], w: usize) -> Vec<f64> {
    let n = v.len();
    let mut out = vec![0.0; n];
    let half = w / 2;
    let mut prefix = vec![0.0; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + v[i];
    }
    for i in 0..n {
        let lo = i.saturating_sub(half);
        let hi = (i + w - half).min(n);
        out[i] = (prefix[hi] - prefix[lo]) / (hi - lo) as f64;
    }
    out
}

fn percentile(v: &[f64], q: f64) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    s[((s.len() - 1) as f64 * q).round() as usize]
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn detect_beats(x: &Array2<f32>) -> Vec<usize> {
    let e = slope_energy(x);
    let thr = 0.35 * percentile(&e, 0.98);
    let refractory = ms(200.0) as usize;
    let mut peaks: Vec<(usize, f64)> = Vec::new();
    let mut t = 0;
    while t < e.len() {
        if e[t] > thr {
            let start = t;
            while t < e.len() && e[t] > thr {
                t += 1;
            }
            let (arg, val) = (start..t)
                .map(|i| (i, e[i]))
                .fold((start, f64::MIN), |a, b| if b.1 > a.1 { b } else { a });
            match peaks.last_mut() {
                Some(last) if arg - last.0 < refractory => {
                    if val > last.1 {
                        *last = (arg, val);
                    }
                }
                _ => peaks.push((arg, val)),
            }
        }
        t += 1;
    }
    peaks.into_iter().map(|p| p.0).collect()
}

const PRE: isize = 150; // 300 ms
const POST: isize = 325; // 650 ms

/// Per-lead median template, indexed by offset + PRE.
fn median_template(x: &Array2<f32>, beats: &[usize]) -> Option<Array2<f64>> {
    let n = x.dim().1 as isize;
    let usable: Vec<isize> = beats
        .iter()
        .map(|&b| b as isize)
        .filter(|&b| b - PRE >= 0 && b + POST < n)
        .collect();
    if usable.len() < 3 {
        return None;
    }
    let len = (PRE + POST + 1) as usize;
    let mut tpl = Array2::zeros((12, len));
    let mut buf = vec![0.0; usable.len()];
    for l in 0..12 {
        for k in 0..len {
            for (j, &b) in usable.iter().enumerate() {
                buf[j] = x[[l, (b - PRE + k as isize) as usize]] as f64;
            }
            tpl[[l, k]] = median(&mut buf);
        }
    }
    Some(tpl)
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt().max(1e-12)
}

pub fn analyze(x: &Array2<f32>) -> Features {
    let beats = detect_beats(x);
    let rr: Vec<f64> = beats
        .windows(2)
        .map(|w| (w[1] - w[0]) as f64 * 1000.0 / FS)
        .collect();
    let mean_rr = rr.iter().sum::<f64>() / rr.len().max(1) as f64;
    let rr_sd = (rr.iter().map(|r| (r - mean_rr).powi(2)).sum::<f64>() / rr.len().max(1) as f64)
        .sqrt();

    let mut f = Features {
        beats: beats.clone(),
        rr_cv: rr_sd / mean_rr.max(1e-9),
        mean_rr_ms: mean_rr,
        p_band_mv: f64::NAN,
        qrs_width_ms: f64::NAN,
        qt_ms: f64::NAN,
        st_level: [f64::NAN; 12],
        t_peak: [f64::NAN; 12],
        v1_terminal_r: f64::NAN,
        ectopic_beats: 0,
    };
    let Some(raw) = median_template(x, &beats) else {
        return f;
    };
    let len = raw.dim().1;
    let at = |off: isize| (off + PRE) as usize;

    // Smooth lightly so single-sample noise does not dominate amplitudes.
    let mut tpl = raw.clone();
    for l in 0..12 {
        let row: Vec<f64> = raw.row(l).to_vec();
        let sm = moving_average(&row, 5);
        for k in 0..len {
            tpl[[l, k]] = sm[k];
        }
    }
    let mut baseline = [0.0; 12];
    for l in 0..12 {
        let lo = at(ms(-270.0));
        let hi = at(ms(-230.0));
        baseline[l] = (lo..hi).map(|k| tpl[[l, k]]).sum::<f64>() / (hi - lo) as f64;
    }
    let dev = |l: usize, off: isize| tpl[[l, at(off)]] - baseline[l];

    f.p_band_mv = (0..12)
        .map(|l| {
            (ms(-220.0)..ms(-100.0))
                .map(|o| dev(l, o).abs())
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max);

    // QRS extent from template slope energy.
    let mut et = vec![0.0; len];
    for k in 1..len - 1 {
        et[k] = (0..12)
            .map(|l| (tpl[[l, k + 1]] - tpl[[l, k - 1]]).abs())
            .sum();
    }
    let qrs_lo = at(ms(-120.0));
    let qrs_hi = at(ms(140.0));
    let peak = (qrs_lo..qrs_hi).map(|k| et[k]).fold(0.0, f64::max);
    let thr = 0.15 * peak;
    let onset = (qrs_lo..qrs_hi).find(|&k| et[k] > thr).unwrap_or(at(0));
    let offset = (qrs_lo..qrs_hi).rev().find(|&k| et[k] > thr).unwrap_or(at(0));
    f.qrs_width_ms = (offset - onset) as f64 * 1000.0 / FS;

    // T wave: strongest deviation after the QRS.
    let t_lo = (offset as isize + ms(80.0)) as usize;
    let t_hi = at(ms(620.0)).min(len - 1);
    let mut best = (0usize, t_lo, 0.0f64);
    for l in 0..12 {
        let mut lead_best = (t_lo, 0.0f64);
        for k in t_lo..t_hi {
            let d = tpl[[l, k]] - baseline[l];
            if d.abs() > lead_best.1.abs() {
                lead_best = (k, d);
            }
        }
        f.t_peak[l] = lead_best.1;
        if lead_best.1.abs() > best.2.abs() {
            best = (l, lead_best.0, lead_best.1);
        }
    }
    let (tl, tk, tv) = best;
    let mut tend = tk;
    while tend < len - 1 && (tpl[[tl, tend]] - baseline[tl]).abs() > 0.15 * tv.abs() {
        tend += 1;
    }
    f.qt_ms = (tend - onset) as f64 * 1000.0 / FS;

    for l in 0..12 {
        f.st_level[l] = tpl[[l, offset + ms(60.0) as usize]] - baseline[l];
    }
    f.v1_terminal_r = (ms(20.0)..ms(100.0))
        .map(|o| dev(6, o))
        .fold(f64::MIN, f64::max);

    // Ectopy: beats whose QRS window correlates poorly with the template.
    let n = x.dim().1 as isize;
    let lo = ms(-100.0);
    let hi = ms(200.0);
    let mut tpl_win = Vec::new();
    for l in 0..12 {
        for o in lo..hi {
            tpl_win.push(raw[[l, at(o)]]);
        }
    }
    for &b in &beats {
        let b = b as isize;
        if b + lo < 0 || b + hi >= n {
            continue;
        }
        let mut w = Vec::with_capacity(tpl_win.len());
        for l in 0..12 {
            for o in lo..hi {
                w.push(x[[l, (b + o) as usize]] as f64);
            }
        }
        if correlation(&w, &tpl_win) < 0.5 {
            f.ectopic_beats += 1;
        }
    }
    f
}

/// Rule-based call for each strong-morphology finding.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StrongCalls {
    pub afib: bool,
    pub prolonged_qt: bool,
    pub lbbb: bool,
    pub rbbb: bool,
    pub st_t: bool,
    pub pvc: bool,
    pub tall_t: bool,
    pub normal: bool,
}

pub fn call_strong(f: &Features) -> StrongCalls {
    let wide = f.qrs_width_ms > 100.0;
    let tall = (7..=10).map(|l| f.t_peak[l]).fold(f64::MIN, f64::max);
    let st_min = [0usize, 1, 9, 10, 11]
        .iter()
        .map(|&l| f.st_level[l])
        .fold(f64::MAX, f64::min);
    let mut c = StrongCalls {
        afib: f.rr_cv > 0.1 && f.p_band_mv < 0.03,
        prolonged_qt: f.qt_ms > 430.0,
        lbbb: wide && f.v1_terminal_r < 0.25,
        rbbb: wide && f.v1_terminal_r >= 0.25,
        st_t: !wide && st_min < -0.08,
        pvc: f.ectopic_beats >= 1,
        tall_t: tall > 0.8,
        normal: false,
    };
    c.normal = !(c.afib || c.prolonged_qt || c.lbbb || c.rbbb || c.st_t || c.pvc || c.tall_t);
    c
}
