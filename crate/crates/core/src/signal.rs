//! Raw 12-lead signal storage: headerless little-endian float32, lead-major.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

pub const NUM_LEADS: usize = 12;
pub const NUM_SAMPLES: usize = 5000;
pub const SAMPLE_RATE_HZ: f64 = 500.0;
pub const SIGNAL_BYTES: usize = NUM_LEADS * NUM_SAMPLES * 4;

pub const LEAD_NAMES: [&str; NUM_LEADS] = [
    "I", "II", "III", "aVR", "aVL", "aVF", "V1", "V2", "V3", "V4", "V5", "V6",
];

/// Signal in millivolts, shape `[leads, samples]`.
pub type Signal = Array2<f32>;

pub fn check_signal(signal: &Signal, what: &str) -> Result<()> {
    if signal.dim() != (NUM_LEADS, NUM_SAMPLES) {
        return Err(Error::Shape(format!(
            "{what}: expected {NUM_LEADS}x{NUM_SAMPLES}, got {:?}",
            signal.dim()
        )));
    }
    if signal.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(what.to_string()));
    }
    Ok(())
}

pub fn decode_signal(bytes: &[u8], path: &Path) -> Result<Signal> {
    if bytes.len() != SIGNAL_BYTES {
        return Err(Error::SignalFormat {
            path: path.to_path_buf(),
            reason: format!("expected {SIGNAL_BYTES} bytes, found {}", bytes.len()),
        });
    }
    let values: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(path.display().to_string()));
    }
    Ok(Array2::from_shape_vec((NUM_LEADS, NUM_SAMPLES), values).expect("length checked above"))
}

pub fn encode_signal(signal: &Signal) -> Vec<u8> {
    let mut out = Vec::with_capacity(signal.len() * 4);
    for lead in signal.rows() {
        for v in lead {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn load_signal(path: &Path) -> Result<Signal> {
    let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    decode_signal(&bytes, path)
}

pub fn save_signal(path: &Path, signal: &Signal) -> Result<()> {
    check_signal(signal, &path.display().to_string())?;
    fs::write(path, encode_signal(signal))
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}
