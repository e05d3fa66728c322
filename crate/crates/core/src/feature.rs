//! Frame-level RMS temporal event feature: the envelope sequence that tells
//! the model when and how strongly sound events occur.
//!
//! Frame i covers samples [i*hop, i*hop + window); only fully contained
//! windows produce frames, so every value is a true RMS with no padding.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::wave::Waveform;

/// Default analysis window in samples.
pub const DEFAULT_WINDOW: usize = 512;
/// Default hop in samples.
pub const DEFAULT_HOP: usize = 128;

/// Non-negative envelope values, one per frame, plus the frame geometry they
/// were computed with.
#[derive(Debug, Clone, PartialEq)]
pub struct EventFeature {
    pub values: Vec<f64>,
    pub window: usize,
    pub hop: usize,
    pub source_rate: u32,
}

impl EventFeature {
    pub fn frame_count(&self) -> usize {
        self.values.len()
    }

    pub fn same_geometry(&self, other: &EventFeature) -> bool {
        self.window == other.window
            && self.hop == other.hop
            && self.frame_count() == other.frame_count()
    }
}

/// Number of fully contained analysis frames.
pub fn frame_count(len: usize, window: usize, hop: usize) -> usize {
    if len < window {
        0
    } else {
        (len - window) / hop + 1
    }
}

fn check_framing(len: usize, window: usize, hop: usize) -> Result<()> {
    if window < 1 || hop < 1 {
        return Err(Error::Domain(format!(
            "window and hop must be >= 1 (got {window}, {hop})"
        )));
    }
    if len < window {
        return Err(Error::Validation(format!(
            "signal of {len} samples is shorter than the {window}-sample window"
        )));
    }
    Ok(())
}

/// Frame-level RMS: values[i] = sqrt(mean of x^2 over window i).
pub fn extract_rms(w: &Waveform, window: usize, hop: usize) -> Result<EventFeature> {
    check_framing(w.len(), window, hop)?;
    let k = frame_count(w.len(), window, hop);
    let mut values = Vec::with_capacity(k);
    for i in 0..k {
        let start = i * hop;
        let sum_sq: f64 = w.samples[start..start + window]
            .iter()
            .map(|&s| {
                let v = s as f64;
                v * v
            })
            .sum();
        values.push((sum_sq / window as f64).sqrt());
    }
    Ok(EventFeature {
        values,
        window,
        hop,
        source_rate: w.sample_rate,
    })
}

/// Power variant: the element-wise square of the RMS feature.
pub fn extract_power(w: &Waveform, window: usize, hop: usize) -> Result<EventFeature> {
    let mut f = extract_rms(w, window, hop)?;
    for v in f.values.iter_mut() {
        *v = *v * *v;
    }
    Ok(f)
}

/// Multiply every value by `gain` (> 0), leaving the geometry untouched.
pub fn scale_gain(f: &EventFeature, gain: f64) -> Result<EventFeature> {
    if gain <= 0.0 || gain.is_nan() {
        return Err(Error::Domain(format!("gain must be > 0, got {gain}")));
    }
    let mut out = f.clone();
    for v in out.values.iter_mut() {
        *v *= gain;
    }
    Ok(out)
}

/// Split into `n` contiguous blocks (right-padding by repeating the last
/// value until divisible) and reduce each block by max.
pub fn block_pool(f: &EventFeature, n: usize) -> Result<Vec<f64>> {
    pool_values(&f.values, n)
}

pub fn pool_values(values: &[f64], n: usize) -> Result<Vec<f64>> {
    if n < 1 {
        return Err(Error::Domain("block count must be >= 1".into()));
    }
    if n > values.len() {
        return Err(Error::Domain(format!(
            "block count {n} exceeds frame count {}",
            values.len()
        )));
    }
    let block_len = values.len().div_ceil(n);
    let last = *values.last().unwrap();
    let mut out = Vec::with_capacity(n);
    for b in 0..n {
        let mut m = f64::NEG_INFINITY;
        for i in b * block_len..(b + 1) * block_len {
            let v = if i < values.len() { values[i] } else { last };
            if v > m {
                m = v;
            }
        }
        out.push(m);
    }
    Ok(out)
}

const FEATURE_MAGIC: &[u8; 4] = b"EVF1";

/// Binary container: 16-byte header (magic, window, hop, count as little
/// endian u32s) followed by `count` f32 values.
pub fn encode_feature(f: &EventFeature) -> Vec<u8> {
    let mut buf = Vec::with_capacity(16 + 4 * f.values.len());
    buf.extend_from_slice(FEATURE_MAGIC);
    buf.extend_from_slice(&(f.window as u32).to_le_bytes());
    buf.extend_from_slice(&(f.hop as u32).to_le_bytes());
    buf.extend_from_slice(&(f.values.len() as u32).to_le_bytes());
    for &v in &f.values {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    buf
}

pub fn decode_feature(buf: &[u8]) -> Result<EventFeature> {
    let malformed = |detail: String| Error::Format {
        what: "feature file",
        detail,
    };
    if buf.len() < 16 {
        return Err(malformed("shorter than 16-byte header".into()));
    }
    if &buf[0..4] != FEATURE_MAGIC {
        return Err(malformed("bad magic".into()));
    }
    let window = u32::from_le_bytes(buf[4..8].try_into().unwrap()) as usize;
    let hop = u32::from_le_bytes(buf[8..12].try_into().unwrap()) as usize;
    let count = u32::from_le_bytes(buf[12..16].try_into().unwrap()) as usize;
    if buf.len() != 16 + 4 * count {
        return Err(malformed(format!(
            "expected {count} values, file holds {} bytes of data",
            buf.len() - 16
        )));
    }
    let values = buf[16..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
        .collect();
    Ok(EventFeature {
        values,
        window,
        hop,
        source_rate: 0,
    })
}

pub fn write_feature(f: &EventFeature, path: &Path) -> Result<()> {
    fs::write(path, encode_feature(f)).map_err(|e| Error::io(path, e))
}

pub fn read_feature(path: &Path) -> Result<EventFeature> {
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_feature(&buf)
}

/// CSV form: a header row then one value per row.
pub fn feature_to_csv(f: &EventFeature) -> String {
    let mut s = String::from("value\n");
    for v in &f.values {
        s.push_str(&format!("{v}\n"));
    }
    s
}

pub fn write_feature_csv(f: &EventFeature, path: &Path) -> Result<()> {
    fs::write(path, feature_to_csv(f)).map_err(|e| Error::io(path, e))
}
