//! 16-bit PCM mono WAV reading and writing — the bit-exact boundary between
//! disk and the numeric pipeline. No resampling is performed anywhere; rate
//! mismatches are hard errors so frame arithmetic stays exact.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Mono audio signal with samples in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Self {
        assert!(sample_rate > 0);
        Waveform {
            samples,
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.len() as f64 / self.sample_rate as f64
    }
}

const PCM_SCALE: f32 = 32768.0;

fn read_u16(buf: &[u8], pos: usize) -> u16 {
    u16::from_le_bytes([buf[pos], buf[pos + 1]])
}

fn read_u32(buf: &[u8], pos: usize) -> u32 {
    u32::from_le_bytes([buf[pos], buf[pos + 1], buf[pos + 2], buf[pos + 3]])
}

/// Decode a RIFF/WAVE file. Only PCM, 16-bit, mono is accepted; anything
/// else is an unsupported-format error naming the offending field.
pub fn read_wav(path: &Path) -> Result<Waveform> {
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_wav(&buf)
}

pub fn decode_wav(buf: &[u8]) -> Result<Waveform> {
    let malformed = |detail: String| Error::Format {
        what: "wav",
        detail,
    };
    if buf.len() < 12 {
        return Err(malformed("file shorter than RIFF header".into()));
    }
    if &buf[0..4] != b"RIFF" {
        return Err(malformed("missing RIFF tag".into()));
    }
    if &buf[8..12] != b"WAVE" {
        return Err(malformed("missing WAVE tag".into()));
    }

    let mut pos = 12usize;
    let mut fmt: Option<(u16, u16, u32, u16)> = None; // format, channels, rate, bits
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= buf.len() {
        let id = &buf[pos..pos + 4];
        let size = read_u32(buf, pos + 4) as usize;
        let body_start = pos + 8;
        if body_start + size > buf.len() {
            return Err(malformed(format!(
                "chunk {:?} overruns file",
                String::from_utf8_lossy(id)
            )));
        }
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(malformed("fmt chunk shorter than 16 bytes".into()));
                }
                fmt = Some((
                    read_u16(buf, body_start),
                    read_u16(buf, body_start + 2),
                    read_u32(buf, body_start + 4),
                    read_u16(buf, body_start + 14),
                ));
            }
            b"data" => {
                data = Some(&buf[body_start..body_start + size]);
            }
            _ => {}
        }
        // chunks are word-aligned
        pos = body_start + size + (size & 1);
    }

    let (format, channels, sample_rate, bits) =
        fmt.ok_or_else(|| malformed("no fmt chunk".into()))?;
    if format != 1 {
        return Err(Error::Unsupported(format!(
            "audio format code {format} (only PCM=1 is supported)"
        )));
    }
    if channels != 1 {
        return Err(Error::Unsupported(format!(
            "{channels} channels (only mono is supported)"
        )));
    }
    if bits != 16 {
        return Err(Error::Unsupported(format!(
            "{bits} bits per sample (only 16-bit is supported)"
        )));
    }
    if sample_rate == 0 {
        return Err(malformed("sample rate 0".into()));
    }
    let data = data.ok_or_else(|| malformed("no data chunk".into()))?;
    if data.len() % 2 != 0 {
        return Err(malformed("data chunk has odd byte count".into()));
    }
    let samples = data
        .chunks_exact(2)
        .map(|b| i16::from_le_bytes([b[0], b[1]]) as f32 / PCM_SCALE)
        .collect();
    Ok(Waveform {
        samples,
        sample_rate,
    })
}

/// Encode as 16-bit PCM mono. Samples are clamped to [-1, 1] and quantized
/// round-to-nearest, so generated audio slightly outside the range is
/// tolerated rather than rejected.
pub fn encode_wav(w: &Waveform) -> Result<Vec<u8>> {
    if w.samples.iter().any(|s| !s.is_finite()) {
        return Err(Error::Numeric("non-finite sample in waveform".into()));
    }
    let data_size = (w.samples.len() * 2) as u32;
    let mut buf = Vec::with_capacity(44 + w.samples.len() * 2);
    buf.extend_from_slice(b"RIFF");
    buf.extend_from_slice(&(36 + data_size).to_le_bytes());
    buf.extend_from_slice(b"WAVE");
    buf.extend_from_slice(b"fmt ");
    buf.extend_from_slice(&16u32.to_le_bytes());
    buf.extend_from_slice(&1u16.to_le_bytes()); // PCM
    buf.extend_from_slice(&1u16.to_le_bytes()); // mono
    buf.extend_from_slice(&w.sample_rate.to_le_bytes());
    buf.extend_from_slice(&(w.sample_rate * 2).to_le_bytes()); // byte rate
    buf.extend_from_slice(&2u16.to_le_bytes()); // block align
    buf.extend_from_slice(&16u16.to_le_bytes()); // bits
    buf.extend_from_slice(b"data");
    buf.extend_from_slice(&data_size.to_le_bytes());
    for &s in &w.samples {
        let q = (s as f64 * PCM_SCALE as f64).round();
        let q = q.clamp(-32768.0, 32767.0) as i16;
        buf.extend_from_slice(&q.to_le_bytes());
    }
    Ok(buf)
}

pub fn write_wav(w: &Waveform, path: &Path) -> Result<()> {
    let buf = encode_wav(w)?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Checks the fixed training geometry: exact sample rate and length.
pub fn validate_training_format(w: &Waveform, expected_rate: u32, expected_len: usize) -> Result<()> {
    if w.sample_rate != expected_rate {
        return Err(Error::Validation(format!(
            "sample rate {} Hz, expected {} Hz",
            w.sample_rate, expected_rate
        )));
    }
    if w.len() != expected_len {
        return Err(Error::Validation(format!(
            "length {} samples, expected {}",
            w.len(),
            expected_len
        )));
    }
    Ok(())
}
