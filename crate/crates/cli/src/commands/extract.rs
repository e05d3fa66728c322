//! `foleygen extract`: WAV in, event feature out (binary or CSV by
//! extension).

use std::path::PathBuf;

use foleygen_core::error::{Error, Result};
use foleygen_core::feature::{
    extract_rms, scale_gain, write_feature, write_feature_csv, DEFAULT_HOP, DEFAULT_WINDOW,
};
use foleygen_core::wave::read_wav;

use crate::args::{resolve, KvConfig};

#[derive(Debug, clap::Args)]
pub struct ExtractArgs {
    /// Input WAV file (16-bit PCM mono)
    pub audio: PathBuf,

    /// Analysis window W in samples
    #[arg(long)]
    pub window: Option<usize>,

    /// Hop h in samples
    #[arg(long)]
    pub hop: Option<usize>,

    /// Gain applied to the feature values (> 0)
    #[arg(long)]
    pub gain: Option<f64>,
}

pub fn run(a: &ExtractArgs, file: &KvConfig, out: &Option<PathBuf>) -> Result<()> {
    let window = resolve(a.window, file.get("window")?, DEFAULT_WINDOW);
    let hop = resolve(a.hop, file.get("hop")?, DEFAULT_HOP);
    let gain = resolve(a.gain, file.get("gain")?, 1.0);
    let wave = read_wav(&a.audio)?;
    let feature = scale_gain(&extract_rms(&wave, window, hop)?, gain)?;
    let out = out.clone().ok_or_else(|| {
        Error::Validation("extract needs --out <feature file> (.csv or binary)".into())
    })?;
    if out.extension().map(|e| e == "csv").unwrap_or(false) {
        write_feature_csv(&feature, &out)?;
    } else {
        write_feature(&feature, &out)?;
    }
    println!(
        "wrote {} frames (window {window}, hop {hop}, gain {gain}) to {}",
        feature.frame_count(),
        out.display()
    );
    Ok(())
}
