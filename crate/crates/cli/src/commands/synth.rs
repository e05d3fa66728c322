//! `foleygen synth-corpus`: deterministic synthetic corpus on disk.

use std::path::PathBuf;

use foleygen_core::corpus::{corpus_fingerprint, synth_toy_corpus, write_corpus};
use foleygen_core::error::Result;

use crate::args::{out_dir_or, resolve, KvConfig, SynthArgs};

#[derive(Debug, clap::Args)]
pub struct SynthCorpusArgs {
    #[command(flatten)]
    pub synth: SynthArgs,

    /// Sample rate in Hz
    #[arg(long)]
    pub rate: Option<u32>,
}

pub fn run(a: &SynthCorpusArgs, file: &KvConfig, seed: u64, out: &Option<PathBuf>) -> Result<()> {
    let rate = resolve(a.rate, file.get("rate")?, 8000);
    let cfg = a.synth.to_config(file, rate, seed)?;
    let clips = synth_toy_corpus(&cfg)?;
    let dir = out_dir_or(out, "corpus");
    write_corpus(&clips, &dir)?;
    println!(
        "wrote {} clips ({} classes x {}) at {} Hz to {} (fingerprint {:016x})",
        clips.len(),
        cfg.class_names.len(),
        cfg.clips_per_class,
        rate,
        dir.display(),
        corpus_fingerprint(&clips)
    );
    Ok(())
}
