//! `foleygen eval`: event-L1 between matched reference/generated trees plus
//! optional FAD/IS from supplied embedding and probability files.

use std::path::PathBuf;

use foleygen_core::error::{Error, Result};
use foleygen_core::feature::{DEFAULT_HOP, DEFAULT_WINDOW};
use foleygen_core::metrics::{evaluate_run, report_to_csv, EvalConfig};

use crate::args::{resolve, KvConfig};

#[derive(Debug, clap::Args)]
pub struct EvalArgs {
    /// Directory of generated WAVs (mirrors the reference layout)
    #[arg(long)]
    pub generated: PathBuf,

    /// Directory of reference WAVs (flat or folder per class)
    #[arg(long)]
    pub reference: PathBuf,

    /// Analysis window W in samples
    #[arg(long)]
    pub window: Option<usize>,

    /// Hop h in samples
    #[arg(long)]
    pub hop: Option<usize>,

    /// Embedding file for the reference set (enables FAD with --emb-gen)
    #[arg(long)]
    pub emb_ref: Option<PathBuf>,

    /// Embedding file for the generated set
    #[arg(long)]
    pub emb_gen: Option<PathBuf>,

    /// Class-probability CSV for the generated set (enables IS)
    #[arg(long)]
    pub probs: Option<PathBuf>,

    /// Splits for the Inception Score
    #[arg(long)]
    pub is_splits: Option<usize>,
}

pub fn run(a: &EvalArgs, file: &KvConfig, out: &Option<PathBuf>) -> Result<()> {
    let cfg = EvalConfig {
        window: resolve(a.window, file.get("window")?, DEFAULT_WINDOW),
        hop: resolve(a.hop, file.get("hop")?, DEFAULT_HOP),
        emb_ref: a.emb_ref.clone(),
        emb_gen: a.emb_gen.clone(),
        probs: a.probs.clone(),
        is_splits: resolve(a.is_splits, file.get("is_splits")?, 1),
    };
    let report = evaluate_run(&a.generated, &a.reference, &cfg)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    if !report.warnings.is_empty() {
        eprintln!("warnings: {}", report.warnings.len());
    }
    let csv = report_to_csv(&report);
    print!("{csv}");
    if let Some(path) = out {
        std::fs::write(path, &csv).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}
