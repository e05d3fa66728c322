//! `foleygen train`: corpus in (loaded or synthesized), checkpoint directory
//! out, with a loss log and a reproducibility manifest.

use std::path::{Path, PathBuf};
use std::time::Instant;

use foleygen_core::corpus::{corpus_fingerprint, load_directory, split, synth_toy_corpus, write_corpus, LabeledClip};
use foleygen_core::error::{Error, Result};
use foleygen_core::nn::{Adam, AdamConfig};
use foleygen_core::train::{
    load_checkpoint_dir, prepare_corpus, train_model, TrainOptions, CHECKPOINT_FILE,
};
use foleygen_core::unet::UNet;

use crate::args::{out_dir_or, resolve, KvConfig, ModelArgs, SynthArgs, TrainArgs};

#[derive(Debug, clap::Args)]
pub struct TrainCmdArgs {
    /// Labeled corpus directory (folder per class)
    #[arg(long, conflicts_with = "synth")]
    pub corpus: Option<PathBuf>,

    /// Synthesize the training corpus instead of loading one
    #[arg(long)]
    pub synth: bool,

    /// Resume from an existing checkpoint directory
    #[arg(long)]
    pub resume: Option<PathBuf>,

    /// Validation fraction held out per class (stratified)
    #[arg(long)]
    pub val_fraction: Option<f64>,

    #[command(flatten)]
    pub model: ModelArgs,

    #[command(flatten)]
    pub train: TrainArgs,

    #[command(flatten)]
    pub synth_args: SynthArgs,
}

pub struct TrainedRun {
    pub out_dir: PathBuf,
    pub final_loss: f64,
}

pub fn run(a: &TrainCmdArgs, file: &KvConfig, seed: u64, out: &Option<PathBuf>) -> Result<()> {
    let out_dir = out_dir_or(out, "runs/train");
    run_inner(a, file, seed, &out_dir).map(|_| ())
}

pub fn run_inner(
    a: &TrainCmdArgs,
    file: &KvConfig,
    seed: u64,
    out_dir: &Path,
) -> Result<TrainedRun> {
    let started = Instant::now();
    let train_cfg = a.train.to_config(file, seed)?;
    let val_fraction = resolve(a.val_fraction, file.get("val_fraction")?, 0.05);

    // corpus
    let (clips, class_names) = if a.synth {
        let sample_rate = resolve(a.model.sample_rate, file.get("sample_rate")?, 8000);
        let synth_cfg = a.synth_args.to_config(file, sample_rate, seed)?;
        let clips = synth_toy_corpus(&synth_cfg)?;
        (clips, synth_cfg.class_names)
    } else {
        let corpus_dir = a
            .corpus
            .as_ref()
            .ok_or_else(|| Error::Validation("train needs --corpus <dir> or --synth".into()))?;
        let loaded = load_directory(corpus_dir)?;
        for w in &loaded.warnings {
            eprintln!("warning: {w}");
        }
        if loaded.clips.is_empty() {
            return Err(Error::Validation(format!(
                "no usable clips under {}",
                corpus_dir.display()
            )));
        }
        (loaded.clips, loaded.class_names)
    };
    let fingerprint = corpus_fingerprint(&clips);

    let (mut model, mut adam, start_epoch, model_cfg) = match &a.resume {
        Some(dir) => {
            let (model, adam, done) = load_checkpoint_dir(dir)?;
            let cfg = model.cfg.clone();
            (model, adam, done, cfg)
        }
        None => {
            let cfg = a.model.to_config(file, class_names.clone())?;
            let model = UNet::new(cfg.clone(), seed)?;
            (model, Adam::new(AdamConfig::default()), 0, cfg)
        }
    };
    if model_cfg.class_names != class_names {
        return Err(Error::Validation(format!(
            "corpus classes {:?} do not match model classes {:?}",
            class_names, model_cfg.class_names
        )));
    }

    // stratified split; validation clips are written out for later eval
    let (train_clips, val_clips, warnings) = split_or_all(clips, val_fraction, seed)?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    if !val_clips.is_empty() {
        write_corpus(&val_clips, &out_dir.join("val"))?;
    }

    let data = prepare_corpus(&train_clips, &model_cfg)?;
    let opts = TrainOptions {
        cfg: train_cfg,
        out_dir: out_dir.to_path_buf(),
        checkpoint_every: a.train.checkpoint_every(file)?,
        threads: a.train.threads(file)?,
    };
    let report = train_model(&mut model, &mut adam, &data, &opts, start_epoch)?;
    let final_loss = report.records.last().map(|r| r.loss).unwrap_or(f64::NAN);

    let manifest = format!(
        "seed={seed}\ncorpus_fingerprint={fingerprint:016x}\ntrain_clips={}\nval_clips={}\nval_fraction={val_fraction}\nepochs={}\nbatch={}\nlr={}\ncond_drop_p={}\nfinal_loss={final_loss}\ncheckpoint={}\nwall_clock_secs={:.2}\n",
        data.len(),
        val_clips.len(),
        report.epochs_done,
        train_cfg.batch_size,
        train_cfg.lr,
        train_cfg.cond_drop_p,
        out_dir.join(CHECKPOINT_FILE).display(),
        started.elapsed().as_secs_f64()
    );
    let manifest_path = out_dir.join("manifest.txt");
    std::fs::write(&manifest_path, manifest).map_err(|e| Error::io(&manifest_path, e))?;
    println!(
        "trained {} epochs on {} clips; final loss {final_loss:.6}; checkpoint in {}",
        report.epochs_done,
        data.len(),
        out_dir.display()
    );
    Ok(TrainedRun {
        out_dir: out_dir.to_path_buf(),
        final_loss,
    })
}

fn split_or_all(
    clips: Vec<LabeledClip>,
    val_fraction: f64,
    seed: u64,
) -> Result<(Vec<LabeledClip>, Vec<LabeledClip>, Vec<String>)> {
    if val_fraction <= 0.0 {
        return Ok((clips, Vec::new(), Vec::new()));
    }
    split(clips, val_fraction, seed)
}
