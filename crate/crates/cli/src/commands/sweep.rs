//! `foleygen sweep-blocks`: train (or fine-tune) one model per temporal
//! block count, then measure event-L1 against held-out conditions and
//! per-sample inference wall-clock. Emits one CSV row per block count.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use foleygen_core::corpus::{load_directory, split, synth_toy_corpus, LabeledClip};
use foleygen_core::error::{Error, Result};
use foleygen_core::feature::extract_rms;
use foleygen_core::metrics::event_l1;
use foleygen_core::nn::{import_params, read_checkpoint, Adam, AdamConfig};
use foleygen_core::train::{prepare_corpus, train_model, TrainOptions, CHECKPOINT_FILE};
use foleygen_core::unet::UNet;
use foleygen_core::RandomSource;

use crate::args::{out_dir_or, resolve, KvConfig, ModelArgs, SynthArgs, TrainArgs};
use crate::commands::generate::{generate_many, generate_one, GenJob};

#[derive(Debug, clap::Args)]
pub struct SweepArgs {
    /// Labeled corpus directory (folder per class)
    #[arg(long, conflicts_with = "synth")]
    pub corpus: Option<PathBuf>,

    /// Synthesize the corpus instead of loading one
    #[arg(long)]
    pub synth: bool,

    /// Block counts to sweep, comma separated
    #[arg(long, default_value = "4,8,16,32")]
    pub blocks: String,

    /// Fine-tune from this checkpoint instead of training from scratch
    /// (temporal-layer parameters are shared across block counts)
    #[arg(long)]
    pub base_checkpoint: Option<PathBuf>,

    /// Held-out conditions evaluated per class
    #[arg(long)]
    pub samples_per_class: Option<usize>,

    /// Sampler steps for evaluation and timing
    #[arg(long)]
    pub steps: Option<usize>,

    /// Guidance weight for evaluation and timing
    #[arg(long)]
    pub guidance: Option<f64>,

    /// Timing repetitions; the minimum is reported
    #[arg(long)]
    pub timing_reps: Option<usize>,

    /// Validation fraction held out per class
    #[arg(long)]
    pub val_fraction: Option<f64>,

    #[command(flatten)]
    pub model: ModelArgs,

    #[command(flatten)]
    pub train: TrainArgs,

    #[command(flatten)]
    pub synth_args: SynthArgs,
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub blocks: usize,
    pub e_l1: f64,
    pub infer_time_s: f64,
    pub params: usize,
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("blocks,e_l1,infer_time_s,params\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{}\n",
            r.blocks, r.e_l1, r.infer_time_s, r.params
        ));
    }
    s
}


pub fn run(a: &SweepArgs, file: &KvConfig, seed: u64, out: &Option<PathBuf>) -> Result<()> {
    let out_dir = out_dir_or(out, "runs/sweep");
    let rows = run_inner(a, file, seed, &out_dir)?;
    let csv = sweep_csv(&rows);
    print!("{csv}");
    let path = out_dir.join("sweep.csv");
    std::fs::write(&path, &csv).map_err(|e| Error::io(&path, e))?;
    println!("wrote {}", path.display());
    Ok(())
}

pub fn run_inner(
    a: &SweepArgs,
    file: &KvConfig,
    seed: u64,
    out_dir: &Path,
) -> Result<Vec<SweepRow>> {
    let block_list: Vec<usize> = a
        .blocks
        .split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| Error::Validation(format!("bad --blocks list {:?}", a.blocks)))?;
    if block_list.iter().any(|&n| n < 1) {
        return Err(Error::Domain("block counts must be >= 1".into()));
    }
    let train_cfg = a.train.to_config(file, seed)?;
    let steps = resolve(a.steps, file.get("steps")?, 32);
    let guidance = resolve(a.guidance, file.get("guidance")?, 2.0);
    let timing_reps = resolve(a.timing_reps, file.get("timing_reps")?, 5);
    let samples_per_class = resolve(a.samples_per_class, file.get("samples_per_class")?, 4);
    let val_fraction = resolve(a.val_fraction, file.get("val_fraction")?, 0.1);

    // one shared corpus and split for every block count
    let (clips, class_names) = if a.synth {
        let sample_rate = resolve(a.model.sample_rate, file.get("sample_rate")?, 8000);
        let synth_cfg = a.synth_args.to_config(file, sample_rate, seed)?;
        (synth_toy_corpus(&synth_cfg)?, synth_cfg.class_names)
    } else {
        let dir = a
            .corpus
            .as_ref()
            .ok_or_else(|| Error::Validation("sweep-blocks needs --corpus or --synth".into()))?;
        let loaded = load_directory(dir)?;
        for w in &loaded.warnings {
            eprintln!("warning: {w}");
        }
        (loaded.clips, loaded.class_names)
    };
    let (train_clips, val_clips, warnings) = split(clips, val_fraction, seed)?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    if val_clips.is_empty() {
        return Err(Error::Validation(
            "sweep needs a non-empty validation split".into(),
        ));
    }

    let base_entries = match &a.base_checkpoint {
        Some(dir) => Some(read_checkpoint(&dir.join(CHECKPOINT_FILE))?),
        None => None,
    };

    // train every block count first so inference timing can interleave the
    // finished models
    let threads = a.train.threads(file)?;
    let mut models = Vec::new();
    for &n in &block_list {
        let mut cfg = a.model.to_config(file, class_names.clone())?;
        cfg.blocks = n;
        cfg.validate()?;
        let mut model = UNet::new(cfg.clone(), seed)?;
        // temporal parameters are block-count independent, so a base
        // checkpoint fine-tunes at any N
        if let Some(entries) = &base_entries {
            import_params(&mut model, entries)?;
        }
        let mut adam = Adam::new(AdamConfig::default());
        let run_dir = out_dir.join(format!("n{n}"));
        train_model(
            &mut model,
            &mut adam,
            &prepare_corpus(&train_clips, &cfg)?,
            &TrainOptions {
                cfg: train_cfg,
                out_dir: run_dir,
                checkpoint_every: 0,
                threads,
            },
            0,
        )?;
        println!("blocks {n}: trained");
        models.push(model);
    }

    let mut rows = Vec::new();
    for model in &mut models {
        let e_l1 = blockwise_e_l1(model, &val_clips, samples_per_class, steps, guidance, seed, threads)?;
        rows.push(SweepRow {
            blocks: model.cfg.blocks,
            e_l1,
            infer_time_s: 0.0,
            params: model.param_total(),
        });
    }
    let times = interleaved_inference_times(&models, &val_clips, steps, guidance, timing_reps)?;
    for (row, time) in rows.iter_mut().zip(times) {
        row.infer_time_s = time;
        println!(
            "blocks {}: e_l1 {:.5}, per-sample inference {:.3}s, params {}",
            row.blocks, row.e_l1, row.infer_time_s, row.params
        );
    }
    Ok(rows)
}

/// Mean event-L1 of generated audio against its held-out conditioning
/// features, class-wise averaged; identical generation seeds are used for
/// every block count so rows are comparable.
#[allow(clippy::too_many_arguments)]
pub fn blockwise_e_l1(
    model: &UNet<f32>,
    val_clips: &[LabeledClip],
    samples_per_class: usize,
    steps: usize,
    guidance: f64,
    seed: u64,
    threads: usize,
) -> Result<f64> {
    let cfg = &model.cfg;
    let mut jobs = Vec::new();
    let mut taken: BTreeMap<usize, usize> = BTreeMap::new();
    for (idx, clip) in val_clips.iter().enumerate() {
        let count = taken.entry(clip.class_id).or_insert(0);
        if *count >= samples_per_class {
            continue;
        }
        *count += 1;
        jobs.push(GenJob {
            class_id: clip.class_id,
            feature: extract_rms(&clip.wave, cfg.event_window, cfg.event_hop)?,
            seed: RandomSource::derive(seed, 0x9E40_0000 ^ idx as u64).next_u64(),
        });
    }
    let waves = generate_many(model, &jobs, steps, guidance, threads)?;
    let mut per_class: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for (job, wave) in jobs.iter().zip(&waves) {
        let generated = extract_rms(wave, cfg.event_window, cfg.event_hop)?;
        per_class
            .entry(job.class_id)
            .or_default()
            .push(event_l1(&job.feature, &generated)?);
    }
    let class_means: Vec<f64> = per_class
        .values()
        .map(|v| v.iter().sum::<f64>() / v.len() as f64)
        .collect();
    Ok(class_means.iter().sum::<f64>() / class_means.len() as f64)
}

/// Per-sample inference wall-clock for each model, measured as the minimum
/// over interleaved rounds (one timed sample per model per round, after a
/// warmup round) so slow drifts in machine speed hit every block count
/// alike.
pub fn interleaved_inference_times(
    models: &[UNet<f32>],
    val_clips: &[LabeledClip],
    steps: usize,
    guidance: f64,
    rounds: usize,
) -> Result<Vec<f64>> {
    let cfg = &models[0].cfg;
    let clip = &val_clips[0];
    let feature = extract_rms(&clip.wave, cfg.event_window, cfg.event_hop)?;
    for model in models {
        let _ = generate_one(model, clip.class_id, &feature, steps, guidance, 7)?;
    }
    let mut mins = vec![f64::INFINITY; models.len()];
    for round in 0..rounds.max(3) {
        for (i, model) in models.iter().enumerate() {
            let t0 = Instant::now();
            let _ = generate_one(
                model,
                clip.class_id,
                &feature,
                steps,
                guidance,
                1000 + round as u64,
            )?;
            let dt = t0.elapsed().as_secs_f64();
            if dt < mins[i] {
                mins[i] = dt;
            }
        }
    }
    Ok(mins)
}
