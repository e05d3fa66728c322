//! `foleygen generate`: sample WAVs from a checkpoint under a temporal
//! condition taken from audio (any mono 16-bit WAV at the model rate, voice
//! recordings included) or from a feature file.

use std::path::{Path, PathBuf};

use foleygen_core::diffusion::{sample, CondInput, SamplerConfig};
use foleygen_core::error::{Error, Result};
use foleygen_core::feature::{extract_rms, read_feature, scale_gain, EventFeature};
use foleygen_core::train::load_checkpoint_dir;
use foleygen_core::unet::UNet;
use foleygen_core::wave::{read_wav, write_wav, Waveform};
use foleygen_core::RandomSource;

use crate::args::{out_dir_or, resolve, KvConfig};

#[derive(Debug, clap::Args)]
pub struct GenerateArgs {
    /// Checkpoint directory produced by `train`
    #[arg(long)]
    pub checkpoint: PathBuf,

    /// Target sound class name
    #[arg(long)]
    pub class: String,

    /// Condition audio; its RMS feature becomes the temporal condition
    #[arg(long, conflicts_with = "cond_feature")]
    pub cond_audio: Option<PathBuf>,

    /// Condition feature file written by `extract`
    #[arg(long)]
    pub cond_feature: Option<PathBuf>,

    /// Gain applied to the condition feature
    #[arg(long)]
    pub gain: Option<f64>,

    /// Number of samples to generate
    #[arg(long)]
    pub count: Option<usize>,

    /// Sampler steps
    #[arg(long)]
    pub steps: Option<usize>,

    /// Classifier-free guidance weight
    #[arg(long)]
    pub guidance: Option<f64>,
}

/// Load the temporal condition for a model from audio or a feature file.
pub fn load_condition(
    model: &UNet<f32>,
    cond_audio: Option<&Path>,
    cond_feature: Option<&Path>,
    gain: f64,
) -> Result<EventFeature> {
    let cfg = &model.cfg;
    let feature = match (cond_audio, cond_feature) {
        (Some(path), _) => {
            let mut wave = read_wav(path)?;
            if wave.sample_rate != cfg.sample_rate {
                return Err(Error::Validation(format!(
                    "condition audio is {} Hz, model expects {} Hz (no resampling)",
                    wave.sample_rate, cfg.sample_rate
                )));
            }
            if wave.len() < cfg.sample_len {
                return Err(Error::Validation(format!(
                    "condition audio has {} samples, model needs {}",
                    wave.len(),
                    cfg.sample_len
                )));
            }
            if wave.len() > cfg.sample_len {
                eprintln!(
                    "warning: trimming condition audio from {} to {} samples",
                    wave.len(),
                    cfg.sample_len
                );
                wave.samples.truncate(cfg.sample_len);
            }
            extract_rms(&wave, cfg.event_window, cfg.event_hop)?
        }
        (None, Some(path)) => {
            let f = read_feature(path)?;
            if f.window != cfg.event_window || f.hop != cfg.event_hop {
                return Err(Error::Validation(format!(
                    "feature geometry ({}, {}) does not match model ({}, {})",
                    f.window, f.hop, cfg.event_window, cfg.event_hop
                )));
            }
            f
        }
        (None, None) => {
            return Err(Error::Validation(
                "generate needs --cond-audio <wav> or --cond-feature <file>".into(),
            ))
        }
    };
    let feature = scale_gain(&feature, gain)?;
    if feature.frame_count() != cfg.frame_count() {
        return Err(Error::Validation(format!(
            "condition has {} frames, model expects {}",
            feature.frame_count(),
            cfg.frame_count()
        )));
    }
    Ok(feature)
}

/// Sample one waveform; the per-sample seed comes from (seed, index).
pub fn generate_one(
    model: &UNet<f32>,
    class_id: usize,
    feature: &EventFeature,
    steps: usize,
    guidance: f64,
    seed: u64,
) -> Result<Waveform> {
    let temporal: Vec<f32> = feature.values.iter().map(|&v| v as f32).collect();
    let cond = CondInput::new(Some(class_id), Some(&temporal));
    let cfg = SamplerConfig {
        steps,
        guidance,
        seed,
    };
    let samples = sample(model, &cond, &cfg)?;
    Ok(Waveform::new(samples, model.cfg.sample_rate))
}

/// One sampling request for `generate_many`.
pub struct GenJob {
    pub class_id: usize,
    pub feature: EventFeature,
    pub seed: u64,
}

/// Sample a batch of jobs, fanned out over read-only model references.
/// Each job is seeded independently, so the output does not depend on the
/// thread count.
pub fn generate_many(
    model: &UNet<f32>,
    jobs: &[GenJob],
    steps: usize,
    guidance: f64,
    threads: usize,
) -> Result<Vec<Waveform>> {
    let workers = threads.max(1).min(jobs.len().max(1));
    if workers <= 1 {
        return jobs
            .iter()
            .map(|j| generate_one(model, j.class_id, &j.feature, steps, guidance, j.seed))
            .collect();
    }
    let chunk = jobs.len().div_ceil(workers);
    let results: Vec<Result<Vec<Waveform>>> = std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for piece in jobs.chunks(chunk) {
            handles.push(scope.spawn(move || {
                piece
                    .iter()
                    .map(|j| generate_one(model, j.class_id, &j.feature, steps, guidance, j.seed))
                    .collect()
            }));
        }
        handles
            .into_iter()
            .map(|h| h.join().expect("sampler worker panicked"))
            .collect()
    });
    let mut out = Vec::with_capacity(jobs.len());
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

pub fn run(a: &GenerateArgs, file: &KvConfig, seed: u64, out: &Option<PathBuf>) -> Result<()> {
    let (model, _, _) = load_checkpoint_dir(&a.checkpoint)?;
    let class_id = model.cfg.class_id(&a.class)?;
    let gain = resolve(a.gain, file.get("gain")?, 1.0);
    let steps = resolve(a.steps, file.get("steps")?, SamplerConfig::default().steps);
    let guidance = resolve(
        a.guidance,
        file.get("guidance")?,
        SamplerConfig::default().guidance,
    );
    let count = resolve(a.count, file.get("count")?, 1);
    let feature = load_condition(
        &model,
        a.cond_audio.as_deref(),
        a.cond_feature.as_deref(),
        gain,
    )?;

    let dir = out_dir_or(out, "generated");
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    for i in 0..count {
        let item_seed = RandomSource::derive(seed, i as u64).next_u64();
        let wave = generate_one(&model, class_id, &feature, steps, guidance, item_seed)?;
        let path = dir.join(format!("{}_{:03}.wav", a.class, i));
        write_wav(&wave, &path)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
