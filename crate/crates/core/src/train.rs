//! Epoch-level training: shuffled batches, Adam updates, a loss log, and
//! checkpoint directories that support exact resume.
//!
//! Per-epoch randomness is derived from (seed, epoch), so resuming from a
//! checkpoint at epoch k reproduces the uninterrupted run bit-for-bit.

use std::fs;
use std::path::{Path, PathBuf};

use crate::corpus::{batches, LabeledClip, PreparedCorpus, PreparedItem};
use crate::diffusion::{noise, CondInput, DiffusionModel, StepOutcome, TrainConfig};
use crate::error::{Error, Result};
use crate::nn::{
    export_params, for_each_param, import_params, read_checkpoint, write_checkpoint, zero_grads,
    Adam, AdamConfig, CheckpointEntry,
};
use crate::rng::RandomSource;
use crate::unet::{ModelConfig, UNet};

/// Threads to use by default for data-parallel work.
pub fn default_threads() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(8)
}

pub const CHECKPOINT_FILE: &str = "model.fgc";
pub const CONFIG_FILE: &str = "config.txt";
pub const LOSS_LOG_FILE: &str = "loss_log.csv";

/// Prepare clips for a model: validates the training format and caches the
/// event feature per clip.
pub fn prepare_corpus(clips: &[LabeledClip], cfg: &ModelConfig) -> Result<PreparedCorpus> {
    PreparedCorpus::from_clips(
        clips,
        &cfg.class_names,
        cfg.sample_rate,
        cfg.sample_len,
        cfg.event_window,
        cfg.event_hop,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
}

pub struct TrainOptions {
    pub cfg: TrainConfig,
    pub out_dir: PathBuf,
    /// Write a checkpoint every k epochs (the final epoch always gets one).
    pub checkpoint_every: usize,
    /// Data-parallel workers; gradients accumulate in worker-local buffers
    /// and are summed in a fixed order, so a given thread count is
    /// bit-reproducible.
    pub threads: usize,
}

/// One gradient step over a batch, optionally split across worker-local
/// model copies. All randomness is drawn up front in item order, so the
/// noise consumed is independent of the thread count.
pub fn training_step_parallel(
    batch: &[&PreparedItem],
    model: &mut UNet<f32>,
    cfg: &TrainConfig,
    rng: &mut RandomSource,
    threads: usize,
) -> Result<StepOutcome> {
    struct Draw {
        drop: bool,
        t: f64,
        x_t: Vec<f32>,
        eps: Vec<f32>,
    }
    let mut draws = Vec::with_capacity(batch.len());
    for item in batch {
        let drop = rng.uniform() < cfg.cond_drop_p;
        let t = rng.uniform();
        let (x_t, eps) = noise(&item.x0, t, rng)?;
        draws.push(Draw { drop, t, x_t, eps });
    }
    let weight = 1.0 / batch.len() as f64;
    let dropped: Vec<bool> = draws.iter().map(|d| d.drop).collect();

    let run_chunk = |model: &mut UNet<f32>, lo: usize, hi: usize| -> Result<f64> {
        let mut loss = 0.0;
        for k in lo..hi {
            let item = batch[k];
            let d = &draws[k];
            let cond = if d.drop {
                CondInput::null()
            } else {
                CondInput::new(Some(item.class), Some(&item.temporal))
            };
            loss += model.train_item(&d.x_t, d.t, &cond, &d.eps, weight)?;
        }
        Ok(loss)
    };

    let workers = threads.max(1).min(batch.len());
    let total = if workers == 1 {
        run_chunk(model, 0, batch.len())?
    } else {
        let chunk = batch.len().div_ceil(workers);
        let results: Vec<Result<(UNet<f32>, f64)>> = std::thread::scope(|scope| {
            let mut handles = Vec::new();
            for w in 0..workers {
                let lo = w * chunk;
                let hi = ((w + 1) * chunk).min(batch.len());
                let mut local = model.clone();
                let run_chunk = &run_chunk;
                handles.push(scope.spawn(move || {
                    zero_grads(&mut local);
                    let loss = run_chunk(&mut local, lo, hi)?;
                    Ok((local, loss))
                }));
            }
            handles
                .into_iter()
                .map(|h| h.join().expect("worker panicked"))
                .collect()
        });
        let mut total = 0.0;
        for res in results {
            let (mut local, loss) = res?;
            total += loss;
            // merge worker gradients in worker order
            let mut grads: Vec<Vec<f32>> = Vec::new();
            for_each_param(&mut local, |_, p| grads.push(std::mem::take(&mut p.grad.data)));
            let mut idx = 0;
            for_each_param(model, |_, p| {
                for (g, w) in p.grad.data.iter_mut().zip(&grads[idx]) {
                    *g += *w;
                }
                idx += 1;
            });
        }
        total
    };
    if !total.is_finite() {
        return Err(Error::Numeric("training loss became non-finite".into()));
    }
    Ok(StepOutcome {
        loss: total * weight,
        dropped,
    })
}

fn epoch_rng(seed: u64, epoch: usize) -> RandomSource {
    RandomSource::derive(seed, 0xE70C_0000 ^ epoch as u64)
}

/// Append-only loss log with a header row.
fn append_loss_log(path: &Path, records: &[EpochRecord]) -> Result<()> {
    let mut text = if path.exists() {
        fs::read_to_string(path).map_err(|e| Error::io(path, e))?
    } else {
        String::from("epoch,mean_loss\n")
    };
    for r in records {
        text.push_str(&format!("{},{}\n", r.epoch, r.loss));
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Save model parameters, optimizer state, and the number of completed
/// epochs into `dir`.
pub fn save_checkpoint_dir(
    dir: &Path,
    model: &mut UNet<f32>,
    adam: &Adam<f32>,
    epochs_done: usize,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = export_params(model);
    entries.extend(adam.export_entries());
    entries.push(CheckpointEntry::from_scalars::<f32>(
        "trainer.epoch",
        &[1],
        &[epochs_done as f32],
    ));
    write_checkpoint(&dir.join(CHECKPOINT_FILE), &entries)?;
    let cfg_path = dir.join(CONFIG_FILE);
    fs::write(&cfg_path, model.cfg.to_kv()).map_err(|e| Error::io(&cfg_path, e))?;
    Ok(())
}

/// Load a checkpoint directory: the config stored next to the weights is the
/// only config the weights load with.
pub fn load_checkpoint_dir(dir: &Path) -> Result<(UNet<f32>, Adam<f32>, usize)> {
    let cfg_path = dir.join(CONFIG_FILE);
    let cfg_text = fs::read_to_string(&cfg_path).map_err(|e| Error::io(&cfg_path, e))?;
    let cfg = ModelConfig::from_kv(&cfg_text)?;
    let mut model = UNet::new(cfg, 0)?;
    let entries = read_checkpoint(&dir.join(CHECKPOINT_FILE))?;
    import_params(&mut model, &entries)?;
    let mut adam = Adam::new(AdamConfig::default());
    adam.import_entries(&entries)?;
    let epochs_done = entries
        .iter()
        .find(|e| e.name == "trainer.epoch")
        .map(|e| e.to_scalars::<f32>().map(|v| v[0] as usize))
        .transpose()?
        .unwrap_or(0);
    Ok((model, adam, epochs_done))
}

#[derive(Debug)]
pub struct TrainReport {
    pub records: Vec<EpochRecord>,
    pub epochs_done: usize,
}

/// Train `model` for `opts.cfg.epochs` total epochs, starting after
/// `start_epoch` already-completed ones (0 for a fresh run). Checkpoints and
/// the loss log land in `opts.out_dir`.
pub fn train_model(
    model: &mut UNet<f32>,
    adam: &mut Adam<f32>,
    data: &PreparedCorpus,
    opts: &TrainOptions,
    start_epoch: usize,
) -> Result<TrainReport> {
    opts.cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Validation("training corpus is empty".into()));
    }
    adam.cfg.lr = opts.cfg.lr;
    fs::create_dir_all(&opts.out_dir).map_err(|e| Error::io(&opts.out_dir, e))?;
    let mut records = Vec::new();
    for epoch in start_epoch..opts.cfg.epochs {
        let mut rng = epoch_rng(opts.cfg.seed, epoch);
        let mut epoch_loss = 0.0;
        let mut batch_count = 0usize;
        for prepared in batches(data, opts.cfg.batch_size, &mut rng) {
            zero_grads(model);
            let outcome =
                training_step_parallel(&prepared, model, &opts.cfg, &mut rng, opts.threads)?;
            adam.step(model);
            epoch_loss += outcome.loss;
            batch_count += 1;
        }
        let record = EpochRecord {
            epoch,
            loss: epoch_loss / batch_count as f64,
        };
        append_loss_log(&opts.out_dir.join(LOSS_LOG_FILE), std::slice::from_ref(&record))?;
        records.push(record);
        let is_last = epoch + 1 == opts.cfg.epochs;
        if is_last || (opts.checkpoint_every > 0 && (epoch + 1) % opts.checkpoint_every == 0) {
            save_checkpoint_dir(&opts.out_dir, model, adam, epoch + 1)?;
        }
    }
    Ok(TrainReport {
        epochs_done: opts.cfg.epochs,
        records,
    })
}
