//! Shared argument blocks and the key-value config file.
//!
//! Precedence for every knob: explicit flag > config file entry > default.
//! Config files hold one `key=value` per line with keys named like the long
//! flags (no leading dashes).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use foleygen_core::conditioning::TemporalMode;
use foleygen_core::error::{Error, Result};
use foleygen_core::unet::{ModelConfig, TemporalScope};

#[derive(Debug, Clone, Default)]
pub struct KvConfig(BTreeMap<String, String>);

impl KvConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(KvConfig::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut map = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Format {
                what: "config file",
                detail: format!("line {}: expected key=value", lineno + 1),
            })?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(KvConfig(map))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.0.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|_| {
                Error::Validation(format!("config key {key:?} has unparsable value {raw:?}"))
            }),
        }
    }

    pub fn get_raw(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(|s| s.as_str())
    }
}

/// flag > config file > default
pub fn resolve<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

fn parse_usize_list(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|x| x.trim().parse::<usize>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| Error::Validation(format!("expected a comma-separated integer list, got {s:?}")))
}

/// Architecture knobs, shared by train / sweep-blocks / describe.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct ModelArgs {
    /// Channel width per level, comma separated
    #[arg(long)]
    pub channels: Option<String>,
    /// Stride per level, comma separated
    #[arg(long)]
    pub strides: Option<String>,
    /// Convolution kernel size (odd)
    #[arg(long)]
    pub kernel: Option<usize>,
    /// Bottleneck LSTM hidden width
    #[arg(long)]
    pub bottleneck_hidden: Option<usize>,
    /// Class embedding width
    #[arg(long)]
    pub class_embed: Option<usize>,
    /// Diffusion-time embedding width (even)
    #[arg(long)]
    pub sigma_embed: Option<usize>,
    /// Hidden width of the (sigma, class) FiLM MLPs
    #[arg(long)]
    pub film_hidden: Option<usize>,
    /// Hidden width of the temporal conditioning layers
    #[arg(long)]
    pub cond_hidden: Option<usize>,
    /// Temporal conditioning: none | film | tfilm | bfilm
    #[arg(long)]
    pub cond_mode: Option<String>,
    /// Temporal block count N
    #[arg(long)]
    pub blocks: Option<usize>,
    /// Samples per clip
    #[arg(long)]
    pub sample_len: Option<usize>,
    /// Sample rate in Hz
    #[arg(long)]
    pub sample_rate: Option<u32>,
    /// Event feature window W in samples
    #[arg(long)]
    pub window: Option<usize>,
    /// Event feature hop h in samples
    #[arg(long)]
    pub hop: Option<usize>,
    /// Where temporal layers live: all | up
    #[arg(long)]
    pub temporal_scope: Option<String>,
}

impl ModelArgs {
    /// Merge flags, config file, and the toy defaults into a validated
    /// config for the given class vocabulary.
    pub fn to_config(&self, file: &KvConfig, class_names: Vec<String>) -> Result<ModelConfig> {
        let defaults = ModelConfig::toy(class_names.clone());
        let channels = match (&self.channels, file.get_raw("channels")) {
            (Some(s), _) => parse_usize_list(s)?,
            (None, Some(s)) => parse_usize_list(s)?,
            _ => defaults.channels.clone(),
        };
        let strides = match (&self.strides, file.get_raw("strides")) {
            (Some(s), _) => parse_usize_list(s)?,
            (None, Some(s)) => parse_usize_list(s)?,
            _ => defaults.strides.clone(),
        };
        let cond_mode = match (&self.cond_mode, file.get_raw("cond_mode")) {
            (Some(s), _) => TemporalMode::parse(s)?,
            (None, Some(s)) => TemporalMode::parse(s)?,
            _ => defaults.cond_mode,
        };
        let temporal_scope = match (&self.temporal_scope, file.get_raw("temporal_scope")) {
            (Some(s), _) => TemporalScope::parse(s)?,
            (None, Some(s)) => TemporalScope::parse(s)?,
            _ => defaults.temporal_scope,
        };
        let cfg = ModelConfig {
            channels,
            strides,
            kernel: resolve(self.kernel, file.get("kernel")?, defaults.kernel),
            bottleneck_hidden: resolve(
                self.bottleneck_hidden,
                file.get("bottleneck_hidden")?,
                defaults.bottleneck_hidden,
            ),
            class_names,
            class_embed_dim: resolve(
                self.class_embed,
                file.get("class_embed")?,
                defaults.class_embed_dim,
            ),
            sigma_embed_dim: resolve(
                self.sigma_embed,
                file.get("sigma_embed")?,
                defaults.sigma_embed_dim,
            ),
            film_hidden: resolve(self.film_hidden, file.get("film_hidden")?, defaults.film_hidden),
            cond_hidden: resolve(self.cond_hidden, file.get("cond_hidden")?, defaults.cond_hidden),
            cond_mode,
            blocks: resolve(self.blocks, file.get("blocks")?, defaults.blocks),
            sample_len: resolve(self.sample_len, file.get("sample_len")?, defaults.sample_len),
            sample_rate: resolve(self.sample_rate, file.get("sample_rate")?, defaults.sample_rate),
            event_window: resolve(self.window, file.get("window")?, defaults.event_window),
            event_hop: resolve(self.hop, file.get("hop")?, defaults.event_hop),
            temporal_scope,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Training knobs shared by train and sweep-blocks.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct TrainArgs {
    /// Epochs to train
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Batch size
    #[arg(long)]
    pub batch: Option<usize>,
    /// Adam learning rate
    #[arg(long)]
    pub lr: Option<f64>,
    /// Probability of jointly dropping (class, T) per item
    #[arg(long)]
    pub cond_drop_p: Option<f64>,
    /// Checkpoint every k epochs (0: final only)
    #[arg(long)]
    pub checkpoint_every: Option<usize>,

    /// Data-parallel worker threads
    #[arg(long)]
    pub threads: Option<usize>,
}

impl TrainArgs {
    pub fn to_config(
        &self,
        file: &KvConfig,
        seed: u64,
    ) -> Result<foleygen_core::diffusion::TrainConfig> {
        let d = foleygen_core::diffusion::TrainConfig::default();
        let cfg = foleygen_core::diffusion::TrainConfig {
            epochs: resolve(self.epochs, file.get("epochs")?, d.epochs),
            batch_size: resolve(self.batch, file.get("batch")?, d.batch_size),
            lr: resolve(self.lr, file.get("lr")?, d.lr),
            cond_drop_p: resolve(self.cond_drop_p, file.get("cond_drop_p")?, 0.1),
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn checkpoint_every(&self, file: &KvConfig) -> Result<usize> {
        Ok(resolve(self.checkpoint_every, file.get("checkpoint_every")?, 0))
    }

    pub fn threads(&self, file: &KvConfig) -> Result<usize> {
        Ok(resolve(
            self.threads,
            file.get("threads")?,
            foleygen_core::train::default_threads(),
        ))
    }
}

/// Synthetic-corpus knobs shared by synth-corpus / train --synth / sweep.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct SynthArgs {
    /// Comma-separated class names for the synthetic corpus
    #[arg(long)]
    pub class_names: Option<String>,
    /// Clips generated per class
    #[arg(long)]
    pub clips_per_class: Option<usize>,
    /// Clip duration in seconds
    #[arg(long)]
    pub duration: Option<f64>,
}

impl SynthArgs {
    pub fn to_config(
        &self,
        file: &KvConfig,
        sample_rate: u32,
        seed: u64,
    ) -> Result<foleygen_core::corpus::ToyCorpusConfig> {
        let d = foleygen_core::corpus::ToyCorpusConfig::default();
        let class_names = match self.class_names.as_deref().or(file.get_raw("class_names")) {
            Some(s) => s
                .split(',')
                .map(|x| x.trim().to_string())
                .filter(|x| !x.is_empty())
                .collect(),
            None => d.class_names.clone(),
        };
        Ok(foleygen_core::corpus::ToyCorpusConfig {
            class_names,
            clips_per_class: resolve(self.clips_per_class, file.get("clips_per_class")?, 32),
            duration_secs: resolve(self.duration, file.get("duration")?, d.duration_secs),
            sample_rate,
            seed,
        })
    }
}

pub fn out_dir_or(out: &Option<PathBuf>, default: &str) -> PathBuf {
    out.clone().unwrap_or_else(|| PathBuf::from(default))
}
