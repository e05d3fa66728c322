//! Noise-prediction U-Net: stacked strided-conv Down blocks, a bidirectional
//! LSTM bottleneck with a linear projection added residually, transposed-conv
//! Up blocks with concatenated skip connections, and an output head that is
//! zero-initialized so a fresh model predicts zero noise.
//!
//! Inside every block the first convolution is FiLM-conditioned on the
//! concatenated (diffusion-time embedding, class embedding) and the second is
//! modulated by the temporal event feature through the configured
//! FiLM/TFiLM/BFiLM layer. A config flag restricts the temporal layers to the
//! up path instead.

use std::fmt::Write as _;

use crate::conditioning::{BFilmLayer, FilmLayer, TFilmLayer, TemporalMode};
use crate::error::{Error, Result};
use crate::feature;
use crate::nn::lstm::{BiLstm, BiLstmCache};
use crate::nn::ops::{act_backward, apply_act, ActKind, Conv1d, ConvTranspose1d};
use crate::nn::tensor::{for_each_param, param_count, Activation, Param, Parameterized};
use crate::nn::Scalar;
use crate::rng::RandomSource;

/// Where the temporal conditioning layers live.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TemporalScope {
    /// Every Down and Up block carries a temporal layer.
    AllBlocks,
    /// Only the Up blocks (the latter half of the forward pass) do.
    UpBlocks,
}

impl TemporalScope {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(TemporalScope::AllBlocks),
            "up" => Ok(TemporalScope::UpBlocks),
            _ => Err(Error::Validation(format!(
                "unknown temporal scope {s:?} (expected all|up)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TemporalScope::AllBlocks => "all",
            TemporalScope::UpBlocks => "up",
        }
    }
}

/// Every architecture hyperparameter, including the ones the underlying
/// design leaves open. Serialized as a key-value text document next to each
/// checkpoint; a checkpoint loads only with its exact config.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub channels: Vec<usize>,
    pub strides: Vec<usize>,
    pub kernel: usize,
    pub bottleneck_hidden: usize,
    pub class_names: Vec<String>,
    pub class_embed_dim: usize,
    pub sigma_embed_dim: usize,
    pub film_hidden: usize,
    pub cond_hidden: usize,
    pub cond_mode: TemporalMode,
    pub blocks: usize,
    pub sample_len: usize,
    pub sample_rate: u32,
    pub event_window: usize,
    pub event_hop: usize,
    pub temporal_scope: TemporalScope,
}

impl ModelConfig {
    /// Desk-scale default: 1 s at 8 kHz, under one million parameters.
    pub fn toy(class_names: Vec<String>) -> Self {
        ModelConfig {
            channels: vec![16, 32, 64, 128],
            strides: vec![2, 2, 2, 2],
            kernel: 5,
            bottleneck_hidden: 64,
            class_names,
            class_embed_dim: 16,
            sigma_embed_dim: 32,
            film_hidden: 48,
            cond_hidden: 48,
            cond_mode: TemporalMode::BFilm,
            blocks: 16,
            sample_len: 8000,
            sample_rate: 8000,
            event_window: 512,
            event_hop: 128,
            temporal_scope: TemporalScope::AllBlocks,
        }
    }

    pub fn levels(&self) -> usize {
        self.channels.len()
    }

    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_id(&self, name: &str) -> Result<usize> {
        self.class_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| {
                Error::Validation(format!(
                    "unknown class {name:?}; valid classes: {}",
                    self.class_names.join(", ")
                ))
            })
    }

    /// Frames the temporal condition must supply for one sample.
    pub fn frame_count(&self) -> usize {
        feature::frame_count(self.sample_len, self.event_window, self.event_hop)
    }

    /// Activation length at every level: [sample_len, after Down 0, ...].
    pub fn level_lengths(&self) -> Vec<usize> {
        let mut lens = vec![self.sample_len];
        let mut l = self.sample_len;
        for &s in &self.strides {
            l /= s;
            lens.push(l);
        }
        lens
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() {
            return Err(Error::Validation("channels list is empty".into()));
        }
        if self.channels.len() != self.strides.len() {
            return Err(Error::Validation(format!(
                "{} channel entries but {} stride entries",
                self.channels.len(),
                self.strides.len()
            )));
        }
        if self.class_names.is_empty() {
            return Err(Error::Validation("at least one class is required".into()));
        }
        if self.kernel.is_multiple_of(2) {
            return Err(Error::Validation(format!(
                "kernel must be odd for symmetric padding, got {}",
                self.kernel
            )));
        }
        let mut l = self.sample_len;
        for (i, &s) in self.strides.iter().enumerate() {
            if s < 1 {
                return Err(Error::Validation(format!("stride {s} at level {i}")));
            }
            if !l.is_multiple_of(s) {
                return Err(Error::Validation(format!(
                    "stride product must divide sample_len: level {i} length {l} not divisible by {s}"
                )));
            }
            if self.kernel < 2 * s - 1 {
                return Err(Error::Validation(format!(
                    "kernel {} too small for stride {s} (needs >= {})",
                    self.kernel,
                    2 * s - 1
                )));
            }
            l /= s;
        }
        if l == 0 {
            return Err(Error::Validation(
                "strides collapse the signal to zero length".into(),
            ));
        }
        if !self.sigma_embed_dim.is_multiple_of(2) || self.sigma_embed_dim == 0 {
            return Err(Error::Validation(format!(
                "sigma_embed_dim must be even and positive, got {}",
                self.sigma_embed_dim
            )));
        }
        if self.blocks < 1 {
            return Err(Error::Validation("blocks must be >= 1".into()));
        }
        let frames = self.frame_count();
        if frames == 0 {
            return Err(Error::Validation(format!(
                "event window {} does not fit in sample_len {}",
                self.event_window, self.sample_len
            )));
        }
        if self.cond_mode != TemporalMode::None {
            if self.blocks > frames {
                return Err(Error::Validation(format!(
                    "blocks {} exceeds event frame count {frames}",
                    self.blocks
                )));
            }
            let deepest = *self.level_lengths().last().unwrap();
            if self.blocks > deepest {
                return Err(Error::Validation(format!(
                    "blocks {} exceeds deepest activation length {deepest}",
                    self.blocks
                )));
            }
        }
        Ok(())
    }

    fn usize_list(v: &[usize]) -> String {
        v.iter()
            .map(|x| x.to_string())
            .collect::<Vec<_>>()
            .join(",")
    }

    /// Key-value text form, one `key=value` per line.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "channels={}", Self::usize_list(&self.channels));
        let _ = writeln!(s, "strides={}", Self::usize_list(&self.strides));
        let _ = writeln!(s, "kernel={}", self.kernel);
        let _ = writeln!(s, "bottleneck_hidden={}", self.bottleneck_hidden);
        let _ = writeln!(s, "classes={}", self.class_names.join(","));
        let _ = writeln!(s, "class_embed_dim={}", self.class_embed_dim);
        let _ = writeln!(s, "sigma_embed_dim={}", self.sigma_embed_dim);
        let _ = writeln!(s, "film_hidden={}", self.film_hidden);
        let _ = writeln!(s, "cond_hidden={}", self.cond_hidden);
        let _ = writeln!(s, "cond_mode={}", self.cond_mode.name());
        let _ = writeln!(s, "blocks={}", self.blocks);
        let _ = writeln!(s, "sample_len={}", self.sample_len);
        let _ = writeln!(s, "sample_rate={}", self.sample_rate);
        let _ = writeln!(s, "event_window={}", self.event_window);
        let _ = writeln!(s, "event_hop={}", self.event_hop);
        let _ = writeln!(s, "temporal_scope={}", self.temporal_scope.name());
        s
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut map = std::collections::BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Format {
                what: "model config",
                detail: format!("line {}: expected key=value, got {line:?}", lineno + 1),
            })?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| -> Result<&String> {
            map.get(k).ok_or_else(|| Error::Format {
                what: "model config",
                detail: format!("missing key {k:?}"),
            })
        };
        let parse_usize = |k: &str| -> Result<usize> {
            get(k)?.parse().map_err(|_| Error::Format {
                what: "model config",
                detail: format!("key {k:?} is not an integer"),
            })
        };
        let parse_list = |k: &str| -> Result<Vec<usize>> {
            get(k)?
                .split(',')
                .map(|x| x.trim().parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| Error::Format {
                    what: "model config",
                    detail: format!("key {k:?} is not a comma-separated integer list"),
                })
        };
        let cfg = ModelConfig {
            channels: parse_list("channels")?,
            strides: parse_list("strides")?,
            kernel: parse_usize("kernel")?,
            bottleneck_hidden: parse_usize("bottleneck_hidden")?,
            class_names: get("classes")?
                .split(',')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect(),
            class_embed_dim: parse_usize("class_embed_dim")?,
            sigma_embed_dim: parse_usize("sigma_embed_dim")?,
            film_hidden: parse_usize("film_hidden")?,
            cond_hidden: parse_usize("cond_hidden")?,
            cond_mode: TemporalMode::parse(get("cond_mode")?)?,
            blocks: parse_usize("blocks")?,
            sample_len: parse_usize("sample_len")?,
            sample_rate: parse_usize("sample_rate")? as u32,
            event_window: parse_usize("event_window")?,
            event_hop: parse_usize("event_hop")?,
            temporal_scope: TemporalScope::parse(get("temporal_scope")?)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Conditioning inputs for one item. `None` selects the learned null class
/// embedding / null temporal condition, which is how both classifier-free
/// training and unconditional sampling are expressed.
#[derive(Debug, Clone, Copy)]
pub struct CondInput<'a, S> {
    pub class: Option<usize>,
    pub temporal: Option<&'a [S]>,
}

impl<'a, S> CondInput<'a, S> {
    pub fn null() -> Self {
        CondInput {
            class: None,
            temporal: None,
        }
    }

    pub fn new(class: Option<usize>, temporal: Option<&'a [S]>) -> Self {
        CondInput { class, temporal }
    }
}

/// Sinusoidal embedding of the diffusion time t in [0, 1]: geometric
/// frequency ladder, deterministic and smooth in t.
pub fn sigma_embedding<S: Scalar>(t: f64, dim: usize) -> Vec<S> {
    debug_assert!(dim.is_multiple_of(2));
    let half = dim / 2;
    let mut out = Vec::with_capacity(dim);
    for i in 0..half {
        let exponent = if half > 1 {
            i as f64 / (half - 1) as f64
        } else {
            0.0
        };
        let omega = std::f64::consts::FRAC_PI_2 * 1000f64.powf(exponent);
        out.push(S::from_f64((omega * t).sin()));
        out.push(S::from_f64((omega * t).cos()));
    }
    out
}

#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
enum TemporalLayer<S> {
    BFilm(BFilmLayer<S>),
    TFilm(TFilmLayer<S>),
}

enum TemporalCache<S: Scalar> {
    BFilm(crate::conditioning::BFilmCache<S>),
    TFilm(crate::conditioning::TFilmCache<S>),
}

impl<S: Scalar> TemporalLayer<S> {
    fn build(cfg: &ModelConfig, c_out: usize, rng: &mut RandomSource) -> Option<Self> {
        match cfg.cond_mode {
            TemporalMode::None => None,
            // plain FiLM on the temporal feature is block-wise FiLM with a
            // single global block
            TemporalMode::Film => Some(TemporalLayer::BFilm(BFilmLayer::new(
                1,
                cfg.cond_hidden,
                c_out,
                1,
                rng,
            ))),
            TemporalMode::BFilm => Some(TemporalLayer::BFilm(BFilmLayer::new(
                1,
                cfg.cond_hidden,
                c_out,
                cfg.blocks,
                rng,
            ))),
            TemporalMode::TFilm => Some(TemporalLayer::TFilm(TFilmLayer::new(
                1,
                cfg.cond_hidden,
                c_out,
                cfg.blocks,
                rng,
            ))),
        }
    }

    fn forward(
        &self,
        x: &Activation<S>,
        y: &Activation<S>,
    ) -> Result<(Activation<S>, TemporalCache<S>)> {
        match self {
            TemporalLayer::BFilm(l) => {
                let (out, c) = l.forward(x, y)?;
                Ok((out, TemporalCache::BFilm(c)))
            }
            TemporalLayer::TFilm(l) => {
                let (out, c) = l.forward(x, y)?;
                Ok((out, TemporalCache::TFilm(c)))
            }
        }
    }

    fn backward(
        &mut self,
        cache: &TemporalCache<S>,
        grad: &Activation<S>,
    ) -> (Activation<S>, Activation<S>) {
        match (self, cache) {
            (TemporalLayer::BFilm(l), TemporalCache::BFilm(c)) => l.backward(c, grad),
            (TemporalLayer::TFilm(l), TemporalCache::TFilm(c)) => l.backward(c, grad),
            _ => unreachable!("cache kind matches layer kind"),
        }
    }

    fn force_identity(&mut self) {
        match self {
            TemporalLayer::BFilm(l) => l.force_identity(),
            TemporalLayer::TFilm(l) => l.force_identity(),
        }
    }
}

impl<S: Scalar> Parameterized<S> for TemporalLayer<S> {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<S>)) {
        match self {
            TemporalLayer::BFilm(l) => l.visit_params(prefix, f),
            TemporalLayer::TFilm(l) => l.visit_params(prefix, f),
        }
    }
}

#[derive(Debug, Clone)]
struct DownBlock<S> {
    conv_in: Conv1d<S>,
    film: FilmLayer<S>,
    conv_mid: Conv1d<S>,
    temporal: Option<TemporalLayer<S>>,
    shortcut: Conv1d<S>,
}

struct DownCache<S: Scalar> {
    x: Activation<S>,
    film: crate::conditioning::FilmCache<S>,
    pre_act1: Activation<S>,
    mid_in: Activation<S>,
    temporal: Option<TemporalCache<S>>,
    pre_act2: Activation<S>,
}

impl<S: Scalar> DownBlock<S> {
    fn new(
        cfg: &ModelConfig,
        c_in: usize,
        c_out: usize,
        stride: usize,
        with_temporal: bool,
        rng: &mut RandomSource,
    ) -> Self {
        let k = cfg.kernel;
        let pad = (k - 1) / 2;
        let cond_dim = cfg.sigma_embed_dim + cfg.class_embed_dim;
        DownBlock {
            conv_in: Conv1d::new(c_in, c_out, k, stride, pad, rng),
            film: FilmLayer::new(cond_dim, cfg.film_hidden, c_out, rng),
            conv_mid: Conv1d::new(c_out, c_out, k, 1, pad, rng),
            temporal: if with_temporal {
                TemporalLayer::build(cfg, c_out, rng)
            } else {
                None
            },
            shortcut: Conv1d::new(c_in, c_out, 1, stride, 0, rng),
        }
    }

    fn forward(
        &self,
        x: &Activation<S>,
        cond_vec: &[S],
        y: Option<&Activation<S>>,
    ) -> Result<(Activation<S>, DownCache<S>)> {
        let a = self.conv_in.forward(x)?;
        let (b, film_cache) = self.film.forward(&a, cond_vec)?;
        let c = apply_act(&b, ActKind::Silu);
        let d = self.conv_mid.forward(&c)?;
        let (e, tcache) = match (&self.temporal, y) {
            (Some(layer), Some(y)) => {
                let (e, tc) = layer.forward(&d, y)?;
                (e, Some(tc))
            }
            _ => (d.clone(), None),
        };
        let mut out = apply_act(&e, ActKind::Silu);
        out.add_assign(&self.shortcut.forward(x)?);
        Ok((
            out,
            DownCache {
                x: x.clone(),
                film: film_cache,
                pre_act1: b,
                mid_in: c,
                temporal: tcache,
                pre_act2: e,
            },
        ))
    }

    /// Returns (grad_x, grad_cond_vec, grad_y).
    fn backward(
        &mut self,
        cache: &DownCache<S>,
        grad_out: &Activation<S>,
    ) -> (Activation<S>, Vec<S>, Option<Activation<S>>) {
        let mut grad_x = self.shortcut.backward(&cache.x, grad_out);
        let g_e = act_backward(&cache.pre_act2, grad_out, ActKind::Silu);
        let (g_d, grad_y) = match (&mut self.temporal, &cache.temporal) {
            (Some(layer), Some(tc)) => {
                let (gx, gy) = layer.backward(tc, &g_e);
                (gx, Some(gy))
            }
            _ => (g_e, None),
        };
        let g_c = self.conv_mid.backward(&cache.mid_in, &g_d);
        let g_b = act_backward(&cache.pre_act1, &g_c, ActKind::Silu);
        let (g_a, grad_cond) = self.film.backward(&cache.film, &g_b);
        grad_x.add_assign(&self.conv_in.backward(&cache.x, &g_a));
        (grad_x, grad_cond, grad_y)
    }
}

impl<S: Scalar> Parameterized<S> for DownBlock<S> {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<S>)) {
        self.conv_in.visit_params(&format!("{prefix}conv_in."), f);
        self.film.visit_params(&format!("{prefix}film."), f);
        self.conv_mid.visit_params(&format!("{prefix}conv_mid."), f);
        if let Some(t) = &mut self.temporal {
            t.visit_params(&format!("{prefix}temporal."), f);
        }
        self.shortcut.visit_params(&format!("{prefix}shortcut."), f);
    }
}

#[derive(Debug, Clone)]
struct UpBlock<S> {
    conv_in: ConvTranspose1d<S>,
    film: FilmLayer<S>,
    conv_mid: Conv1d<S>,
    temporal: Option<TemporalLayer<S>>,
    shortcut: ConvTranspose1d<S>,
}

struct UpCache<S: Scalar> {
    x: Activation<S>,
    film: crate::conditioning::FilmCache<S>,
    pre_act1: Activation<S>,
    mid_in: Activation<S>,
    temporal: Option<TemporalCache<S>>,
    pre_act2: Activation<S>,
}

impl<S: Scalar> UpBlock<S> {
    fn new(
        cfg: &ModelConfig,
        c_in: usize,
        c_out: usize,
        stride: usize,
        with_temporal: bool,
        rng: &mut RandomSource,
    ) -> Self {
        let k = cfg.kernel;
        let pad = (k - 1) / 2;
        let cond_dim = cfg.sigma_embed_dim + cfg.class_embed_dim;
        UpBlock {
            conv_in: ConvTranspose1d::new(c_in, c_out, k, stride, rng),
            film: FilmLayer::new(cond_dim, cfg.film_hidden, c_out, rng),
            conv_mid: Conv1d::new(c_out, c_out, k, 1, pad, rng),
            temporal: if with_temporal {
                TemporalLayer::build(cfg, c_out, rng)
            } else {
                None
            },
            // kernel == stride upsamples with no overlap and no crop
            shortcut: ConvTranspose1d::new(c_in, c_out, stride, stride, rng),
        }
    }

    fn forward(
        &self,
        x: &Activation<S>,
        cond_vec: &[S],
        y: Option<&Activation<S>>,
    ) -> Result<(Activation<S>, UpCache<S>)> {
        let a = self.conv_in.forward(x)?;
        let (b, film_cache) = self.film.forward(&a, cond_vec)?;
        let c = apply_act(&b, ActKind::Silu);
        let d = self.conv_mid.forward(&c)?;
        let (e, tcache) = match (&self.temporal, y) {
            (Some(layer), Some(y)) => {
                let (e, tc) = layer.forward(&d, y)?;
                (e, Some(tc))
            }
            _ => (d.clone(), None),
        };
        let mut out = apply_act(&e, ActKind::Silu);
        out.add_assign(&self.shortcut.forward(x)?);
        Ok((
            out,
            UpCache {
                x: x.clone(),
                film: film_cache,
                pre_act1: b,
                mid_in: c,
                temporal: tcache,
                pre_act2: e,
            },
        ))
    }

    fn backward(
        &mut self,
        cache: &UpCache<S>,
        grad_out: &Activation<S>,
    ) -> (Activation<S>, Vec<S>, Option<Activation<S>>) {
        let mut grad_x = self.shortcut.backward(&cache.x, grad_out);
        let g_e = act_backward(&cache.pre_act2, grad_out, ActKind::Silu);
        let (g_d, grad_y) = match (&mut self.temporal, &cache.temporal) {
            (Some(layer), Some(tc)) => {
                let (gx, gy) = layer.backward(tc, &g_e);
                (gx, Some(gy))
            }
            _ => (g_e, None),
        };
        let g_c = self.conv_mid.backward(&cache.mid_in, &g_d);
        let g_b = act_backward(&cache.pre_act1, &g_c, ActKind::Silu);
        let (g_a, grad_cond) = self.film.backward(&cache.film, &g_b);
        grad_x.add_assign(&self.conv_in.backward(&cache.x, &g_a));
        (grad_x, grad_cond, grad_y)
    }
}

impl<S: Scalar> Parameterized<S> for UpBlock<S> {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<S>)) {
        self.conv_in.visit_params(&format!("{prefix}conv_in."), f);
        self.film.visit_params(&format!("{prefix}film."), f);
        self.conv_mid.visit_params(&format!("{prefix}conv_mid."), f);
        if let Some(t) = &mut self.temporal {
            t.visit_params(&format!("{prefix}temporal."), f);
        }
        self.shortcut.visit_params(&format!("{prefix}shortcut."), f);
    }
}

#[derive(Debug, Clone)]
struct Bottleneck<S> {
    lstm: BiLstm<S>,
    proj: Conv1d<S>,
}

struct BottleneckCache<S: Scalar> {
    lstm: BiLstmCache<S>,
    lstm_out: Activation<S>,
}

impl<S: Scalar> Bottleneck<S> {
    fn new(channels: usize, hidden: usize, rng: &mut RandomSource) -> Self {
        Bottleneck {
            lstm: BiLstm::new(channels, hidden, rng),
            // zero-initialized so the bottleneck starts as the identity
            proj: Conv1d::new_zeroed(2 * hidden, channels, 1, 1, 0),
        }
    }

    fn forward(&self, h: &Activation<S>) -> Result<(Activation<S>, BottleneckCache<S>)> {
        let (l, lstm_cache) = self.lstm.forward(h)?;
        let mut out = self.proj.forward(&l)?;
        out.add_assign(h);
        Ok((
            out,
            BottleneckCache {
                lstm: lstm_cache,
                lstm_out: l,
            },
        ))
    }

    fn backward(&mut self, cache: &BottleneckCache<S>, grad_out: &Activation<S>) -> Activation<S> {
        let g_l = self.proj.backward(&cache.lstm_out, grad_out);
        let mut grad_h = self.lstm.backward(&cache.lstm, &g_l);
        grad_h.add_assign(grad_out);
        grad_h
    }
}

impl<S: Scalar> Parameterized<S> for Bottleneck<S> {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<S>)) {
        self.lstm.visit_params(&format!("{prefix}lstm."), f);
        self.proj.visit_params(&format!("{prefix}proj."), f);
    }
}

#[derive(Clone)]
pub struct UNet<S: Scalar> {
    pub cfg: ModelConfig,
    /// [(class_count + 1) x class_embed_dim]; the extra row is the learned
    /// null embedding used when the class condition is dropped.
    class_embed: Param<S>,
    /// Learned constant temporal condition used when T is dropped.
    null_temporal: Option<Param<S>>,
    downs: Vec<DownBlock<S>>,
    bottleneck: Bottleneck<S>,
    ups: Vec<UpBlock<S>>,
    head: Conv1d<S>,
}

pub struct UNetCache<S: Scalar> {
    class_row: usize,
    y_from_null: bool,
    down_caches: Vec<DownCache<S>>,
    bn_cache: BottleneckCache<S>,
    up_caches: Vec<UpCache<S>>,
    head_in: Activation<S>,
}

impl<S: Scalar> UNet<S> {
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = RandomSource::derive(seed, 0x0501);
        let levels = cfg.levels();
        let down_temporal = cfg.temporal_scope == TemporalScope::AllBlocks;
        let mut downs = Vec::with_capacity(levels);
        for i in 0..levels {
            let c_in = if i == 0 { 1 } else { cfg.channels[i - 1] };
            downs.push(DownBlock::new(
                &cfg,
                c_in,
                cfg.channels[i],
                cfg.strides[i],
                down_temporal,
                &mut rng,
            ));
        }
        let bottleneck = Bottleneck::new(cfg.channels[levels - 1], cfg.bottleneck_hidden, &mut rng);
        let mut ups = Vec::with_capacity(levels);
        for i in 0..levels {
            let c_out = if i == 0 {
                cfg.channels[0]
            } else {
                cfg.channels[i - 1]
            };
            ups.push(UpBlock::new(
                &cfg,
                2 * cfg.channels[i],
                c_out,
                cfg.strides[i],
                true,
                &mut rng,
            ));
        }
        let pad = (cfg.kernel - 1) / 2;
        let head = Conv1d::new_zeroed(cfg.channels[0], 1, cfg.kernel, 1, pad);
        let class_embed = Param::uniform_fan_in(
            &[cfg.class_count() + 1, cfg.class_embed_dim],
            cfg.class_embed_dim,
            &mut rng,
        );
        let null_temporal = if cfg.cond_mode != TemporalMode::None {
            Some(Param::zeros(&[1]))
        } else {
            None
        };
        Ok(UNet {
            cfg,
            class_embed,
            null_temporal,
            downs,
            bottleneck,
            ups,
            head,
        })
    }

    /// Build the temporal condition activation for one item; the flag says
    /// whether it came from the learned null condition.
    fn temporal_activation(
        &self,
        cond: &CondInput<'_, S>,
    ) -> Result<(Option<Activation<S>>, bool)> {
        if self.cfg.cond_mode == TemporalMode::None {
            return Ok((None, false));
        }
        let frames = self.cfg.frame_count();
        match cond.temporal {
            Some(values) => {
                if values.len() != frames {
                    return Err(Error::Shape(format!(
                        "temporal condition has {} frames, model expects {frames}",
                        values.len()
                    )));
                }
                Ok((Some(Activation::from_row(values)), false))
            }
            None => {
                let null = self
                    .null_temporal
                    .as_ref()
                    .expect("null_temporal exists when cond_mode != none");
                let v = null.value.data[0];
                Ok((Some(Activation::from_flat(1, frames, vec![v; frames])), true))
            }
        }
    }

    fn cond_vector(&self, t: f64, cond: &CondInput<'_, S>) -> Result<(Vec<S>, usize)> {
        let class_row = match cond.class {
            Some(id) => {
                if id >= self.cfg.class_count() {
                    return Err(Error::Domain(format!(
                        "class id {id} out of range (model has {} classes)",
                        self.cfg.class_count()
                    )));
                }
                id
            }
            None => self.cfg.class_count(), // null row
        };
        let mut v = sigma_embedding::<S>(t, self.cfg.sigma_embed_dim);
        let d = self.cfg.class_embed_dim;
        v.extend_from_slice(&self.class_embed.value.data[class_row * d..(class_row + 1) * d]);
        Ok((v, class_row))
    }

    /// Noise prediction plus the cache needed for backward.
    pub fn forward(
        &self,
        x: &[S],
        t: f64,
        cond: &CondInput<'_, S>,
    ) -> Result<(Vec<S>, UNetCache<S>)> {
        if x.len() != self.cfg.sample_len {
            return Err(Error::Shape(format!(
                "input has {} samples, model expects {}",
                x.len(),
                self.cfg.sample_len
            )));
        }
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::Domain(format!("diffusion time {t} outside [0, 1]")));
        }
        let (cond_vec, class_row) = self.cond_vector(t, cond)?;
        let (y_act, y_from_null) = self.temporal_activation(cond)?;

        let mut h = Activation::from_row(x);
        let mut down_caches = Vec::with_capacity(self.downs.len());
        let mut skips = Vec::with_capacity(self.downs.len());
        for block in &self.downs {
            let (out, cache) = block.forward(&h, &cond_vec, y_act.as_ref())?;
            down_caches.push(cache);
            skips.push(out.clone());
            h = out;
        }
        let (mut h, bn_cache) = self.bottleneck.forward(&h)?;
        let mut up_caches: Vec<Option<UpCache<S>>> = (0..self.ups.len()).map(|_| None).collect();
        for i in (0..self.ups.len()).rev() {
            let input = h.concat_channels(&skips[i])?;
            let (out, cache) = self.ups[i].forward(&input, &cond_vec, y_act.as_ref())?;
            up_caches[i] = Some(cache);
            h = out;
        }
        let out = self.head.forward(&h)?;
        debug_assert_eq!(out.channels, 1);
        debug_assert_eq!(out.len, self.cfg.sample_len);
        let cache = UNetCache {
            class_row,
            y_from_null,
            down_caches,
            bn_cache,
            up_caches: up_caches.into_iter().map(|c| c.unwrap()).collect(),
            head_in: h,
        };
        Ok((out.data, cache))
    }

    /// Inference-only forward.
    pub fn predict(&self, x: &[S], t: f64, cond: &CondInput<'_, S>) -> Result<Vec<S>> {
        Ok(self.forward(x, t, cond)?.0)
    }

    /// Backpropagate `grad_out` (d loss / d prediction) through the cached
    /// forward pass, accumulating parameter gradients.
    pub fn backward(&mut self, cache: &UNetCache<S>, grad_out: &[S]) {
        let levels = self.downs.len();
        let cond_dim = self.cfg.sigma_embed_dim + self.cfg.class_embed_dim;
        let mut cond_grad = vec![S::ZERO; cond_dim];
        let mut y_grad: Option<Activation<S>> = None;
        fn accumulate_y<S: Scalar>(total: &mut Option<Activation<S>>, g: Option<Activation<S>>) {
            if let Some(g) = g {
                match total {
                    Some(t) => t.add_assign(&g),
                    None => *total = Some(g),
                }
            }
        }
        fn add_vec<S: Scalar>(total: &mut [S], g: &[S]) {
            for (a, b) in total.iter_mut().zip(g) {
                *a += *b;
            }
        }

        let g_act = Activation::from_row(grad_out);
        let mut g = self.head.backward(&cache.head_in, &g_act);
        let mut skip_grads: Vec<Option<Activation<S>>> = (0..levels).map(|_| None).collect();
        for (i, skip_grad) in skip_grads.iter_mut().enumerate() {
            let (g_concat, g_cond, g_y) = self.ups[i].backward(&cache.up_caches[i], &g);
            add_vec(&mut cond_grad, &g_cond);
            accumulate_y(&mut y_grad, g_y);
            let below_channels = self.cfg.channels[i];
            let (g_below, g_skip) = g_concat.split_channels(below_channels);
            *skip_grad = Some(g_skip);
            g = g_below;
        }
        g = self.bottleneck.backward(&cache.bn_cache, &g);
        for i in (0..levels).rev() {
            g.add_assign(skip_grads[i].as_ref().unwrap());
            let (g_in, g_cond, g_y) = self.downs[i].backward(&cache.down_caches[i], &g);
            add_vec(&mut cond_grad, &g_cond);
            accumulate_y(&mut y_grad, g_y);
            g = g_in;
        }

        // class embedding gradient (the sigma half has no parameters)
        let d = self.cfg.class_embed_dim;
        let row = cache.class_row;
        for j in 0..d {
            self.class_embed.grad.data[row * d + j] += cond_grad[self.cfg.sigma_embed_dim + j];
        }
        // null temporal condition: broadcast adjoint is the sum
        if cache.y_from_null {
            if let (Some(null), Some(gy)) = (self.null_temporal.as_mut(), y_grad.as_ref()) {
                let mut s = S::ZERO;
                for &v in &gy.data {
                    s += v;
                }
                null.grad.data[0] += s;
            }
        }
    }

    /// Pin every temporal modulation layer to (gamma=1, beta=0).
    pub fn force_temporal_identity(&mut self) {
        for b in &mut self.downs {
            if let Some(t) = &mut b.temporal {
                t.force_identity();
            }
        }
        for b in &mut self.ups {
            if let Some(t) = &mut b.temporal {
                t.force_identity();
            }
        }
    }

    pub fn param_total(&mut self) -> usize {
        param_count(self)
    }

    /// Parameter count per top-level component, in visit order.
    pub fn param_breakdown(&mut self) -> Vec<(String, usize)> {
        let mut counts: Vec<(String, usize)> = Vec::new();
        for_each_param(self, |name, p| {
            let top = name.split('.').next().unwrap_or(name).to_string();
            match counts.last_mut() {
                Some((t, n)) if *t == top => *n += p.len(),
                _ => counts.push((top, p.len())),
            }
        });
        counts
    }

    /// Human-readable architecture summary with exact parameter counts.
    pub fn describe(&mut self) -> String {
        let cfg = self.cfg.clone();
        let mut s = String::new();
        let _ = writeln!(
            s,
            "u-net: {} levels, channels {:?}, strides {:?}, kernel {}",
            cfg.levels(),
            cfg.channels,
            cfg.strides,
            cfg.kernel
        );
        let _ = writeln!(
            s,
            "input: {} samples @ {} Hz; event frames: {} (window {}, hop {})",
            cfg.sample_len,
            cfg.sample_rate,
            cfg.frame_count(),
            cfg.event_window,
            cfg.event_hop
        );
        let _ = writeln!(
            s,
            "temporal conditioning: {} (blocks {}, scope {})",
            cfg.cond_mode.name(),
            cfg.blocks,
            cfg.temporal_scope.name()
        );
        let _ = writeln!(s, "classes: {}", cfg.class_names.join(", "));
        let _ = writeln!(s, "level lengths: {:?}", cfg.level_lengths());
        for (name, count) in self.param_breakdown() {
            let _ = writeln!(s, "  {name}: {count}");
        }
        let _ = writeln!(s, "total trainable parameters: {}", self.param_total());
        s
    }
}

impl<S: Scalar> Parameterized<S> for UNet<S> {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<S>)) {
        f(&format!("{prefix}class_embed"), &mut self.class_embed);
        if let Some(nt) = &mut self.null_temporal {
            f(&format!("{prefix}null_temporal"), nt);
        }
        for (i, b) in self.downs.iter_mut().enumerate() {
            b.visit_params(&format!("{prefix}down{i}."), f);
        }
        self.bottleneck
            .visit_params(&format!("{prefix}bottleneck."), f);
        for (i, b) in self.ups.iter_mut().enumerate() {
            b.visit_params(&format!("{prefix}up{i}."), f);
        }
        self.head.visit_params(&format!("{prefix}head."), f);
    }
}
