//! Dataset plumbing: a synthetic corpus generator with controllable temporal
//! events, a labeled-WAV-directory loader, deterministic stratified
//! splitting, and shuffled batch streams over cached event features.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::feature::{extract_rms, EventFeature};
use crate::rng::RandomSource;
use crate::wave::{read_wav, write_wav, Waveform};

#[derive(Debug, Clone, PartialEq)]
pub enum ClipSource {
    File(PathBuf),
    Synth(u64),
}

#[derive(Debug, Clone)]
pub struct LabeledClip {
    pub wave: Waveform,
    pub class_id: usize,
    pub class_name: String,
    pub source: ClipSource,
}

/// Sound archetypes with distinct temporal structure: single decaying
/// impacts, trains of short transients, and slowly swelling washes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Archetype {
    ImpulsiveDecay,
    RepeatedTransient,
    StationaryNoise,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Carrier {
    Noise,
    Sine(f64),
    Chirp(f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthEvent {
    pub position_secs: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub archetype: Archetype,
    pub events: Vec<SynthEvent>,
    /// Decay time constant for transients; bump half-width for washes.
    pub decay_secs: f64,
    pub carrier: Carrier,
    pub seed: u64,
}

impl SynthSpec {
    fn fingerprint(&self) -> u64 {
        let mut h = Fnv::new();
        h.write_u64(self.seed);
        h.write_u64(self.events.len() as u64);
        for e in &self.events {
            h.write_u64(e.position_secs.to_bits());
            h.write_u64(e.amplitude.to_bits());
        }
        h.write_u64(self.decay_secs.to_bits());
        h.finish()
    }
}

/// FNV-1a, used for corpus fingerprints in run manifests.
pub struct Fnv(u64);

impl Fnv {
    pub fn new() -> Self {
        Fnv(0xcbf2_9ce4_8422_2325)
    }

    pub fn write_u64(&mut self, v: u64) {
        for b in v.to_le_bytes() {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    pub fn write_bytes(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    pub fn finish(&self) -> u64 {
        self.0
    }
}

impl Default for Fnv {
    fn default() -> Self {
        Self::new()
    }
}

/// Deterministic hash of clip audio and labels, for run manifests.
pub fn corpus_fingerprint(clips: &[LabeledClip]) -> u64 {
    let mut h = Fnv::new();
    for clip in clips {
        h.write_u64(clip.class_id as u64);
        h.write_bytes(clip.class_name.as_bytes());
        h.write_u64(clip.wave.sample_rate as u64);
        for &s in &clip.wave.samples {
            h.write_u64(s.to_bits() as u64);
        }
    }
    h.finish()
}

/// Render one clip. Deterministic given the spec; the envelope peaks at the
/// event positions so the RMS feature carries the intended event structure.
pub fn synth_clip(
    spec: &SynthSpec,
    class_id: usize,
    class_name: &str,
    sample_rate: u32,
    duration_secs: f64,
) -> Result<LabeledClip> {
    let n = (duration_secs * sample_rate as f64).round() as usize;
    for e in &spec.events {
        if e.position_secs < 0.0 || e.position_secs >= duration_secs {
            return Err(Error::Domain(format!(
                "event at {}s outside the {}s clip",
                e.position_secs, duration_secs
            )));
        }
    }
    let mut envelope = vec![0.0f64; n];
    let rate = sample_rate as f64;
    match spec.archetype {
        Archetype::ImpulsiveDecay | Archetype::RepeatedTransient => {
            let tau = (spec.decay_secs * rate).max(1.0);
            for e in &spec.events {
                let start = (e.position_secs * rate) as usize;
                // sharp attack, exponential decay; negligible past 8 tau
                let end = (start + (8.0 * tau) as usize).min(n);
                for (i, env) in envelope[start..end].iter_mut().enumerate() {
                    *env += e.amplitude * (-(i as f64) / tau).exp();
                }
            }
        }
        Archetype::StationaryNoise => {
            let sigma = (spec.decay_secs * rate).max(1.0);
            for e in &spec.events {
                let center = e.position_secs * rate;
                let lo = ((center - 4.0 * sigma).max(0.0)) as usize;
                let hi = ((center + 4.0 * sigma) as usize).min(n);
                for (t, env) in envelope.iter_mut().enumerate().take(hi).skip(lo) {
                    let d = (t as f64 - center) / sigma;
                    *env += e.amplitude * (-0.5 * d * d).exp();
                }
            }
        }
    }
    for env in envelope.iter_mut() {
        if *env > 1.0 {
            *env = 1.0;
        }
    }

    let mut rng = RandomSource::from_seed(spec.seed);
    let phase = rng.uniform() * std::f64::consts::TAU;
    let mut samples = Vec::with_capacity(n);
    for (t, &env) in envelope.iter().enumerate() {
        let time = t as f64 / rate;
        let carrier = match spec.carrier {
            // uniform noise keeps samples bounded
            Carrier::Noise => rng.uniform_in(-1.0, 1.0),
            Carrier::Sine(f) => (std::f64::consts::TAU * f * time + phase).sin(),
            Carrier::Chirp(f0, f1) => {
                let f = f0 + (f1 - f0) * time / duration_secs;
                (std::f64::consts::TAU * f * time + phase).sin()
            }
        };
        samples.push((env * carrier) as f32);
    }
    Ok(LabeledClip {
        wave: Waveform::new(samples, sample_rate),
        class_id,
        class_name: class_name.to_string(),
        source: ClipSource::Synth(spec.fingerprint()),
    })
}

/// Archetype assigned to each class index, cycling through the three kinds.
pub fn class_archetype(class_id: usize) -> Archetype {
    match class_id % 3 {
        0 => Archetype::ImpulsiveDecay,
        1 => Archetype::RepeatedTransient,
        _ => Archetype::StationaryNoise,
    }
}

/// Draw a randomized spec for one clip of the given class.
pub fn random_spec(class_id: usize, duration_secs: f64, rng: &mut RandomSource) -> SynthSpec {
    let archetype = class_archetype(class_id);
    let margin = 0.06;
    let usable = duration_secs - 2.0 * margin;
    let (count, decay, carrier) = match archetype {
        Archetype::ImpulsiveDecay => (
            1 + rng.below(2),
            rng.uniform_in(0.03, 0.05),
            Carrier::Sine(rng.uniform_in(80.0, 160.0)),
        ),
        Archetype::RepeatedTransient => (2 + rng.below(3), rng.uniform_in(0.01, 0.02), Carrier::Noise),
        Archetype::StationaryNoise => (1 + rng.below(2), rng.uniform_in(0.08, 0.13), Carrier::Noise),
    };
    // events spaced at least 0.15 s apart
    let mut positions = Vec::new();
    let mut attempts = 0;
    while positions.len() < count && attempts < 200 {
        attempts += 1;
        let p = margin + rng.uniform() * usable;
        if positions.iter().all(|&q: &f64| (q - p).abs() > 0.15) {
            positions.push(p);
        }
    }
    positions.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let events = positions
        .into_iter()
        .map(|p| SynthEvent {
            position_secs: p,
            amplitude: rng.uniform_in(0.45, 0.9),
        })
        .collect();
    SynthSpec {
        archetype,
        events,
        decay_secs: decay,
        carrier,
        seed: rng.next_u64(),
    }
}

#[derive(Debug, Clone)]
pub struct ToyCorpusConfig {
    pub class_names: Vec<String>,
    pub clips_per_class: usize,
    pub duration_secs: f64,
    pub sample_rate: u32,
    pub seed: u64,
}

impl Default for ToyCorpusConfig {
    fn default() -> Self {
        ToyCorpusConfig {
            class_names: vec!["thump".into(), "tick".into(), "wash".into()],
            clips_per_class: 200,
            duration_secs: 1.0,
            sample_rate: 8000,
            seed: 0,
        }
    }
}

/// Deterministic synthetic corpus: `clips_per_class` clips for each class.
pub fn synth_toy_corpus(cfg: &ToyCorpusConfig) -> Result<Vec<LabeledClip>> {
    let mut clips = Vec::with_capacity(cfg.class_names.len() * cfg.clips_per_class);
    for (class_id, name) in cfg.class_names.iter().enumerate() {
        for k in 0..cfg.clips_per_class {
            let mut rng =
                RandomSource::derive(cfg.seed, (class_id as u64) << 32 | k as u64);
            let spec = random_spec(class_id, cfg.duration_secs, &mut rng);
            clips.push(synth_clip(
                &spec,
                class_id,
                name,
                cfg.sample_rate,
                cfg.duration_secs,
            )?);
        }
    }
    Ok(clips)
}

/// Write clips as `<class>/<class>_<idx>.wav` plus a `manifest.csv` of
/// (path, class_name) rows.
pub fn write_corpus(clips: &[LabeledClip], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = String::from("path,class_name\n");
    let mut index_in_class = std::collections::BTreeMap::<usize, usize>::new();
    for clip in clips {
        let idx = index_in_class.entry(clip.class_id).or_insert(0);
        let class_dir = dir.join(&clip.class_name);
        fs::create_dir_all(&class_dir).map_err(|e| Error::io(&class_dir, e))?;
        let rel = format!("{}/{}_{:03}.wav", clip.class_name, clip.class_name, idx);
        write_wav(&clip.wave, &dir.join(&rel))?;
        manifest.push_str(&format!("{rel},{}\n", clip.class_name));
        *idx += 1;
    }
    let manifest_path = dir.join("manifest.csv");
    fs::write(&manifest_path, manifest).map_err(|e| Error::io(&manifest_path, e))
}

pub struct LoadedCorpus {
    pub clips: Vec<LabeledClip>,
    pub class_names: Vec<String>,
    pub warnings: Vec<String>,
}

/// Folder-per-class layout: class vocabulary is the sorted list of
/// subdirectory names, files load in lexicographic order. Undecodable files
/// are listed as warnings; empty classes warn too.
pub fn load_directory(root: &Path) -> Result<LoadedCorpus> {
    let mut class_dirs: Vec<String> = Vec::new();
    let entries: Vec<_> = fs::read_dir(root)
        .map_err(|e| Error::io(root, e))?
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(|e| Error::io(root, e))?;
    for entry in &entries {
        if entry.path().is_dir() {
            class_dirs.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    class_dirs.sort();
    let mut warnings = Vec::new();
    if class_dirs.is_empty() {
        warnings.push(format!("no class folders under {}", root.display()));
    }
    let mut clips = Vec::new();
    for (class_id, class_name) in class_dirs.iter().enumerate() {
        let dir = root.join(class_name);
        let mut files: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(|e| Error::io(&dir, e))?
            .collect::<std::io::Result<Vec<_>>>()
            .map_err(|e| Error::io(&dir, e))?
            .into_iter()
            .map(|e| e.path())
            .filter(|p| p.extension().map(|e| e == "wav").unwrap_or(false))
            .collect();
        files.sort();
        if files.is_empty() {
            warnings.push(format!("class {class_name:?} has no wav files"));
        }
        for path in files {
            match read_wav(&path) {
                Ok(wave) => clips.push(LabeledClip {
                    wave,
                    class_id,
                    class_name: class_name.clone(),
                    source: ClipSource::File(path),
                }),
                Err(e) => warnings.push(format!("undecodable {}: {e}", path.display())),
            }
        }
    }
    Ok(LoadedCorpus {
        clips,
        class_names: class_dirs,
        warnings,
    })
}

/// CSV manifest layout: a header row then `path,class_name` rows, paths
/// relative to the manifest's directory. The class vocabulary is the sorted
/// set of names that appear.
pub fn load_manifest(manifest: &Path) -> Result<LoadedCorpus> {
    let text = fs::read_to_string(manifest).map_err(|e| Error::io(manifest, e))?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue; // header
        }
        let (path, class) = line.split_once(',').ok_or_else(|| Error::Format {
            what: "corpus manifest",
            detail: format!("line {}: expected path,class_name", i + 1),
        })?;
        rows.push((base.join(path.trim()), class.trim().to_string()));
    }
    let mut class_names: Vec<String> = rows.iter().map(|(_, c)| c.clone()).collect();
    class_names.sort();
    class_names.dedup();
    let mut warnings = Vec::new();
    if rows.is_empty() {
        warnings.push(format!("manifest {} lists no clips", manifest.display()));
    }
    let mut clips = Vec::new();
    for (path, class) in rows {
        let class_id = class_names.iter().position(|c| *c == class).unwrap();
        match read_wav(&path) {
            Ok(wave) => clips.push(LabeledClip {
                wave,
                class_id,
                class_name: class,
                source: ClipSource::File(path),
            }),
            Err(e) => warnings.push(format!("undecodable {}: {e}", path.display())),
        }
    }
    Ok(LoadedCorpus {
        clips,
        class_names,
        warnings,
    })
}

/// Stratified train/validation split: per class, a seeded shuffle then a
/// val share of round(n * val_fraction) clamped to [1, n-1]. Classes with a
/// single clip go entirely to train with a warning.
pub fn split(
    clips: Vec<LabeledClip>,
    val_fraction: f64,
    seed: u64,
) -> Result<(Vec<LabeledClip>, Vec<LabeledClip>, Vec<String>)> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(Error::Domain(format!(
            "val_fraction must be in (0, 1), got {val_fraction}"
        )));
    }
    let mut by_class: BTreeMapVec = BTreeMapVec::new();
    for clip in clips {
        by_class.push(clip.class_id, clip);
    }
    let mut train = Vec::new();
    let mut val = Vec::new();
    let mut warnings = Vec::new();
    for (class_id, mut members) in by_class.0 {
        if members.len() < 2 {
            warnings.push(format!(
                "class {:?} has {} clip(s); all assigned to train",
                members
                    .first()
                    .map(|c| c.class_name.clone())
                    .unwrap_or_default(),
                members.len()
            ));
            train.append(&mut members);
            continue;
        }
        let mut rng = RandomSource::derive(seed, 0x5917_0000 ^ class_id as u64);
        let mut order: Vec<usize> = (0..members.len()).collect();
        rng.shuffle(&mut order);
        let n_val = ((members.len() as f64 * val_fraction).round() as usize)
            .clamp(1, members.len() - 1);
        let val_set: std::collections::BTreeSet<usize> =
            order[..n_val].iter().copied().collect();
        for (i, clip) in members.into_iter().enumerate() {
            if val_set.contains(&i) {
                val.push(clip);
            } else {
                train.push(clip);
            }
        }
    }
    Ok((train, val, warnings))
}

struct BTreeMapVec(std::collections::BTreeMap<usize, Vec<LabeledClip>>);

impl BTreeMapVec {
    fn new() -> Self {
        BTreeMapVec(std::collections::BTreeMap::new())
    }
    fn push(&mut self, k: usize, v: LabeledClip) {
        self.0.entry(k).or_default().push(v);
    }
}

/// One clip with its cached training tensors; the event feature is computed
/// once and reused every epoch.
pub struct PreparedItem {
    pub x0: Vec<f32>,
    pub class: usize,
    pub temporal: Vec<f32>,
    pub feature: EventFeature,
}

pub struct PreparedCorpus {
    pub items: Vec<PreparedItem>,
    pub class_names: Vec<String>,
}

impl PreparedCorpus {
    pub fn from_clips(
        clips: &[LabeledClip],
        class_names: &[String],
        sample_rate: u32,
        sample_len: usize,
        window: usize,
        hop: usize,
    ) -> Result<Self> {
        let mut items = Vec::with_capacity(clips.len());
        for clip in clips {
            crate::wave::validate_training_format(&clip.wave, sample_rate, sample_len)?;
            if clip.class_id >= class_names.len() {
                return Err(Error::Validation(format!(
                    "clip class id {} outside the {}-class vocabulary",
                    clip.class_id,
                    class_names.len()
                )));
            }
            let feature = extract_rms(&clip.wave, window, hop)?;
            items.push(PreparedItem {
                x0: clip.wave.samples.clone(),
                class: clip.class_id,
                temporal: feature.values.iter().map(|&v| v as f32).collect(),
                feature,
            });
        }
        Ok(PreparedCorpus {
            items,
            class_names: class_names.to_vec(),
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// One epoch of shuffled batches over a prepared corpus; the last partial
/// batch is kept.
pub struct BatchStream<'a> {
    corpus: &'a PreparedCorpus,
    order: Vec<usize>,
    pos: usize,
    batch_size: usize,
}

impl<'a> Iterator for BatchStream<'a> {
    type Item = Vec<&'a PreparedItem>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let batch = self.order[self.pos..end]
            .iter()
            .map(|&i| &self.corpus.items[i])
            .collect();
        self.pos = end;
        Some(batch)
    }
}

pub fn batches<'a>(
    corpus: &'a PreparedCorpus,
    batch_size: usize,
    rng: &mut RandomSource,
) -> BatchStream<'a> {
    assert!(batch_size >= 1);
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    rng.shuffle(&mut order);
    BatchStream {
        corpus,
        order,
        pos: 0,
        batch_size,
    }
}
