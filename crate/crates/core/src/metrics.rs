//! Quantitative evaluation: the event-L1 temporal fidelity metric, Fréchet
//! distance between Gaussian fits of externally supplied embedding sets, and
//! the Inception Score over supplied class-probability matrices. Embeddings
//! and probabilities are always ingested from files; no classifier networks
//! live here.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::feature::{extract_rms, EventFeature};
use crate::wave::read_wav;

/// Mean absolute difference between two event features of identical
/// geometry: (1/k) sum |E_i - E_hat_i|.
pub fn event_l1(target: &EventFeature, generated: &EventFeature) -> Result<f64> {
    if !target.same_geometry(generated) {
        return Err(Error::Domain(format!(
            "event feature geometry mismatch: ({}, {}, {} frames) vs ({}, {}, {} frames)",
            target.window,
            target.hop,
            target.frame_count(),
            generated.window,
            generated.hop,
            generated.frame_count()
        )));
    }
    let k = target.frame_count() as f64;
    Ok(target
        .values
        .iter()
        .zip(&generated.values)
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / k)
}

/// Embedding matrix [items x dim] read from a binary vector container.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub items: usize,
    pub dim: usize,
    pub data: Vec<f64>,
}

const EMBEDDING_MAGIC: &[u8; 4] = b"EMB1";

impl EmbeddingSet {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::Validation(
                "embedding set needs at least 2 items for a covariance".into(),
            ));
        }
        let dim = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.len() != dim {
                return Err(Error::Shape("ragged embedding rows".into()));
            }
            data.extend_from_slice(r);
        }
        let set = EmbeddingSet {
            items: rows.len(),
            dim,
            data,
        };
        set.check_finite()?;
        Ok(set)
    }

    fn check_finite(&self) -> Result<()> {
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite embedding entry".into()));
        }
        Ok(())
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// 16-byte header (magic, items, dim, reserved) then f32 little endian.
    pub fn encode(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(16 + 4 * self.data.len());
        buf.extend_from_slice(EMBEDDING_MAGIC);
        buf.extend_from_slice(&(self.items as u32).to_le_bytes());
        buf.extend_from_slice(&(self.dim as u32).to_le_bytes());
        buf.extend_from_slice(&0u32.to_le_bytes());
        for &v in &self.data {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
        buf
    }

    pub fn decode(buf: &[u8]) -> Result<Self> {
        let malformed = |detail: String| Error::Format {
            what: "embedding file",
            detail,
        };
        if buf.len() < 16 || &buf[0..4] != EMBEDDING_MAGIC {
            return Err(malformed("bad or missing header".into()));
        }
        let items = u32::from_le_bytes(buf[4..8].try_into().unwrap()) as usize;
        let dim = u32::from_le_bytes(buf[8..12].try_into().unwrap()) as usize;
        if buf.len() != 16 + 4 * items * dim {
            return Err(malformed(format!(
                "expected {items}x{dim} f32 values after the header"
            )));
        }
        if items < 2 {
            return Err(Error::Validation(
                "embedding set needs at least 2 items".into(),
            ));
        }
        let data = buf[16..]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
            .collect();
        let set = EmbeddingSet { items, dim, data };
        set.check_finite()?;
        Ok(set)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&buf)
    }
}

/// Row-stochastic class-probability matrix [items x classes].
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMatrix {
    pub items: usize,
    pub classes: usize,
    pub data: Vec<f64>,
}

impl ProbMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Validation("empty probability matrix".into()));
        }
        let classes = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * classes);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != classes {
                return Err(Error::Shape("ragged probability rows".into()));
            }
            let sum: f64 = r.iter().sum();
            if (sum - 1.0).abs() > 1e-6 || r.iter().any(|&p| p < 0.0) {
                return Err(Error::Domain(format!(
                    "row {i} is not a probability distribution (sum {sum})"
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(ProbMatrix {
            items: rows.len(),
            classes,
            data,
        })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.classes..(i + 1) * self.classes]
    }

    /// CSV: header row then one probability row per line.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if i == 0 {
                continue; // header
            }
            if line.trim().is_empty() {
                continue;
            }
            let row = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| Error::Format {
                    what: "probability csv",
                    detail: format!("line {}: not a number list", i + 1),
                })?;
            rows.push(row);
        }
        Self::from_rows(&rows)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text)
    }
}

// ---------------------------------------------------------------------------
// symmetric eigendecomposition (cyclic Jacobi)
// ---------------------------------------------------------------------------

/// Eigenvalues and eigenvectors (columns of `vecs`) of a symmetric matrix.
fn sym_eigen(mut a: Vec<f64>, n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += a[i * n + j] * a[i * n + j];
            }
        }
        if off.sqrt() < 1e-14 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let vals = (0..n).map(|i| a[i * n + i]).collect();
    (vals, v)
}

fn mat_mul(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..n {
                out[i * n + j] += aik * b[k * n + j];
            }
        }
    }
    out
}

/// V diag(f(vals)) V^T
fn assemble(vals: &[f64], vecs: &[f64], n: usize, f: impl Fn(f64) -> f64) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for k in 0..n {
        let fv = f(vals[k]);
        if fv == 0.0 {
            continue;
        }
        for i in 0..n {
            let vik = vecs[i * n + k];
            for j in 0..n {
                out[i * n + j] += fv * vik * vecs[j * n + k];
            }
        }
    }
    out
}

fn mean_and_cov(set: &EmbeddingSet) -> (Vec<f64>, Vec<f64>) {
    let (n, d) = (set.items, set.dim);
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (m, &x) in mean.iter_mut().zip(set.row(i)) {
            *m += x;
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }
    // unbiased estimator
    let mut cov = vec![0.0; d * d];
    for i in 0..n {
        let row = set.row(i);
        for a in 0..d {
            let da = row[a] - mean[a];
            for b in a..d {
                cov[a * d + b] += da * (row[b] - mean[b]);
            }
        }
    }
    let denom = (n - 1) as f64;
    for a in 0..d {
        for b in a..d {
            cov[a * d + b] /= denom;
            cov[b * d + a] = cov[a * d + b];
        }
    }
    (mean, cov)
}

fn clamp_eigenvalue(l: f64, context: &str) -> Result<f64> {
    if l < -1e-8 {
        return Err(Error::Numeric(format!(
            "{context}: eigenvalue {l} is too negative for a PSD matrix"
        )));
    }
    Ok(l.max(0.0))
}

/// Fréchet distance between Gaussian fits:
/// ||mu_a - mu_b||^2 + Tr(Sa + Sb - 2 (Sa^(1/2) Sb Sa^(1/2))^(1/2)).
pub fn frechet_distance(a: &EmbeddingSet, b: &EmbeddingSet) -> Result<f64> {
    if a.dim != b.dim {
        return Err(Error::Domain(format!(
            "embedding dims differ: {} vs {}",
            a.dim, b.dim
        )));
    }
    let d = a.dim;
    let (mu_a, cov_a) = mean_and_cov(a);
    let (mu_b, cov_b) = mean_and_cov(b);
    let mean_term: f64 = mu_a
        .iter()
        .zip(&mu_b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    let trace = |m: &[f64]| (0..d).map(|i| m[i * d + i]).sum::<f64>();

    let (vals_a, vecs_a) = sym_eigen(cov_a.clone(), d);
    for &l in &vals_a {
        clamp_eigenvalue(l, "covariance of first set")?;
    }
    let sqrt_a = assemble(&vals_a, &vecs_a, d, |l| l.max(0.0).sqrt());
    let inner = mat_mul(&mat_mul(&sqrt_a, &cov_b, d), &sqrt_a, d);
    let (vals_m, _) = sym_eigen(inner, d);
    let mut trace_sqrt = 0.0;
    for &l in &vals_m {
        trace_sqrt += clamp_eigenvalue(l, "product matrix")?.sqrt();
    }
    let fd = mean_term + trace(&cov_a) + trace(&cov_b) - 2.0 * trace_sqrt;
    if fd < -1e-6 {
        return Err(Error::Numeric(format!("Fréchet distance came out {fd}")));
    }
    Ok(fd.max(0.0))
}

/// exp(mean KL(p(y|x) || p(y))), averaged over `splits` contiguous splits.
pub fn inception_score(p: &ProbMatrix, splits: usize) -> Result<f64> {
    if splits < 1 {
        return Err(Error::Domain("splits must be >= 1".into()));
    }
    if splits > p.items {
        return Err(Error::Domain(format!(
            "{splits} splits over {} items",
            p.items
        )));
    }
    let chunk = p.items.div_ceil(splits);
    let mut scores = Vec::new();
    for s in 0..splits {
        let lo = s * chunk;
        let hi = ((s + 1) * chunk).min(p.items);
        if lo >= hi {
            continue;
        }
        let n = hi - lo;
        let mut marginal = vec![0.0; p.classes];
        for i in lo..hi {
            for (m, &v) in marginal.iter_mut().zip(p.row(i)) {
                *m += v;
            }
        }
        for m in marginal.iter_mut() {
            *m /= n as f64;
        }
        let mut mean_kl = 0.0;
        for i in lo..hi {
            let mut kl = 0.0;
            for (&pv, &mv) in p.row(i).iter().zip(&marginal) {
                if pv > 0.0 {
                    kl += pv * (pv / mv).ln();
                }
            }
            mean_kl += kl;
        }
        scores.push((mean_kl / n as f64).exp());
    }
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

// ---------------------------------------------------------------------------
// run evaluation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub window: usize,
    pub hop: usize,
    pub emb_ref: Option<PathBuf>,
    pub emb_gen: Option<PathBuf>,
    pub probs: Option<PathBuf>,
    pub is_splits: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            window: crate::feature::DEFAULT_WINDOW,
            hop: crate::feature::DEFAULT_HOP,
            emb_ref: None,
            emb_gen: None,
            probs: None,
            is_splits: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub class: String,
    pub e_l1: Option<f64>,
    pub fad: Option<f64>,
    pub is_score: Option<f64>,
    pub n_items: usize,
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub rows: Vec<ReportRow>,
    pub warnings: Vec<String>,
}

impl EvalReport {
    pub fn mean_e_l1(&self) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.class == "mean")
            .and_then(|r| r.e_l1)
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x}"),
        None => "n/a".to_string(),
    }
}

/// CSV with a stable header and one row per class plus a final mean row.
pub fn report_to_csv(report: &EvalReport) -> String {
    let mut s = String::from("class,e_l1,fad,is,n_items\n");
    for r in &report.rows {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            r.class,
            fmt_opt(r.e_l1),
            fmt_opt(r.fad),
            fmt_opt(r.is_score),
            r.n_items
        ));
    }
    s
}

/// Relative paths of WAV files under `root`, one level of class folders or
/// a flat directory, lexicographically sorted.
fn wav_paths(root: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    let mut entries: Vec<_> = fs::read_dir(root)
        .map_err(|e| Error::io(root, e))?
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(|e| Error::io(root, e))?;
    entries.sort_by_key(|e| e.file_name());
    for entry in entries {
        let path = entry.path();
        let name = entry.file_name().to_string_lossy().into_owned();
        if path.is_dir() {
            let mut files: Vec<_> = fs::read_dir(&path)
                .map_err(|e| Error::io(&path, e))?
                .collect::<std::io::Result<Vec<_>>>()
                .map_err(|e| Error::io(&path, e))?;
            files.sort_by_key(|e| e.file_name());
            for f in files {
                let fp = f.path();
                if fp.extension().map(|e| e == "wav").unwrap_or(false) {
                    out.push((name.clone(), fp));
                }
            }
        } else if path.extension().map(|e| e == "wav").unwrap_or(false) {
            out.push(("all".to_string(), path));
        }
    }
    Ok(out)
}

/// Pairwise event-L1 between reference and generated directories (matched by
/// relative path), class-wise averaged, plus optional FAD/IS from supplied
/// embedding/probability files.
pub fn evaluate_run(gen_dir: &Path, ref_dir: &Path, cfg: &EvalConfig) -> Result<EvalReport> {
    let refs = wav_paths(ref_dir)?;
    let mut warnings = Vec::new();
    let mut per_class: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (class, ref_path) in &refs {
        let rel = ref_path.strip_prefix(ref_dir).unwrap();
        let gen_path = gen_dir.join(rel);
        if !gen_path.exists() {
            warnings.push(format!("missing pair: {}", rel.display()));
            continue;
        }
        let res = (|| -> Result<f64> {
            let rw = read_wav(ref_path)?;
            let gw = read_wav(&gen_path)?;
            let rf = extract_rms(&rw, cfg.window, cfg.hop)?;
            let gf = extract_rms(&gw, cfg.window, cfg.hop)?;
            event_l1(&rf, &gf)
        })();
        match res {
            Ok(v) => per_class.entry(class.clone()).or_default().push(v),
            Err(e) => warnings.push(format!("skipped {}: {e}", rel.display())),
        }
    }

    let mut rows = Vec::new();
    let mut class_means = Vec::new();
    let mut total_items = 0usize;
    for (class, values) in &per_class {
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        class_means.push(mean);
        total_items += values.len();
        rows.push(ReportRow {
            class: class.clone(),
            e_l1: Some(mean),
            fad: None,
            is_score: None,
            n_items: values.len(),
        });
    }

    let fad = match (&cfg.emb_ref, &cfg.emb_gen) {
        (Some(a), Some(b)) => Some(frechet_distance(
            &EmbeddingSet::read(a)?,
            &EmbeddingSet::read(b)?,
        )?),
        _ => None,
    };
    let is_score = match &cfg.probs {
        Some(p) => Some(inception_score(&ProbMatrix::read_csv(p)?, cfg.is_splits)?),
        None => None,
    };

    // class-wise averaging: the mean row averages the class means
    let mean_e_l1 = if class_means.is_empty() {
        None
    } else {
        Some(class_means.iter().sum::<f64>() / class_means.len() as f64)
    };
    rows.push(ReportRow {
        class: "mean".to_string(),
        e_l1: mean_e_l1,
        fad,
        is_score,
        n_items: total_items,
    });
    Ok(EvalReport { rows, warnings })
}
