//! FiLM-family modulation layers.
//!
//! All three layers map a conditioning input to per-channel (gamma, beta)
//! and apply `gamma * x + beta`:
//!
//! * `FilmLayer` — one (gamma, beta) from a flat condition vector, broadcast
//!   over the whole length axis.
//! * `TFilmLayer` — condition split into N blocks, max-pooled per block, an
//!   LSTM walks the pooled sequence and a linear head emits per-block
//!   (gamma_i, beta_i).
//! * `BFilmLayer` — same block pooling, but one shared MLP maps each pooled
//!   block to (gamma_i, beta_i) independently. No recurrence, so blocks are
//!   modulated independently and the layer is cheaper than TFiLM.
//!
//! Condition and activation lengths may differ; both sides are right-padded
//! (repeating the last column) to a multiple of N, and the padding is
//! stripped from the output.

use crate::error::{Error, Result};
use crate::nn::lstm::{LstmCell, LstmStepCache};
use crate::nn::ops::{ActKind, Linear, Mlp, MlpCache};
use crate::nn::tensor::{Activation, Param, Parameterized};
use crate::nn::Scalar;
use crate::rng::RandomSource;

/// Which temporal conditioning layer the model uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TemporalMode {
    None,
    Film,
    TFilm,
    BFilm,
}

impl TemporalMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(TemporalMode::None),
            "film" => Ok(TemporalMode::Film),
            "tfilm" => Ok(TemporalMode::TFilm),
            "bfilm" => Ok(TemporalMode::BFilm),
            _ => Err(Error::Validation(format!(
                "unknown conditioning mode {s:?} (expected none|film|tfilm|bfilm)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TemporalMode::None => "none",
            TemporalMode::Film => "film",
            TemporalMode::TFilm => "tfilm",
            TemporalMode::BFilm => "bfilm",
        }
    }
}

fn check_blocks(n: usize, x_len: usize, y_len: usize) -> Result<usize> {
    if n < 1 {
        return Err(Error::Domain("block count must be >= 1".into()));
    }
    if n > x_len || n > y_len {
        return Err(Error::Domain(format!(
            "block count {n} exceeds activation length {x_len} or condition length {y_len}"
        )));
    }
    Ok(n)
}

/// Max-pool each of `n` blocks of `y` over time (right-padded by repeating
/// the last column). Returns pooled values [n * c_in] and, for backward,
/// the source column index of each maximum.
fn pool_condition<S: Scalar>(y: &Activation<S>, n: usize) -> (Vec<S>, Vec<usize>) {
    let c_in = y.channels;
    let block_len = y.len.div_ceil(n);
    let mut pooled = vec![S::ZERO; n * c_in];
    let mut argmax = vec![0usize; n * c_in];
    for b in 0..n {
        for c in 0..c_in {
            let row = y.row(c);
            let mut best = None::<(S, usize)>;
            for p in b * block_len..(b + 1) * block_len {
                let src = p.min(y.len - 1);
                let v = row[src];
                match best {
                    Some((bv, _)) if bv >= v => {}
                    _ => best = Some((v, src)),
                }
            }
            let (v, src) = best.unwrap();
            pooled[b * c_in + c] = v;
            argmax[b * c_in + c] = src;
        }
    }
    (pooled, argmax)
}

fn pool_condition_backward<S: Scalar>(
    grad_pooled: &[S],
    argmax: &[usize],
    c_in: usize,
    y_len: usize,
    n: usize,
) -> Activation<S> {
    let mut grad_y = Activation::zeros(c_in, y_len);
    for b in 0..n {
        for c in 0..c_in {
            let src = argmax[b * c_in + c];
            let cur = grad_y.get(c, src);
            grad_y.set(c, src, cur + grad_pooled[b * c_in + c]);
        }
    }
    grad_y
}

/// Apply per-block affine modulation: column t belongs to block t / block_len
/// where block_len = ceil(len / n); gammas/betas are block-major [n * c_out].
pub fn modulate_blocks<S: Scalar>(
    x: &Activation<S>,
    gammas: &[S],
    betas: &[S],
    n: usize,
) -> Activation<S> {
    let c_out = x.channels;
    assert_eq!(gammas.len(), n * c_out);
    assert_eq!(betas.len(), n * c_out);
    let block_len = x.len.div_ceil(n);
    let mut out = Activation::zeros(c_out, x.len);
    for c in 0..c_out {
        let xr = x.row(c);
        let or = &mut out.data[c * x.len..(c + 1) * x.len];
        for (t, (&xv, o)) in xr.iter().zip(or.iter_mut()).enumerate() {
            let b = t / block_len;
            *o = gammas[b * c_out + c] * xv + betas[b * c_out + c];
        }
    }
    out
}

/// Backward of `modulate_blocks`: returns (grad_x, grad_gammas, grad_betas).
pub fn modulate_blocks_backward<S: Scalar>(
    x: &Activation<S>,
    gammas: &[S],
    n: usize,
    grad_out: &Activation<S>,
) -> (Activation<S>, Vec<S>, Vec<S>) {
    let c_out = x.channels;
    let block_len = x.len.div_ceil(n);
    let mut grad_x = Activation::zeros(c_out, x.len);
    let mut grad_g = vec![S::ZERO; n * c_out];
    let mut grad_b = vec![S::ZERO; n * c_out];
    for c in 0..c_out {
        let xr = x.row(c);
        let gr = grad_out.row(c);
        let gxr = &mut grad_x.data[c * x.len..(c + 1) * x.len];
        for t in 0..x.len {
            let b = t / block_len;
            let g = gr[t];
            gxr[t] = gammas[b * c_out + c] * g;
            grad_g[b * c_out + c] += g * xr[t];
            grad_b[b * c_out + c] += g;
        }
    }
    (grad_x, grad_g, grad_b)
}

/// Identity (gamma, beta) vector: [1; c_out] then [0; c_out].
fn identity_gamma_beta<S: Scalar>(c_out: usize) -> Vec<S> {
    let mut v = vec![S::ONE; 2 * c_out];
    v[c_out..].fill(S::ZERO);
    v
}

/// Bias the gamma half of a freshly built head toward 1 so modulation starts
/// near identity while the condition path stays live.
fn bias_gamma_one<S: Scalar>(layer: &mut Linear<S>, c_out: usize) {
    for c in 0..c_out {
        layer.b.value.data[c] = S::ONE;
    }
}

// ---------------------------------------------------------------------------
// FiLM
// ---------------------------------------------------------------------------

/// Per-channel affine modulation from a flat condition vector.
#[derive(Debug, Clone)]
pub struct FilmLayer<S> {
    pub mlp: Mlp<S>,
    pub c_out: usize,
}

#[derive(Debug, Clone)]
pub struct FilmCache<S> {
    x: Activation<S>,
    mlp: MlpCache<S>,
    gammas: Vec<S>,
}

impl<S: Scalar> FilmLayer<S> {
    pub fn new(cond_dim: usize, hidden: usize, c_out: usize, rng: &mut RandomSource) -> Self {
        let mut mlp = Mlp::new(&[cond_dim, hidden, 2 * c_out], ActKind::Silu, rng);
        bias_gamma_one(mlp.layers.last_mut().unwrap(), c_out);
        FilmLayer { mlp, c_out }
    }

    /// Pin the MLP so it always emits (gamma=1, beta=0).
    pub fn force_identity(&mut self) {
        self.mlp.pin_output(&identity_gamma_beta::<S>(self.c_out));
    }

    pub fn forward(&self, x: &Activation<S>, cond: &[S]) -> Result<(Activation<S>, FilmCache<S>)> {
        if x.channels != self.c_out {
            return Err(Error::Shape(format!(
                "film expects {} channels, got {}",
                self.c_out, x.channels
            )));
        }
        let (gb, mlp_cache) = self.mlp.forward(cond)?;
        let (gammas, betas) = gb.split_at(self.c_out);
        let out = modulate_blocks(x, gammas, betas, 1);
        Ok((
            out,
            FilmCache {
                x: x.clone(),
                mlp: mlp_cache,
                gammas: gammas.to_vec(),
            },
        ))
    }

    /// Returns (grad_x, grad_cond).
    pub fn backward(
        &mut self,
        cache: &FilmCache<S>,
        grad_out: &Activation<S>,
    ) -> (Activation<S>, Vec<S>) {
        let (grad_x, grad_g, grad_b) =
            modulate_blocks_backward(&cache.x, &cache.gammas, 1, grad_out);
        let mut grad_gb = grad_g;
        grad_gb.extend(grad_b);
        let grad_cond = self.mlp.backward(&cache.mlp, &grad_gb);
        (grad_x, grad_cond)
    }
}

impl<S: Scalar> Parameterized<S> for FilmLayer<S> {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<S>)) {
        self.mlp.visit_params(&format!("{prefix}mlp."), f);
    }
}

// ---------------------------------------------------------------------------
// BFiLM
// ---------------------------------------------------------------------------

/// Block-wise FiLM: one shared MLP maps each max-pooled condition block to
/// that block's (gamma, beta).
#[derive(Debug, Clone)]
pub struct BFilmLayer<S> {
    pub mlp: Mlp<S>,
    pub blocks: usize,
    pub c_in: usize,
    pub c_out: usize,
}

#[derive(Debug, Clone)]
pub struct BFilmCache<S> {
    x: Activation<S>,
    y_len: usize,
    pooled_argmax: Vec<usize>,
    mlp: Vec<MlpCache<S>>,
    gammas: Vec<S>,
}

impl<S: Scalar> BFilmLayer<S> {
    pub fn new(
        c_in: usize,
        hidden: usize,
        c_out: usize,
        blocks: usize,
        rng: &mut RandomSource,
    ) -> Self {
        let mut mlp = Mlp::new(&[c_in, hidden, 2 * c_out], ActKind::Silu, rng);
        bias_gamma_one(mlp.layers.last_mut().unwrap(), c_out);
        BFilmLayer {
            mlp,
            blocks,
            c_in,
            c_out,
        }
    }

    pub fn force_identity(&mut self) {
        self.mlp.pin_output(&identity_gamma_beta::<S>(self.c_out));
    }

    pub fn forward(
        &self,
        x: &Activation<S>,
        y: &Activation<S>,
    ) -> Result<(Activation<S>, BFilmCache<S>)> {
        let n = check_blocks(self.blocks, x.len, y.len)?;
        if x.channels != self.c_out || y.channels != self.c_in {
            return Err(Error::Shape(format!(
                "bfilm expects activation {} / condition {} channels, got {} / {}",
                self.c_out, self.c_in, x.channels, y.channels
            )));
        }
        let (pooled, argmax) = pool_condition(y, n);
        let mut gammas = vec![S::ZERO; n * self.c_out];
        let mut betas = vec![S::ZERO; n * self.c_out];
        let mut mlp_caches = Vec::with_capacity(n);
        for b in 0..n {
            let (gb, cache) = self.mlp.forward(&pooled[b * self.c_in..(b + 1) * self.c_in])?;
            gammas[b * self.c_out..(b + 1) * self.c_out].copy_from_slice(&gb[..self.c_out]);
            betas[b * self.c_out..(b + 1) * self.c_out].copy_from_slice(&gb[self.c_out..]);
            mlp_caches.push(cache);
        }
        let out = modulate_blocks(x, &gammas, &betas, n);
        Ok((
            out,
            BFilmCache {
                x: x.clone(),
                y_len: y.len,
                pooled_argmax: argmax,
                mlp: mlp_caches,
                gammas,
            },
        ))
    }

    /// Returns (grad_x, grad_y).
    pub fn backward(
        &mut self,
        cache: &BFilmCache<S>,
        grad_out: &Activation<S>,
    ) -> (Activation<S>, Activation<S>) {
        let n = self.blocks;
        let (grad_x, grad_g, grad_b) =
            modulate_blocks_backward(&cache.x, &cache.gammas, n, grad_out);
        let mut grad_pooled = vec![S::ZERO; n * self.c_in];
        for b in 0..n {
            let mut grad_gb = Vec::with_capacity(2 * self.c_out);
            grad_gb.extend_from_slice(&grad_g[b * self.c_out..(b + 1) * self.c_out]);
            grad_gb.extend_from_slice(&grad_b[b * self.c_out..(b + 1) * self.c_out]);
            let gp = self.mlp.backward(&cache.mlp[b], &grad_gb);
            grad_pooled[b * self.c_in..(b + 1) * self.c_in].copy_from_slice(&gp);
        }
        let grad_y =
            pool_condition_backward(&grad_pooled, &cache.pooled_argmax, self.c_in, cache.y_len, n);
        (grad_x, grad_y)
    }
}

impl<S: Scalar> Parameterized<S> for BFilmLayer<S> {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<S>)) {
        self.mlp.visit_params(&format!("{prefix}mlp."), f);
    }
}

// ---------------------------------------------------------------------------
// TFiLM
// ---------------------------------------------------------------------------

/// Temporal FiLM: pooled condition blocks feed an LSTM in block order, and a
/// linear head on each hidden state emits (gamma_i, beta_i).
#[derive(Debug, Clone)]
pub struct TFilmLayer<S> {
    pub cell: LstmCell<S>,
    pub head: Linear<S>,
    pub blocks: usize,
    pub c_in: usize,
    pub c_out: usize,
}

#[derive(Debug, Clone)]
pub struct TFilmCache<S> {
    x: Activation<S>,
    y_len: usize,
    pooled_argmax: Vec<usize>,
    lstm: Vec<LstmStepCache<S>>,
    hidden_states: Vec<Vec<S>>,
    gammas: Vec<S>,
}

impl<S: Scalar> TFilmLayer<S> {
    pub fn new(
        c_in: usize,
        hidden: usize,
        c_out: usize,
        blocks: usize,
        rng: &mut RandomSource,
    ) -> Self {
        let cell = LstmCell::new(c_in, hidden, rng);
        let mut head = Linear::new(hidden, 2 * c_out, rng);
        bias_gamma_one(&mut head, c_out);
        TFilmLayer {
            cell,
            head,
            blocks,
            c_in,
            c_out,
        }
    }

    pub fn force_identity(&mut self) {
        self.head.w.value.fill(S::ZERO);
        self.head.b.value.data = identity_gamma_beta::<S>(self.c_out);
    }

    pub fn forward(
        &self,
        x: &Activation<S>,
        y: &Activation<S>,
    ) -> Result<(Activation<S>, TFilmCache<S>)> {
        let n = check_blocks(self.blocks, x.len, y.len)?;
        if x.channels != self.c_out || y.channels != self.c_in {
            return Err(Error::Shape(format!(
                "tfilm expects activation {} / condition {} channels, got {} / {}",
                self.c_out, self.c_in, x.channels, y.channels
            )));
        }
        let (pooled, argmax) = pool_condition(y, n);
        let block_inputs: Vec<Vec<S>> = (0..n)
            .map(|b| pooled[b * self.c_in..(b + 1) * self.c_in].to_vec())
            .collect();
        let (hs, lstm_cache) = self.cell.run(&block_inputs);
        let mut gammas = vec![S::ZERO; n * self.c_out];
        let mut betas = vec![S::ZERO; n * self.c_out];
        for (b, h) in hs.iter().enumerate() {
            let gb = self.head.forward(h)?;
            gammas[b * self.c_out..(b + 1) * self.c_out].copy_from_slice(&gb[..self.c_out]);
            betas[b * self.c_out..(b + 1) * self.c_out].copy_from_slice(&gb[self.c_out..]);
        }
        let out = modulate_blocks(x, &gammas, &betas, n);
        Ok((
            out,
            TFilmCache {
                x: x.clone(),
                y_len: y.len,
                pooled_argmax: argmax,
                lstm: lstm_cache,
                hidden_states: hs,
                gammas,
            },
        ))
    }

    /// Returns (grad_x, grad_y).
    pub fn backward(
        &mut self,
        cache: &TFilmCache<S>,
        grad_out: &Activation<S>,
    ) -> (Activation<S>, Activation<S>) {
        let n = self.blocks;
        let (grad_x, grad_g, grad_b) =
            modulate_blocks_backward(&cache.x, &cache.gammas, n, grad_out);
        let mut grad_hs = Vec::with_capacity(n);
        for b in 0..n {
            let mut grad_gb = Vec::with_capacity(2 * self.c_out);
            grad_gb.extend_from_slice(&grad_g[b * self.c_out..(b + 1) * self.c_out]);
            grad_gb.extend_from_slice(&grad_b[b * self.c_out..(b + 1) * self.c_out]);
            grad_hs.push(self.head.backward(&cache.hidden_states[b], &grad_gb));
        }
        let grad_pooled_blocks = self.cell.run_backward(&cache.lstm, &grad_hs);
        let mut grad_pooled = vec![S::ZERO; n * self.c_in];
        for (b, g) in grad_pooled_blocks.iter().enumerate() {
            grad_pooled[b * self.c_in..(b + 1) * self.c_in].copy_from_slice(g);
        }
        let grad_y =
            pool_condition_backward(&grad_pooled, &cache.pooled_argmax, self.c_in, cache.y_len, n);
        (grad_x, grad_y)
    }
}

impl<S: Scalar> Parameterized<S> for TFilmLayer<S> {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<S>)) {
        self.cell.visit_params(&format!("{prefix}cell."), f);
        self.head.visit_params(&format!("{prefix}head."), f);
    }
}
