//! Variance-preserving cosine-schedule diffusion: forward noising, the
//! continuous-time L2 noise loss with joint condition dropping, and an
//! ancestral DDPM sampler with classifier-free guidance.
//!
//! Continuous schedule: alpha_bar(t) = cos^2(pi t / 2), sigma^2 = 1 -
//! alpha_bar, with the endpoints pinned exactly so t=0 keeps the data and
//! t=1 is pure noise.

use crate::error::{Error, Result};
use crate::nn::Scalar;
use crate::rng::RandomSource;
pub use crate::unet::CondInput;
use crate::unet::UNet;

/// sqrt(alpha_bar(t)) with exact endpoints.
pub fn sqrt_alpha_bar(t: f64) -> Result<f64> {
    check_time(t)?;
    if t == 0.0 {
        Ok(1.0)
    } else if t == 1.0 {
        Ok(0.0)
    } else {
        Ok((std::f64::consts::FRAC_PI_2 * t).cos())
    }
}

/// Signal-variance share alpha_bar(t) = cos^2(pi t / 2).
pub fn alpha_bar(t: f64) -> Result<f64> {
    let c = sqrt_alpha_bar(t)?;
    Ok(c * c)
}

/// Noise variance 1 - alpha_bar(t), exact by construction, so that
/// alpha_bar(t) + sigma_sq(t) == 1 holds bit-exactly for every t.
pub fn sigma_sq(t: f64) -> Result<f64> {
    Ok(1.0 - alpha_bar(t)?)
}

/// (sqrt(alpha_bar), sigma) for t in [0, 1].
pub fn schedule(t: f64) -> Result<(f64, f64)> {
    Ok((sqrt_alpha_bar(t)?, sigma_sq(t)?.sqrt()))
}

fn check_time(t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Domain(format!("diffusion time {t} outside [0, 1]")));
    }
    Ok(())
}

/// Forward noising: x_t = sqrt(alpha_bar) x0 + sigma eps with eps ~ N(0, I).
/// Returns (x_t, eps).
pub fn noise<S: Scalar>(x0: &[S], t: f64, rng: &mut RandomSource) -> Result<(Vec<S>, Vec<S>)> {
    let (a, s) = schedule(t)?;
    let a = S::from_f64(a);
    let s = S::from_f64(s);
    let eps: Vec<S> = rng.normal_vec(x0.len());
    let xt = x0
        .iter()
        .zip(&eps)
        .map(|(&x, &e)| a * x + s * e)
        .collect();
    Ok((xt, eps))
}

/// Classifier-free guidance: uncond + w * (cond - uncond).
pub fn cfg_combine<S: Scalar>(eps_cond: &[S], eps_uncond: &[S], w: f64) -> Result<Vec<S>> {
    if eps_cond.len() != eps_uncond.len() {
        return Err(Error::Shape(format!(
            "guidance inputs differ in length: {} vs {}",
            eps_cond.len(),
            eps_uncond.len()
        )));
    }
    let w = S::from_f64(w);
    Ok(eps_uncond
        .iter()
        .zip(eps_cond)
        .map(|(&u, &c)| u + w * (c - u))
        .collect())
}

/// Anything the diffusion process can train and sample. The trait keeps the
/// process code independent of the network so tests can substitute oracles
/// and spies.
pub trait DiffusionModel<S: Scalar> {
    fn sample_len(&self) -> usize;

    /// Predict the noise in `x` at diffusion time `t`.
    fn predict_eps(&self, x: &[S], t: f64, cond: &CondInput<'_, S>) -> Result<Vec<S>>;

    /// Forward + backward for one item: predicts eps_hat, accumulates
    /// parameter gradients of `weight * mean((eps_hat - eps)^2)`, and
    /// returns the unweighted item loss.
    fn train_item(
        &mut self,
        x_t: &[S],
        t: f64,
        cond: &CondInput<'_, S>,
        eps: &[S],
        weight: f64,
    ) -> Result<f64>;
}

impl<S: Scalar> DiffusionModel<S> for UNet<S> {
    fn sample_len(&self) -> usize {
        self.cfg.sample_len
    }

    fn predict_eps(&self, x: &[S], t: f64, cond: &CondInput<'_, S>) -> Result<Vec<S>> {
        self.predict(x, t, cond)
    }

    fn train_item(
        &mut self,
        x_t: &[S],
        t: f64,
        cond: &CondInput<'_, S>,
        eps: &[S],
        weight: f64,
    ) -> Result<f64> {
        let (eps_hat, cache) = self.forward(x_t, t, cond)?;
        let n = eps_hat.len() as f64;
        let mut loss = 0.0;
        let scale = S::from_f64(2.0 * weight / n);
        let mut grad = Vec::with_capacity(eps_hat.len());
        for (&p, &e) in eps_hat.iter().zip(eps) {
            let d = p - e;
            loss += d.to_f64() * d.to_f64();
            grad.push(scale * d);
        }
        self.backward(&cache, &grad);
        Ok(loss / n)
    }
}

/// Sampling-time knobs.
#[derive(Debug, Clone, Copy)]
pub struct SamplerConfig {
    pub steps: usize,
    /// Guidance weight w; 1 disables the extra unconditional pass.
    pub guidance: f64,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            steps: 50,
            guidance: 2.0,
            seed: 0,
        }
    }
}

/// Training-time knobs.
#[derive(Debug, Clone, Copy)]
pub struct TrainConfig {
    /// Probability of replacing (class, T) jointly by the null condition.
    pub cond_drop_p: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            cond_drop_p: 0.1,
            epochs: 100,
            batch_size: 16,
            lr: 1e-3,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.cond_drop_p) {
            return Err(Error::Domain(format!(
                "cond_drop_p {} outside [0, 1]",
                self.cond_drop_p
            )));
        }
        if self.batch_size < 1 {
            return Err(Error::Domain("batch_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// One training item: clean audio, class id, temporal feature frames.
pub struct TrainItem<'a, S> {
    pub x0: &'a [S],
    pub class: usize,
    pub temporal: &'a [S],
}

/// Result of one gradient-accumulation step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub loss: f64,
    /// Per-item flags: true when (class, T) were jointly replaced by null.
    pub dropped: Vec<bool>,
}

/// Gradient step over one batch: per item draw t ~ U[0,1], noise x0, drop
/// the conditions jointly with probability cond_drop_p, and accumulate the
/// gradient of the mean per-item noise loss.
///
/// Draw order per item: drop decision, then t, then the noise vector.
pub fn training_step<S: Scalar, M: DiffusionModel<S>>(
    batch: &[TrainItem<'_, S>],
    model: &mut M,
    cfg: &TrainConfig,
    rng: &mut RandomSource,
) -> Result<StepOutcome> {
    cfg.validate()?;
    if batch.is_empty() {
        return Err(Error::Domain("empty batch".into()));
    }
    let weight = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    let mut dropped = Vec::with_capacity(batch.len());
    for item in batch {
        let drop = rng.uniform() < cfg.cond_drop_p;
        dropped.push(drop);
        let t = rng.uniform();
        let (x_t, eps) = noise(item.x0, t, rng)?;
        let cond = if drop {
            CondInput::null()
        } else {
            CondInput::new(Some(item.class), Some(item.temporal))
        };
        let loss = model.train_item(&x_t, t, &cond, &eps, weight)?;
        if !loss.is_finite() {
            return Err(Error::Numeric(format!(
                "training loss became non-finite (class {}, t {t:.4})",
                item.class
            )));
        }
        total += loss;
    }
    Ok(StepOutcome {
        loss: total * weight,
        dropped,
    })
}

/// Discretization of the continuous cosine schedule onto a uniform grid of
/// `steps` points. The per-step noise ratio is clipped at 0.999, which keeps
/// the final step (alpha_bar(1) = 0) finite; alpha_bar is then rebuilt as the
/// running product so the sampler is self-consistent.
#[derive(Debug, Clone)]
pub struct DiscreteSchedule {
    /// times[i] = i / steps, i in 0..=steps
    pub times: Vec<f64>,
    /// beta[i] for step i in 1..=steps (index 0 unused)
    pub beta: Vec<f64>,
    /// cumulative product of (1 - beta) up to step i
    pub alpha_bar: Vec<f64>,
}

impl DiscreteSchedule {
    pub fn new(steps: usize) -> Result<Self> {
        if steps < 1 {
            return Err(Error::Domain("sampler steps must be >= 1".into()));
        }
        let times: Vec<f64> = (0..=steps).map(|i| i as f64 / steps as f64).collect();
        let mut beta = vec![0.0; steps + 1];
        let mut abar = vec![1.0; steps + 1];
        let mut prev_raw = 1.0;
        let mut running = 1.0;
        for i in 1..=steps {
            let raw = alpha_bar(times[i])?;
            beta[i] = (1.0 - raw / prev_raw).min(0.999);
            prev_raw = raw;
            running *= 1.0 - beta[i];
            abar[i] = running;
        }
        Ok(DiscreteSchedule {
            times,
            beta,
            alpha_bar: abar,
        })
    }

    pub fn steps(&self) -> usize {
        self.beta.len() - 1
    }

    /// Coefficients of the ancestral update at step i (from t_i to t_{i-1}):
    /// x <- mean_x * x - mean_eps * eps_hat (+ sigma_z * z when i > 1).
    pub fn step_coefficients(&self, i: usize) -> (f64, f64, f64) {
        let beta = self.beta[i];
        let alpha = 1.0 - beta;
        let abar = self.alpha_bar[i];
        let abar_prev = self.alpha_bar[i - 1];
        let inv_sqrt_alpha = 1.0 / alpha.sqrt();
        let mean_x = inv_sqrt_alpha;
        let mean_eps = inv_sqrt_alpha * beta / (1.0 - abar).sqrt();
        let sigma_z = (beta * (1.0 - abar_prev) / (1.0 - abar)).sqrt();
        (mean_x, mean_eps, sigma_z)
    }
}

/// Ancestral DDPM sampling from pure noise at t=1 down to t=0 on a uniform
/// grid, combining conditional and unconditional predictions with
/// classifier-free guidance at every step.
///
/// Noise draw order: the initial state, then one vector per step except the
/// last. Output is the raw t=0 estimate; clamping happens only on WAV write.
pub fn sample<S: Scalar, M: DiffusionModel<S>>(
    model: &M,
    cond: &CondInput<'_, S>,
    cfg: &SamplerConfig,
) -> Result<Vec<S>> {
    let schedule = DiscreteSchedule::new(cfg.steps)?;
    let mut rng = RandomSource::from_seed(cfg.seed);
    sample_with_rng(model, cond, &schedule, cfg.guidance, &mut rng)
}

pub fn sample_with_rng<S: Scalar, M: DiffusionModel<S>>(
    model: &M,
    cond: &CondInput<'_, S>,
    schedule: &DiscreteSchedule,
    guidance: f64,
    rng: &mut RandomSource,
) -> Result<Vec<S>> {
    let len = model.sample_len();
    let mut x: Vec<S> = rng.normal_vec(len);
    let uncond = CondInput::null();
    for i in (1..=schedule.steps()).rev() {
        let t = schedule.times[i];
        let eps_c = model.predict_eps(&x, t, cond)?;
        let eps = if guidance == 1.0 {
            eps_c
        } else {
            let eps_u = model.predict_eps(&x, t, &uncond)?;
            cfg_combine(&eps_c, &eps_u, guidance)?
        };
        let (mean_x, mean_eps, sigma_z) = schedule.step_coefficients(i);
        let cx = S::from_f64(mean_x);
        let ce = S::from_f64(mean_eps);
        if i > 1 {
            let cz = S::from_f64(sigma_z);
            let z: Vec<S> = rng.normal_vec(len);
            for ((xv, &e), &zv) in x.iter_mut().zip(&eps).zip(&z) {
                *xv = cx * *xv - ce * e + cz * zv;
            }
        } else {
            for (xv, &e) in x.iter_mut().zip(&eps) {
                *xv = cx * *xv - ce * e;
            }
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite sample state at step {i} (t={t:.4})"
            )));
        }
    }
    Ok(x)
}
