//! Adam optimizer over a module's named parameters. Moment buffers are keyed
//! by parameter name so they can ride along in checkpoints for exact resume.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::nn::checkpoint::CheckpointEntry;
use crate::nn::tensor::{for_each_param, Parameterized};
use crate::nn::Scalar;

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Adam<S> {
    pub cfg: AdamConfig,
    pub step_count: u64,
    m: BTreeMap<String, Vec<S>>,
    v: BTreeMap<String, Vec<S>>,
}

impl<S: Scalar> Adam<S> {
    pub fn new(cfg: AdamConfig) -> Self {
        Adam {
            cfg,
            step_count: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    /// One update using the gradients currently in the model's buffers.
    pub fn step<M: Parameterized<S> + ?Sized>(&mut self, model: &mut M) {
        self.step_count += 1;
        let t = self.step_count as f64;
        let bc1 = 1.0 - self.cfg.beta1.powi(t as i32);
        let bc2 = 1.0 - self.cfg.beta2.powi(t as i32);
        let lr = S::from_f64(self.cfg.lr);
        let b1 = S::from_f64(self.cfg.beta1);
        let b2 = S::from_f64(self.cfg.beta2);
        let one_m_b1 = S::from_f64(1.0 - self.cfg.beta1);
        let one_m_b2 = S::from_f64(1.0 - self.cfg.beta2);
        let inv_bc1 = S::from_f64(1.0 / bc1);
        let inv_bc2 = S::from_f64(1.0 / bc2);
        let eps = S::from_f64(self.cfg.eps);
        let m = &mut self.m;
        let v = &mut self.v;
        for_each_param(model, |name, p| {
            let mbuf = m
                .entry(name.to_string())
                .or_insert_with(|| vec![S::ZERO; p.len()]);
            let vbuf = v
                .entry(name.to_string())
                .or_insert_with(|| vec![S::ZERO; p.len()]);
            for ((pv, &g), (mv, vv)) in p
                .value
                .data
                .iter_mut()
                .zip(&p.grad.data)
                .zip(mbuf.iter_mut().zip(vbuf.iter_mut()))
            {
                *mv = b1 * *mv + one_m_b1 * g;
                *vv = b2 * *vv + one_m_b2 * g * g;
                let mhat = *mv * inv_bc1;
                let vhat = *vv * inv_bc2;
                *pv -= lr * mhat / (vhat.sqrt() + eps);
            }
        });
    }

    /// Serialize optimizer state as checkpoint entries under the `opt.` prefix.
    pub fn export_entries(&self) -> Vec<CheckpointEntry> {
        let mut out = Vec::new();
        out.push(CheckpointEntry::from_scalars(
            "opt.step",
            &[1],
            &[S::from_f64(self.step_count as f64)],
        ));
        for (name, buf) in &self.m {
            out.push(CheckpointEntry::from_scalars(
                &format!("opt.m.{name}"),
                &[buf.len()],
                buf,
            ));
        }
        for (name, buf) in &self.v {
            out.push(CheckpointEntry::from_scalars(
                &format!("opt.v.{name}"),
                &[buf.len()],
                buf,
            ));
        }
        out
    }

    /// Restore state exported by `export_entries`.
    pub fn import_entries(&mut self, entries: &[CheckpointEntry]) -> Result<()> {
        self.m.clear();
        self.v.clear();
        for e in entries {
            if e.name == "opt.step" {
                let vals: Vec<S> = e.to_scalars()?;
                self.step_count = vals
                    .first()
                    .map(|v| v.to_f64() as u64)
                    .ok_or_else(|| Error::Validation("empty opt.step entry".into()))?;
            } else if let Some(name) = e.name.strip_prefix("opt.m.") {
                self.m.insert(name.to_string(), e.to_scalars()?);
            } else if let Some(name) = e.name.strip_prefix("opt.v.") {
                self.v.insert(name.to_string(), e.to_scalars()?);
            }
        }
        Ok(())
    }
}
