//! LSTM cell and a bidirectional wrapper over [channels x length]
//! activations. Gates are stored in [i, f, g, o] order.

use crate::error::Result;
use crate::nn::ops::{dot as vec_dot, sigmoid, sum as vec_sum};
use crate::nn::tensor::{Activation, Param, Parameterized};
use crate::nn::Scalar;
use crate::rng::RandomSource;

#[derive(Debug, Clone)]
pub struct LstmCell<S> {
    /// [4H x input]
    pub w_x: Param<S>,
    /// [4H x H]
    pub w_h: Param<S>,
    /// [4H]
    pub b: Param<S>,
    pub hidden: usize,
    pub input: usize,
}

/// Per-step values needed by backward.
#[derive(Debug, Clone)]
pub struct LstmStepCache<S> {
    pub x: Vec<S>,
    pub h_prev: Vec<S>,
    pub c_prev: Vec<S>,
    pub gates: Vec<S>, // post-activation [i f g o], 4H
    pub c: Vec<S>,
    pub tanh_c: Vec<S>,
}

impl<S: Scalar> LstmCell<S> {
    pub fn new(input: usize, hidden: usize, rng: &mut RandomSource) -> Self {
        LstmCell {
            w_x: Param::uniform_fan_in(&[4 * hidden, input], input, rng),
            w_h: Param::uniform_fan_in(&[4 * hidden, hidden], hidden, rng),
            b: Param::zeros(&[4 * hidden]),
            hidden,
            input,
        }
    }

    pub fn step(&self, x: &[S], h_prev: &[S], c_prev: &[S]) -> (Vec<S>, Vec<S>, LstmStepCache<S>) {
        let hh = self.hidden;
        let mut z = self.b.value.data.clone();
        for (r, zr) in z.iter_mut().enumerate() {
            let wx = &self.w_x.value.data[r * self.input..(r + 1) * self.input];
            let mut acc = S::ZERO;
            for (&w, &v) in wx.iter().zip(x) {
                acc += w * v;
            }
            let wh = &self.w_h.value.data[r * hh..(r + 1) * hh];
            for (&w, &v) in wh.iter().zip(h_prev) {
                acc += w * v;
            }
            *zr += acc;
        }
        let mut gates = vec![S::ZERO; 4 * hh];
        for j in 0..hh {
            gates[j] = sigmoid(z[j]); // i
            gates[hh + j] = sigmoid(z[hh + j]); // f
            gates[2 * hh + j] = z[2 * hh + j].tanh(); // g
            gates[3 * hh + j] = sigmoid(z[3 * hh + j]); // o
        }
        let mut c = vec![S::ZERO; hh];
        let mut tanh_c = vec![S::ZERO; hh];
        let mut h = vec![S::ZERO; hh];
        for j in 0..hh {
            c[j] = gates[hh + j] * c_prev[j] + gates[j] * gates[2 * hh + j];
            tanh_c[j] = c[j].tanh();
            h[j] = gates[3 * hh + j] * tanh_c[j];
        }
        let cache = LstmStepCache {
            x: x.to_vec(),
            h_prev: h_prev.to_vec(),
            c_prev: c_prev.to_vec(),
            gates,
            c: c.clone(),
            tanh_c: tanh_c.clone(),
        };
        (h, c, cache)
    }

    /// One BPTT step. `grad_h`/`grad_c` carry the incoming gradients for this
    /// step's outputs; returns (grad_x, grad_h_prev, grad_c_prev).
    pub fn step_backward(
        &mut self,
        cache: &LstmStepCache<S>,
        grad_h: &[S],
        grad_c: &[S],
    ) -> (Vec<S>, Vec<S>, Vec<S>) {
        let hh = self.hidden;
        let g = &cache.gates;
        let mut dz = vec![S::ZERO; 4 * hh];
        let mut grad_c_prev = vec![S::ZERO; hh];
        for j in 0..hh {
            let i = g[j];
            let fgate = g[hh + j];
            let gg = g[2 * hh + j];
            let o = g[3 * hh + j];
            let tc = cache.tanh_c[j];
            let dh = grad_h[j];
            let dc = grad_c[j] + dh * o * (S::ONE - tc * tc);
            let d_o = dh * tc;
            let d_i = dc * gg;
            let d_g = dc * i;
            let d_f = dc * cache.c_prev[j];
            grad_c_prev[j] = dc * fgate;
            dz[j] = d_i * i * (S::ONE - i);
            dz[hh + j] = d_f * fgate * (S::ONE - fgate);
            dz[2 * hh + j] = d_g * (S::ONE - gg * gg);
            dz[3 * hh + j] = d_o * o * (S::ONE - o);
        }
        let mut grad_x = vec![S::ZERO; self.input];
        let mut grad_h_prev = vec![S::ZERO; hh];
        for (r, &dzr) in dz.iter().enumerate() {
            self.b.grad.data[r] += dzr;
            let wx = &self.w_x.value.data[r * self.input..(r + 1) * self.input];
            let gwx = &mut self.w_x.grad.data[r * self.input..(r + 1) * self.input];
            for j in 0..self.input {
                gwx[j] += dzr * cache.x[j];
                grad_x[j] += dzr * wx[j];
            }
            let wh = &self.w_h.value.data[r * hh..(r + 1) * hh];
            let gwh = &mut self.w_h.grad.data[r * hh..(r + 1) * hh];
            for j in 0..hh {
                gwh[j] += dzr * cache.h_prev[j];
                grad_h_prev[j] += dzr * wh[j];
            }
        }
        (grad_x, grad_h_prev, grad_c_prev)
    }

    /// Run over a sequence of input vectors, zero initial state.
    pub fn run(&self, xs: &[Vec<S>]) -> (Vec<Vec<S>>, Vec<LstmStepCache<S>>) {
        let mut h = vec![S::ZERO; self.hidden];
        let mut c = vec![S::ZERO; self.hidden];
        let mut outs = Vec::with_capacity(xs.len());
        let mut caches = Vec::with_capacity(xs.len());
        for x in xs {
            let (h2, c2, cache) = self.step(x, &h, &c);
            outs.push(h2.clone());
            caches.push(cache);
            h = h2;
            c = c2;
        }
        (outs, caches)
    }

    /// BPTT over `run`'s caches given per-step output gradients.
    /// Returns per-step input gradients.
    pub fn run_backward(
        &mut self,
        caches: &[LstmStepCache<S>],
        grad_outs: &[Vec<S>],
    ) -> Vec<Vec<S>> {
        let hh = self.hidden;
        let mut grad_h_next = vec![S::ZERO; hh];
        let mut grad_c_next = vec![S::ZERO; hh];
        let mut grad_xs = vec![Vec::new(); caches.len()];
        for t in (0..caches.len()).rev() {
            let mut gh = grad_outs[t].clone();
            for (a, &b) in gh.iter_mut().zip(&grad_h_next) {
                *a += b;
            }
            let (gx, ghp, gcp) = self.step_backward(&caches[t], &gh, &grad_c_next);
            grad_xs[t] = gx;
            grad_h_next = ghp;
            grad_c_next = gcp;
        }
        grad_xs
    }
}

impl<S: Scalar> Parameterized<S> for LstmCell<S> {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<S>)) {
        f(&format!("{prefix}w_x"), &mut self.w_x);
        f(&format!("{prefix}w_h"), &mut self.w_h);
        f(&format!("{prefix}b"), &mut self.b);
    }
}

/// Bidirectional LSTM over an activation's time axis; output channels are
/// the concatenation [forward H; backward H].
///
/// The input projection W_x X is batched over the whole sequence (it
/// vectorizes like a kernel-1 convolution); only the recurrent half runs
/// step by step. Flat caches avoid per-step allocation.
#[derive(Debug, Clone)]
pub struct BiLstm<S> {
    pub fwd: LstmCell<S>,
    pub bwd: LstmCell<S>,
}

/// Flat per-direction sequence cache: gates, cell states and tanh(c) for
/// every step, plus the hidden states shifted by one.
#[derive(Debug, Clone)]
struct DirCache<S> {
    gates: Vec<S>,  // [L x 4H], step-major
    c: Vec<S>,      // [L x H]
    tanh_c: Vec<S>, // [L x H]
    h_prev: Vec<S>, // [L x H]
}

#[derive(Debug, Clone)]
pub struct BiLstmCache<S> {
    x: Activation<S>,
    fwd: DirCache<S>,
    bwd: DirCache<S>,
}

impl<S: Scalar> BiLstm<S> {
    pub fn new(input: usize, hidden: usize, rng: &mut RandomSource) -> Self {
        BiLstm {
            fwd: LstmCell::new(input, hidden, rng),
            bwd: LstmCell::new(input, hidden, rng),
        }
    }

    pub fn out_channels(&self) -> usize {
        2 * self.fwd.hidden
    }

    /// z[r][t] = b[r] + sum_c W_x[r][c] x[c][t], batched over t.
    fn input_projection(cell: &LstmCell<S>, x: &Activation<S>) -> Vec<S> {
        let rows = 4 * cell.hidden;
        let len = x.len;
        let mut z = vec![S::ZERO; rows * len];
        for r in 0..rows {
            let zr = &mut z[r * len..(r + 1) * len];
            zr.iter_mut().for_each(|v| *v = cell.b.value.data[r]);
            for c in 0..cell.input {
                let wv = cell.w_x.value.data[r * cell.input + c];
                for (o, &xv) in zr.iter_mut().zip(x.row(c)) {
                    *o += wv * xv;
                }
            }
        }
        z
    }

    /// One direction; `order` yields time indices in scan order.
    fn run_direction(
        cell: &LstmCell<S>,
        x: &Activation<S>,
        z_in: &[S],
        order: impl Iterator<Item = usize>,
        out: &mut Activation<S>,
        out_row_offset: usize,
    ) -> DirCache<S> {
        let hh = cell.hidden;
        let len = x.len;
        let mut cache = DirCache {
            gates: vec![S::ZERO; len * 4 * hh],
            c: vec![S::ZERO; len * hh],
            tanh_c: vec![S::ZERO; len * hh],
            h_prev: vec![S::ZERO; len * hh],
        };
        let mut h = vec![S::ZERO; hh];
        let mut c = vec![S::ZERO; hh];
        let mut z = vec![S::ZERO; 4 * hh];
        for (step, t) in order.enumerate() {
            for (r, zv) in z.iter_mut().enumerate() {
                let wh = &cell.w_h.value.data[r * hh..(r + 1) * hh];
                let mut acc = z_in[r * len + t];
                for (&w, &hv) in wh.iter().zip(&h) {
                    acc += w * hv;
                }
                *zv = acc;
            }
            cache.h_prev[step * hh..(step + 1) * hh].copy_from_slice(&h);
            let g = &mut cache.gates[step * 4 * hh..(step + 1) * 4 * hh];
            for j in 0..hh {
                g[j] = sigmoid(z[j]);
                g[hh + j] = sigmoid(z[hh + j]);
                g[2 * hh + j] = z[2 * hh + j].tanh();
                g[3 * hh + j] = sigmoid(z[3 * hh + j]);
            }
            for j in 0..hh {
                c[j] = g[hh + j] * c[j] + g[j] * g[2 * hh + j];
                let tc = c[j].tanh();
                cache.c[step * hh + j] = c[j];
                cache.tanh_c[step * hh + j] = tc;
                h[j] = g[3 * hh + j] * tc;
                out.set(out_row_offset + j, t, h[j]);
            }
        }
        cache
    }

    pub fn forward(&self, x: &Activation<S>) -> Result<(Activation<S>, BiLstmCache<S>)> {
        let hh = self.fwd.hidden;
        let len = x.len;
        let mut out = Activation::zeros(2 * hh, len);
        let zf = Self::input_projection(&self.fwd, x);
        let fwd = Self::run_direction(&self.fwd, x, &zf, 0..len, &mut out, 0);
        let zb = Self::input_projection(&self.bwd, x);
        let bwd = Self::run_direction(&self.bwd, x, &zb, (0..len).rev(), &mut out, hh);
        Ok((
            out,
            BiLstmCache {
                x: x.clone(),
                fwd,
                bwd,
            },
        ))
    }

    /// BPTT for one direction; accumulates parameter gradients and adds the
    /// input gradient into `grad_x`. Only the recurrence runs step by step;
    /// all parameter gradients are batched matrix products over the
    /// sequence.
    #[allow(clippy::too_many_arguments)]
    fn backward_direction(
        cell: &mut LstmCell<S>,
        cache: &DirCache<S>,
        x: &Activation<S>,
        grad_out: &Activation<S>,
        order: &[usize],
        row_offset: usize,
        grad_x: &mut Activation<S>,
    ) {
        let hh = cell.hidden;
        let len = x.len;
        // dz transposed to row-major [4H x L], step order
        let mut dz_t = vec![S::ZERO; 4 * hh * len];
        let mut grad_h_next = vec![S::ZERO; hh];
        let mut grad_c_next = vec![S::ZERO; hh];
        let mut dz = vec![S::ZERO; 4 * hh];
        for step in (0..len).rev() {
            let t = order[step];
            let g = &cache.gates[step * 4 * hh..(step + 1) * 4 * hh];
            for j in 0..hh {
                let i = g[j];
                let fgate = g[hh + j];
                let gg = g[2 * hh + j];
                let o = g[3 * hh + j];
                let tc = cache.tanh_c[step * hh + j];
                let dh = grad_out.get(row_offset + j, t) + grad_h_next[j];
                let dc = grad_c_next[j] + dh * o * (S::ONE - tc * tc);
                let c_prev = if step > 0 {
                    cache.c[(step - 1) * hh + j]
                } else {
                    S::ZERO
                };
                let d_o = dh * tc;
                let d_i = dc * gg;
                let d_g = dc * i;
                let d_f = dc * c_prev;
                grad_c_next[j] = dc * fgate;
                dz[j] = d_i * i * (S::ONE - i);
                dz[hh + j] = d_f * fgate * (S::ONE - fgate);
                dz[2 * hh + j] = d_g * (S::ONE - gg * gg);
                dz[3 * hh + j] = d_o * o * (S::ONE - o);
            }
            // dh_prev = W_h^T dz (the recurrence, stays sequential)
            grad_h_next.iter_mut().for_each(|v| *v = S::ZERO);
            for (r, &dzr) in dz.iter().enumerate() {
                dz_t[r * len + step] = dzr;
                let wh = &cell.w_h.value.data[r * hh..(r + 1) * hh];
                for (gh, &w) in grad_h_next.iter_mut().zip(wh) {
                    *gh += dzr * w;
                }
            }
        }

        // h_prev transposed to [H x L], step order
        let mut hp_t = vec![S::ZERO; hh * len];
        for step in 0..len {
            for j in 0..hh {
                hp_t[j * len + step] = cache.h_prev[step * hh + j];
            }
        }
        // x in scan order [C x L]
        let reversed = order.first() == Some(&(len - 1));
        let mut x_scan = x.clone();
        let mut gx_scan = Activation::zeros(cell.input, len);
        if reversed {
            for c in 0..cell.input {
                x_scan.row_mut(c).reverse();
            }
        }
        for r in 0..4 * hh {
            let dzr = &dz_t[r * len..(r + 1) * len];
            cell.b.grad.data[r] += vec_sum(dzr);
            let gwh = &mut cell.w_h.grad.data[r * hh..(r + 1) * hh];
            for (j, gw) in gwh.iter_mut().enumerate() {
                *gw += vec_dot(dzr, &hp_t[j * len..(j + 1) * len]);
            }
            let wx = &cell.w_x.value.data[r * cell.input..(r + 1) * cell.input];
            let gwx = &mut cell.w_x.grad.data[r * cell.input..(r + 1) * cell.input];
            for c in 0..cell.input {
                gwx[c] += vec_dot(dzr, x_scan.row(c));
                let gxr = gx_scan.row_mut(c);
                let wv = wx[c];
                for (o, &dv) in gxr.iter_mut().zip(dzr) {
                    *o += wv * dv;
                }
            }
        }
        for c in 0..cell.input {
            let src = gx_scan.row(c);
            let dst = grad_x.row_mut(c);
            if reversed {
                for (j, &v) in src.iter().enumerate() {
                    dst[len - 1 - j] += v;
                }
            } else {
                for (o, &v) in dst.iter_mut().zip(src) {
                    *o += v;
                }
            }
        }
    }

    pub fn backward(&mut self, cache: &BiLstmCache<S>, grad_out: &Activation<S>) -> Activation<S> {
        let len = cache.x.len;
        let hh = self.fwd.hidden;
        let mut grad_x = Activation::zeros(self.fwd.input, len);
        let fwd_order: Vec<usize> = (0..len).collect();
        let bwd_order: Vec<usize> = (0..len).rev().collect();
        Self::backward_direction(
            &mut self.fwd,
            &cache.fwd,
            &cache.x,
            grad_out,
            &fwd_order,
            0,
            &mut grad_x,
        );
        Self::backward_direction(
            &mut self.bwd,
            &cache.bwd,
            &cache.x,
            grad_out,
            &bwd_order,
            hh,
            &mut grad_x,
        );
        grad_x
    }
}

impl<S: Scalar> Parameterized<S> for BiLstm<S> {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<S>)) {
        self.fwd.visit_params(&format!("{prefix}fwd."), f);
        self.bwd.visit_params(&format!("{prefix}bwd."), f);
    }
}
