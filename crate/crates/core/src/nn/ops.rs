//! Differentiable primitives: 1-D convolution, its transpose, affine layers
//! and an MLP. Each op has an explicit backward that accumulates parameter
//! gradients and returns the input gradient.

use crate::error::{Error, Result};
use crate::nn::tensor::{Activation, Param, Parameterized, Tensor};
use crate::nn::Scalar;
use crate::rng::RandomSource;

#[inline]
pub fn sigmoid<S: Scalar>(x: S) -> S {
    S::ONE / (S::ONE + (-x).exp())
}

/// Pointwise nonlinearity selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActKind {
    Silu,
    Tanh,
    Relu,
    Identity,
}

impl ActKind {
    #[inline]
    pub fn apply<S: Scalar>(self, x: S) -> S {
        match self {
            ActKind::Silu => x * sigmoid(x),
            ActKind::Tanh => x.tanh(),
            ActKind::Relu => x.maximum(S::ZERO),
            ActKind::Identity => x,
        }
    }

    /// Derivative as a function of the pre-activation value.
    #[inline]
    pub fn deriv<S: Scalar>(self, pre: S) -> S {
        match self {
            ActKind::Silu => {
                let s = sigmoid(pre);
                s * (S::ONE + pre * (S::ONE - s))
            }
            ActKind::Tanh => {
                let t = pre.tanh();
                S::ONE - t * t
            }
            ActKind::Relu => {
                if pre > S::ZERO {
                    S::ONE
                } else {
                    S::ZERO
                }
            }
            ActKind::Identity => S::ONE,
        }
    }
}

pub fn apply_act<S: Scalar>(x: &Activation<S>, kind: ActKind) -> Activation<S> {
    let data = x.data.iter().map(|&v| kind.apply(v)).collect();
    Activation::from_flat(x.channels, x.len, data)
}

/// grad wrt pre-activation, given the cached pre-activation values.
pub fn act_backward<S: Scalar>(
    pre: &Activation<S>,
    grad_out: &Activation<S>,
    kind: ActKind,
) -> Activation<S> {
    let data = pre
        .data
        .iter()
        .zip(&grad_out.data)
        .map(|(&p, &g)| g * kind.deriv(p))
        .collect();
    Activation::from_flat(pre.channels, pre.len, data)
}

fn pad_rows<S: Scalar>(x: &Activation<S>, padding: usize) -> Activation<S> {
    if padding == 0 {
        return x.clone();
    }
    let lp = x.len + 2 * padding;
    let mut out = Activation::zeros(x.channels, lp);
    for c in 0..x.channels {
        out.row_mut(c)[padding..padding + x.len].copy_from_slice(x.row(c));
    }
    out
}

#[inline]
fn axpy<S: Scalar>(acc: &mut [S], x: &[S], a: S) {
    for (o, &v) in acc.iter_mut().zip(x) {
        *o += a * v;
    }
}

/// Dot product over eight independent accumulator lanes; the summation
/// order is fixed, so results are deterministic.
#[inline]
pub(crate) fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [S::ZERO; 8];
    let n = a.len() - a.len() % 8;
    for (ca, cb) in a[..n].chunks_exact(8).zip(b[..n].chunks_exact(8)) {
        for l in 0..8 {
            acc[l] += ca[l] * cb[l];
        }
    }
    let mut tail = S::ZERO;
    for (&x, &y) in a[n..].iter().zip(&b[n..]) {
        tail += x * y;
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

#[inline]
pub(crate) fn sum<S: Scalar>(a: &[S]) -> S {
    let mut acc = [S::ZERO; 8];
    let n = a.len() - a.len() % 8;
    for ca in a[..n].chunks_exact(8) {
        for l in 0..8 {
            acc[l] += ca[l];
        }
    }
    let mut tail = S::ZERO;
    for &x in &a[n..] {
        tail += x;
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

/// Polyphase views of a strided signal: phase r holds x[j*stride + r].
/// Turns strided gathers/scatters into contiguous slices, which is what
/// keeps the conv inner loops vectorizable.
struct Phases<S> {
    stride: usize,
    channels: usize,
    /// per phase: [channels x phase_len], row-major
    data: Vec<Vec<S>>,
    lens: Vec<usize>,
}

impl<S: Scalar> Phases<S> {
    fn split(x: &Activation<S>, stride: usize) -> Self {
        let mut data = Vec::with_capacity(stride);
        for r in 0..stride {
            let len = (x.len + stride - 1 - r) / stride;
            let mut buf = vec![S::ZERO; x.channels * len];
            for c in 0..x.channels {
                let row = x.row(c);
                let out = &mut buf[c * len..(c + 1) * len];
                for (j, o) in out.iter_mut().enumerate() {
                    *o = row[j * stride + r];
                }
            }
            data.push(buf);
        }
        let lens = (0..stride)
            .map(|r| (x.len + stride - 1 - r) / stride)
            .collect();
        Phases {
            stride,
            channels: x.channels,
            data,
            lens,
        }
    }

    fn zeros(channels: usize, total_len: usize, stride: usize) -> Self {
        let lens: Vec<usize> = (0..stride)
            .map(|r| (total_len + stride - 1 - r) / stride)
            .collect();
        let data = lens.iter().map(|&l| vec![S::ZERO; channels * l]).collect();
        Phases {
            stride,
            channels,
            data,
            lens,
        }
    }

    fn row(&self, r: usize, c: usize) -> &[S] {
        let l = self.lens[r];
        &self.data[r][c * l..(c + 1) * l]
    }

    fn row_mut(&mut self, r: usize, c: usize) -> &mut [S] {
        let l = self.lens[r];
        &mut self.data[r][c * l..(c + 1) * l]
    }

    /// Interleave phases back into a contiguous signal of `total_len`.
    fn merge(&self, total_len: usize) -> Activation<S> {
        let mut out = Activation::zeros(self.channels, total_len);
        for r in 0..self.stride {
            for c in 0..self.channels {
                let src = self.row(r, c);
                let dst = out.row_mut(c);
                for (j, &v) in src.iter().enumerate() {
                    dst[j * self.stride + r] = v;
                }
            }
        }
        out
    }
}

fn check_conv_shapes<S: Scalar>(x: &Activation<S>, w: &Tensor<S>) -> Result<(usize, usize, usize)> {
    if w.shape.len() != 3 {
        return Err(Error::Shape(format!(
            "conv weight must be [c_out, c_in, k], got {:?}",
            w.shape
        )));
    }
    let (c_out, c_in, k) = (w.shape[0], w.shape[1], w.shape[2]);
    if x.channels != c_in {
        return Err(Error::Shape(format!(
            "conv input has {} channels, weight expects {} (weight {:?}, input [{} x {}])",
            x.channels, c_in, w.shape, x.channels, x.len
        )));
    }
    Ok((c_out, c_in, k))
}

/// Cross-correlation with stride and zero padding.
/// Output length = floor((L + 2*padding - K)/stride) + 1.
pub fn conv1d<S: Scalar>(
    x: &Activation<S>,
    w: &Tensor<S>,
    b: Option<&Tensor<S>>,
    stride: usize,
    padding: usize,
) -> Result<Activation<S>> {
    let (c_out, c_in, k) = check_conv_shapes(x, w)?;
    assert!(stride >= 1);
    let lp = x.len + 2 * padding;
    if lp < k {
        return Err(Error::Shape(format!(
            "kernel {k} does not fit padded input of length {lp}"
        )));
    }
    let lo = (lp - k) / stride + 1;
    let xp = pad_rows(x, padding);
    let phases = if stride > 1 {
        Some(Phases::split(&xp, stride))
    } else {
        None
    };
    let mut out = Activation::zeros(c_out, lo);
    for co in 0..c_out {
        if let Some(b) = b {
            out.row_mut(co).iter_mut().for_each(|v| *v = b.data[co]);
        }
        for ci in 0..c_in {
            let or = &mut out.data[co * lo..(co + 1) * lo];
            for kk in 0..k {
                let wv = w.data[(co * c_in + ci) * k + kk];
                // y[t] = sum_k w_k x[t*s + k]; with k = q*s + r this is a
                // contiguous slice of phase r shifted by q
                match &phases {
                    None => axpy(or, &xp.row(ci)[kk..kk + lo], wv),
                    Some(ph) => {
                        let (q, r) = (kk / stride, kk % stride);
                        axpy(or, &ph.row(r, ci)[q..q + lo], wv);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Backward of `conv1d`. Returns grad wrt x; accumulates into grad_w/grad_b.
pub fn conv1d_backward<S: Scalar>(
    x: &Activation<S>,
    w: &Tensor<S>,
    grad_out: &Activation<S>,
    stride: usize,
    padding: usize,
    grad_w: &mut Tensor<S>,
    grad_b: Option<&mut Tensor<S>>,
) -> Activation<S> {
    let (c_out, c_in, k) = check_conv_shapes(x, w).expect("shapes checked in forward");
    let lo = grad_out.len;
    let xp = pad_rows(x, padding);

    if let Some(gb) = grad_b {
        for co in 0..c_out {
            gb.data[co] += sum(grad_out.row(co));
        }
    }
    let x_phases = if stride > 1 {
        Some(Phases::split(&xp, stride))
    } else {
        None
    };
    let mut gx_phases = Phases::zeros(c_in, xp.len, stride);
    for co in 0..c_out {
        let gr = grad_out.row(co);
        for ci in 0..c_in {
            for kk in 0..k {
                let widx = (co * c_in + ci) * k + kk;
                let wv = w.data[widx];
                let (q, r) = (kk / stride, kk % stride);
                let xslice = match &x_phases {
                    None => &xp.row(ci)[kk..kk + lo],
                    Some(ph) => &ph.row(r, ci)[q..q + lo],
                };
                grad_w.data[widx] += dot(gr, xslice);
                axpy(&mut gx_phases.row_mut(r, ci)[q..q + lo], gr, wv);
            }
        }
    }
    let grad_xp = gx_phases.merge(xp.len);
    // strip padding
    let mut grad_x = Activation::zeros(c_in, x.len);
    for c in 0..c_in {
        grad_x
            .row_mut(c)
            .copy_from_slice(&grad_xp.row(c)[padding..padding + x.len]);
    }
    grad_x
}

/// Transposed convolution: the exact adjoint of `conv1d` with padding 0.
/// Input has `c_out` channels (the weight's first axis); output has `c_in`
/// channels and length (L-1)*stride + K.
pub fn conv1d_transposed<S: Scalar>(
    x: &Activation<S>,
    w: &Tensor<S>,
    stride: usize,
) -> Result<Activation<S>> {
    if w.shape.len() != 3 {
        return Err(Error::Shape(format!(
            "conv weight must be [c_out, c_in, k], got {:?}",
            w.shape
        )));
    }
    let (c_out, c_in, k) = (w.shape[0], w.shape[1], w.shape[2]);
    if x.channels != c_out {
        return Err(Error::Shape(format!(
            "transposed conv input has {} channels, weight expects {} (weight {:?})",
            x.channels, c_out, w.shape
        )));
    }
    assert!(stride >= 1);
    let lo = (x.len - 1) * stride + k;
    // adjoint scatter out[j*s + k] += w x[j] becomes a contiguous axpy into
    // output phase k % s at offset k / s
    let mut out_phases = Phases::zeros(c_in, lo, stride);
    for co in 0..c_out {
        let xr = x.row(co);
        for ci in 0..c_in {
            for kk in 0..k {
                let wv = w.data[(co * c_in + ci) * k + kk];
                let (q, r) = (kk / stride, kk % stride);
                axpy(&mut out_phases.row_mut(r, ci)[q..q + x.len], xr, wv);
            }
        }
    }
    Ok(out_phases.merge(lo))
}

/// Backward of `conv1d_transposed`. Returns grad wrt x.
pub fn conv1d_transposed_backward<S: Scalar>(
    x: &Activation<S>,
    w: &Tensor<S>,
    grad_out: &Activation<S>,
    stride: usize,
    grad_w: &mut Tensor<S>,
) -> Activation<S> {
    let (c_out, c_in, k) = (w.shape[0], w.shape[1], w.shape[2]);
    let g_phases = Phases::split(grad_out, stride);
    let mut grad_x = Activation::zeros(c_out, x.len);
    for co in 0..c_out {
        let xr = x.row(co);
        let gxr = &mut grad_x.data[co * x.len..(co + 1) * x.len];
        for ci in 0..c_in {
            for kk in 0..k {
                let widx = (co * c_in + ci) * k + kk;
                let wv = w.data[widx];
                let (q, r) = (kk / stride, kk % stride);
                let gslice = &g_phases.row(r, ci)[q..q + x.len];
                axpy(gxr, gslice, wv);
                grad_w.data[widx] += dot(xr, gslice);
            }
        }
    }
    grad_x
}

/// Convolution layer with owned parameters.
#[derive(Debug, Clone)]
pub struct Conv1d<S> {
    pub w: Param<S>,
    pub b: Param<S>,
    pub stride: usize,
    pub padding: usize,
}

impl<S: Scalar> Conv1d<S> {
    pub fn new(
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        padding: usize,
        rng: &mut RandomSource,
    ) -> Self {
        Conv1d {
            w: Param::uniform_fan_in(&[c_out, c_in, k], c_in * k, rng),
            b: Param::zeros(&[c_out]),
            stride,
            padding,
        }
    }

    /// All-zero weights and bias; used for output heads that must start as
    /// the zero function.
    pub fn new_zeroed(c_in: usize, c_out: usize, k: usize, stride: usize, padding: usize) -> Self {
        Conv1d {
            w: Param::zeros(&[c_out, c_in, k]),
            b: Param::zeros(&[c_out]),
            stride,
            padding,
        }
    }

    pub fn c_out(&self) -> usize {
        self.w.value.shape[0]
    }

    pub fn forward(&self, x: &Activation<S>) -> Result<Activation<S>> {
        conv1d(x, &self.w.value, Some(&self.b.value), self.stride, self.padding)
    }

    pub fn backward(&mut self, x: &Activation<S>, grad_out: &Activation<S>) -> Activation<S> {
        conv1d_backward(
            x,
            &self.w.value,
            grad_out,
            self.stride,
            self.padding,
            &mut self.w.grad,
            Some(&mut self.b.grad),
        )
    }
}

impl<S: Scalar> Parameterized<S> for Conv1d<S> {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<S>)) {
        f(&format!("{prefix}w"), &mut self.w);
        f(&format!("{prefix}b"), &mut self.b);
    }
}

/// Upsampling transposed-convolution layer. Crops the full transposed output
/// so that out_len == in_len * stride, mirroring the symmetric padding of
/// the strided convolutions on the down path.
#[derive(Debug, Clone)]
pub struct ConvTranspose1d<S> {
    /// Stored as [c_in, c_out, k]: the first axis matches the input.
    pub w: Param<S>,
    pub b: Param<S>,
    pub stride: usize,
    pub crop_left: usize,
    pub crop_right: usize,
}

impl<S: Scalar> ConvTranspose1d<S> {
    pub fn new(c_in: usize, c_out: usize, k: usize, stride: usize, rng: &mut RandomSource) -> Self {
        let crop_left = (k - 1) / 2;
        let total = k
            .checked_sub(1 + crop_left + (stride - 1))
            .unwrap_or_else(|| panic!("kernel {k} too small for stride {stride}"));
        ConvTranspose1d {
            w: Param::uniform_fan_in(&[c_in, c_out, k], c_in * k, rng),
            b: Param::zeros(&[c_out]),
            stride,
            crop_left,
            crop_right: total,
        }
    }

    pub fn c_out(&self) -> usize {
        self.w.value.shape[1]
    }

    pub fn forward(&self, x: &Activation<S>) -> Result<Activation<S>> {
        let full = conv1d_transposed(x, &self.w.value, self.stride)?;
        let lo = full.len - self.crop_left - self.crop_right;
        let c_out = self.c_out();
        let mut out = Activation::zeros(c_out, lo);
        for c in 0..c_out {
            let bias = self.b.value.data[c];
            for (o, &v) in out
                .row_mut(c)
                .iter_mut()
                .zip(&full.row(c)[self.crop_left..self.crop_left + lo])
            {
                *o = v + bias;
            }
        }
        Ok(out)
    }

    pub fn backward(&mut self, x: &Activation<S>, grad_out: &Activation<S>) -> Activation<S> {
        let c_out = self.c_out();
        let full_len = (x.len - 1) * self.stride + self.w.value.shape[2];
        let mut grad_full = Activation::zeros(c_out, full_len);
        for c in 0..c_out {
            let mut s = S::ZERO;
            for &g in grad_out.row(c) {
                s += g;
            }
            self.b.grad.data[c] += s;
            grad_full.row_mut(c)[self.crop_left..self.crop_left + grad_out.len]
                .copy_from_slice(grad_out.row(c));
        }
        conv1d_transposed_backward(x, &self.w.value, &grad_full, self.stride, &mut self.w.grad)
    }
}

impl<S: Scalar> Parameterized<S> for ConvTranspose1d<S> {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<S>)) {
        f(&format!("{prefix}w"), &mut self.w);
        f(&format!("{prefix}b"), &mut self.b);
    }
}

/// Affine layer on flat vectors: y = W v + b, W is [out, in].
#[derive(Debug, Clone)]
pub struct Linear<S> {
    pub w: Param<S>,
    pub b: Param<S>,
}

impl<S: Scalar> Linear<S> {
    pub fn new(d_in: usize, d_out: usize, rng: &mut RandomSource) -> Self {
        Linear {
            w: Param::uniform_fan_in(&[d_out, d_in], d_in, rng),
            b: Param::zeros(&[d_out]),
        }
    }

    pub fn new_zeroed(d_in: usize, d_out: usize) -> Self {
        Linear {
            w: Param::zeros(&[d_out, d_in]),
            b: Param::zeros(&[d_out]),
        }
    }

    pub fn d_in(&self) -> usize {
        self.w.value.shape[1]
    }

    pub fn d_out(&self) -> usize {
        self.w.value.shape[0]
    }

    pub fn forward(&self, v: &[S]) -> Result<Vec<S>> {
        let (d_out, d_in) = (self.d_out(), self.d_in());
        if v.len() != d_in {
            return Err(Error::Shape(format!(
                "linear expects input width {d_in}, got {}",
                v.len()
            )));
        }
        let mut out = self.b.value.data.clone();
        for (o, row) in out.iter_mut().zip(self.w.value.data.chunks_exact(d_in)) {
            let mut acc = S::ZERO;
            for (&wv, &xv) in row.iter().zip(v) {
                acc += wv * xv;
            }
            *o += acc;
        }
        debug_assert_eq!(out.len(), d_out);
        Ok(out)
    }

    pub fn backward(&mut self, v: &[S], grad_out: &[S]) -> Vec<S> {
        let d_in = self.d_in();
        let mut grad_in = vec![S::ZERO; d_in];
        for (i, &g) in grad_out.iter().enumerate() {
            self.b.grad.data[i] += g;
            let wrow = &self.w.value.data[i * d_in..(i + 1) * d_in];
            let grow = &mut self.w.grad.data[i * d_in..(i + 1) * d_in];
            for j in 0..d_in {
                grow[j] += g * v[j];
                grad_in[j] += g * wrow[j];
            }
        }
        grad_in
    }
}

impl<S: Scalar> Parameterized<S> for Linear<S> {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<S>)) {
        f(&format!("{prefix}w"), &mut self.w);
        f(&format!("{prefix}b"), &mut self.b);
    }
}

/// Affine chain with a pointwise nonlinearity between layers; the final
/// layer stays affine.
#[derive(Debug, Clone)]
pub struct Mlp<S> {
    pub layers: Vec<Linear<S>>,
    pub act: ActKind,
}

#[derive(Debug, Clone)]
pub struct MlpCache<S> {
    /// Input to each layer (post-activation of the previous one).
    inputs: Vec<Vec<S>>,
    /// Pre-activation outputs of every non-final layer.
    pre: Vec<Vec<S>>,
}

impl<S: Scalar> Mlp<S> {
    /// `widths` lists every layer width including input and output,
    /// e.g. [d_in, d_hidden, d_out].
    pub fn new(widths: &[usize], act: ActKind, rng: &mut RandomSource) -> Self {
        assert!(widths.len() >= 2, "mlp needs at least input and output widths");
        let layers = widths
            .windows(2)
            .map(|w| Linear::new(w[0], w[1], rng))
            .collect();
        Mlp { layers, act }
    }

    pub fn d_in(&self) -> usize {
        self.layers[0].d_in()
    }

    pub fn d_out(&self) -> usize {
        self.layers.last().unwrap().d_out()
    }

    /// Zero the final layer's weights and pin its bias, fixing the output to
    /// `target` regardless of input. Used to force identity modulation.
    pub fn pin_output(&mut self, target: &[S]) {
        let last = self.layers.last_mut().unwrap();
        last.w.value.fill(S::ZERO);
        assert_eq!(target.len(), last.b.value.len());
        last.b.value.data.copy_from_slice(target);
    }

    pub fn forward(&self, v: &[S]) -> Result<(Vec<S>, MlpCache<S>)> {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len().saturating_sub(1));
        let mut cur = v.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            inputs.push(cur.clone());
            let z = layer.forward(&cur)?;
            if i + 1 < self.layers.len() {
                pre.push(z.clone());
                cur = z.into_iter().map(|x| self.act.apply(x)).collect();
            } else {
                cur = z;
            }
        }
        Ok((cur, MlpCache { inputs, pre }))
    }

    pub fn backward(&mut self, cache: &MlpCache<S>, grad_out: &[S]) -> Vec<S> {
        let mut grad = grad_out.to_vec();
        for i in (0..self.layers.len()).rev() {
            if i + 1 < self.layers.len() {
                let pre = &cache.pre[i];
                for (g, &p) in grad.iter_mut().zip(pre) {
                    *g *= self.act.deriv(p);
                }
            }
            grad = self.layers[i].backward(&cache.inputs[i], &grad);
        }
        grad
    }
}

impl<S: Scalar> Parameterized<S> for Mlp<S> {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<S>)) {
        for (i, layer) in self.layers.iter_mut().enumerate() {
            layer.visit_params(&format!("{prefix}{i}."), f);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn act_from(rows: &[&[f64]]) -> Activation<f64> {
        let channels = rows.len();
        let len = rows[0].len();
        let mut data = Vec::new();
        for r in rows {
            assert_eq!(r.len(), len);
            data.extend_from_slice(r);
        }
        Activation::from_flat(channels, len, data)
    }

    #[test]
    fn conv_identity_kernel() {
        let x = act_from(&[&[1.0, -2.0, 3.0, 0.5]]);
        let w = Tensor::from_vec(&[1, 1, 1], vec![1.0]);
        let y = conv1d(&x, &w, None, 1, 0).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn conv_hand_case() {
        // x=[1,2,3], kernel [1,1], stride 1, no padding -> [3,5]
        let x = act_from(&[&[1.0, 2.0, 3.0]]);
        let w = Tensor::from_vec(&[1, 1, 2], vec![1.0, 1.0]);
        let y = conv1d(&x, &w, None, 1, 0).unwrap();
        assert_eq!(y.data, vec![3.0, 5.0]);
    }

    #[test]
    fn conv_stride_two_halves_even_length() {
        let x = Activation::<f64>::zeros(1, 8);
        let w = Tensor::from_vec(&[1, 1, 2], vec![1.0, 1.0]);
        let y = conv1d(&x, &w, None, 2, 0).unwrap();
        assert_eq!(y.len, 4);
    }

    #[test]
    fn conv_kernel_too_large_is_error() {
        let x = Activation::<f64>::zeros(1, 3);
        let w = Tensor::from_vec(&[1, 1, 5], vec![0.0; 5]);
        assert!(conv1d(&x, &w, None, 1, 0).is_err());
    }

    #[test]
    fn conv_channel_mismatch_names_both_shapes() {
        let x = Activation::<f64>::zeros(2, 8);
        let w = Tensor::from_vec(&[1, 3, 1], vec![0.0; 3]);
        let err = conv1d(&x, &w, None, 1, 0).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains('2') && msg.contains('3'), "{msg}");
    }

    #[test]
    fn transposed_identity_kernel() {
        let x = act_from(&[&[1.0, 2.0, 3.0]]);
        let w = Tensor::from_vec(&[1, 1, 1], vec![1.0]);
        let y = conv1d_transposed(&x, &w, 1).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn transposed_length_formula() {
        let x = Activation::<f64>::zeros(1, 4);
        let w = Tensor::from_vec(&[1, 1, 2], vec![1.0, 1.0]);
        let y = conv1d_transposed(&x, &w, 2).unwrap();
        assert_eq!(y.len, 8);
    }

    #[test]
    fn adjoint_identity_small() {
        // <conv(x), y> == <x, conv_T(y)> with shared weights, padding 0.
        let mut rng = RandomSource::from_seed(123);
        for &(c_in, c_out, k, stride, l) in
            &[(1usize, 1usize, 2usize, 1usize, 6usize), (2, 3, 3, 2, 9), (3, 2, 4, 3, 10)]
        {
            let x: Activation<f64> = Activation::from_flat(c_in, l, rng.normal_vec(c_in * l));
            let w: Tensor<f64> = Tensor::from_vec(&[c_out, c_in, k], rng.normal_vec(c_out * c_in * k));
            let cx = conv1d(&x, &w, None, stride, 0).unwrap();
            let y = Activation::from_flat(c_out, cx.len, rng.normal_vec(c_out * cx.len));
            let ty = conv1d_transposed(&y, &w, stride).unwrap();
            // ty is longer than x when the conv discards a tail; embed x.
            let lhs: f64 = cx.data.iter().zip(&y.data).map(|(a, b)| a * b).sum();
            let mut rhs = 0.0;
            for c in 0..c_in {
                for (t, &v) in x.row(c).iter().enumerate() {
                    if t < ty.len {
                        rhs += v * ty.get(c, t);
                    }
                }
            }
            assert!((lhs - rhs).abs() < 1e-10, "adjoint violated: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn conv_transpose_layer_upsamples_exactly() {
        let mut rng = RandomSource::from_seed(3);
        let layer = ConvTranspose1d::<f64>::new(3, 2, 5, 2, &mut rng);
        let x = Activation::from_flat(3, 10, rng.normal_vec(30));
        let y = layer.forward(&x).unwrap();
        assert_eq!(y.channels, 2);
        assert_eq!(y.len, 20);
    }

    #[test]
    fn mlp_hand_case() {
        // 1-layer [[2]] v + [1] on v=[3] -> [7]
        let mut rng = RandomSource::from_seed(1);
        let mut mlp = Mlp::<f64>::new(&[1, 1], ActKind::Identity, &mut rng);
        mlp.layers[0].w.value.data[0] = 2.0;
        mlp.layers[0].b.value.data[0] = 1.0;
        let (y, _) = mlp.forward(&[3.0]).unwrap();
        assert_eq!(y, vec![7.0]);
    }

    #[test]
    fn mlp_identity_weights() {
        let mut rng = RandomSource::from_seed(1);
        let mut mlp = Mlp::<f64>::new(&[3, 3], ActKind::Identity, &mut rng);
        mlp.layers[0].w.value.fill(0.0);
        for i in 0..3 {
            mlp.layers[0].w.value.data[i * 3 + i] = 1.0;
        }
        mlp.layers[0].b.value.fill(0.0);
        let v = vec![0.5, -1.5, 2.0];
        let (y, _) = mlp.forward(&v).unwrap();
        assert_eq!(y, v);
    }

    #[test]
    fn mlp_width_mismatch_is_error() {
        let mut rng = RandomSource::from_seed(1);
        let mlp = Mlp::<f64>::new(&[4, 2], ActKind::Silu, &mut rng);
        assert!(mlp.forward(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn silu_derivative_matches_finite_difference() {
        for &x in &[-2.0f64, -0.5, 0.0, 0.7, 3.0] {
            let eps = 1e-6;
            let num = (ActKind::Silu.apply(x + eps) - ActKind::Silu.apply(x - eps)) / (2.0 * eps);
            let ana = ActKind::Silu.deriv(x);
            assert!((num - ana).abs() < 1e-8, "x={x}: {num} vs {ana}");
        }
    }
}
