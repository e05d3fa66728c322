//! Dense containers for parameters and activations.

use crate::error::{Error, Result};
use crate::nn::Scalar;
use crate::rng::RandomSource;

/// N-dimensional parameter array, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<S> {
    pub shape: Vec<usize>,
    pub data: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![S::ZERO; len],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<S>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    /// Uniform fan-in initialization: U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
    pub fn uniform_fan_in(shape: &[usize], fan_in: usize, rng: &mut RandomSource) -> Self {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let len: usize = shape.iter().product();
        let data = (0..len)
            .map(|_| S::from_f64(rng.uniform_in(-bound, bound)))
            .collect();
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn fill(&mut self, v: S) {
        self.data.iter_mut().for_each(|x| *x = v);
    }
}

/// Parameter with its gradient accumulation buffer (always the same shape).
#[derive(Debug, Clone)]
pub struct Param<S> {
    pub value: Tensor<S>,
    pub grad: Tensor<S>,
}

impl<S: Scalar> Param<S> {
    pub fn new(value: Tensor<S>) -> Self {
        let grad = Tensor::zeros(&value.shape);
        Param { value, grad }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Param::new(Tensor::zeros(shape))
    }

    pub fn uniform_fan_in(shape: &[usize], fan_in: usize, rng: &mut RandomSource) -> Self {
        Param::new(Tensor::uniform_fan_in(shape, fan_in, rng))
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(S::ZERO);
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// Visitor over a module's named parameters; names are stable across runs
/// and become checkpoint entry names.
pub trait Parameterized<S: Scalar> {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<S>));
}

pub fn for_each_param<S: Scalar, M: Parameterized<S> + ?Sized>(
    module: &mut M,
    mut f: impl FnMut(&str, &mut Param<S>),
) {
    module.visit_params("", &mut f);
}

pub fn param_count<S: Scalar, M: Parameterized<S> + ?Sized>(module: &mut M) -> usize {
    let mut n = 0;
    for_each_param(module, |_, p| n += p.len());
    n
}

pub fn zero_grads<S: Scalar, M: Parameterized<S> + ?Sized>(module: &mut M) {
    for_each_param(module, |_, p| p.zero_grad());
}

/// Re-draw every parameter from U(-scale, scale). Test helper for
/// sensitivity checks that need non-degenerate weights.
pub fn randomize_params<S: Scalar, M: Parameterized<S> + ?Sized>(
    module: &mut M,
    scale: f64,
    rng: &mut RandomSource,
) {
    for_each_param(module, |_, p| {
        for v in p.value.data.iter_mut() {
            *v = S::from_f64(rng.uniform_in(-scale, scale));
        }
    });
}

/// 2-D activation: `channels` rows of `len` time steps, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Activation<S> {
    pub channels: usize,
    pub len: usize,
    pub data: Vec<S>,
}

impl<S: Scalar> Activation<S> {
    pub fn zeros(channels: usize, len: usize) -> Self {
        Activation {
            channels,
            len,
            data: vec![S::ZERO; channels * len],
        }
    }

    pub fn from_flat(channels: usize, len: usize, data: Vec<S>) -> Self {
        assert_eq!(channels * len, data.len());
        Activation {
            channels,
            len,
            data,
        }
    }

    pub fn from_row(row: &[S]) -> Self {
        Activation {
            channels: 1,
            len: row.len(),
            data: row.to_vec(),
        }
    }

    #[inline]
    pub fn row(&self, c: usize) -> &[S] {
        &self.data[c * self.len..(c + 1) * self.len]
    }

    #[inline]
    pub fn row_mut(&mut self, c: usize) -> &mut [S] {
        &mut self.data[c * self.len..(c + 1) * self.len]
    }

    #[inline]
    pub fn get(&self, c: usize, t: usize) -> S {
        self.data[c * self.len + t]
    }

    #[inline]
    pub fn set(&mut self, c: usize, t: usize, v: S) {
        self.data[c * self.len + t] = v;
    }

    pub fn assert_finite(&self, what: &str) -> Result<()> {
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite values in {what}")));
        }
        Ok(())
    }

    /// Concatenate along the channel axis; lengths must match.
    pub fn concat_channels(&self, other: &Activation<S>) -> Result<Activation<S>> {
        if self.len != other.len {
            return Err(Error::Shape(format!(
                "concat length mismatch: {} vs {}",
                self.len, other.len
            )));
        }
        let mut data = Vec::with_capacity((self.channels + other.channels) * self.len);
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&other.data);
        Ok(Activation {
            channels: self.channels + other.channels,
            len: self.len,
            data,
        })
    }

    /// Inverse of `concat_channels`.
    pub fn split_channels(&self, first: usize) -> (Activation<S>, Activation<S>) {
        assert!(first <= self.channels);
        let a = Activation {
            channels: first,
            len: self.len,
            data: self.data[..first * self.len].to_vec(),
        };
        let b = Activation {
            channels: self.channels - first,
            len: self.len,
            data: self.data[first * self.len..].to_vec(),
        };
        (a, b)
    }

    pub fn add_assign(&mut self, other: &Activation<S>) {
        assert_eq!(self.channels, other.channels);
        assert_eq!(self.len, other.len);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
    }
}
