//! Central-difference verification of analytic gradients.
//!
//! Callers compute analytic gradients first (forward + backward into the
//! parameter grad buffers), then hand over a pure loss closure; the harness
//! perturbs every parameter scalar and compares.

use crate::error::{Error, Result};
use crate::nn::tensor::{for_each_param, Parameterized};

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst_param: String,
    pub checked: usize,
}

fn param_value<M: Parameterized<f64>>(model: &mut M, name: &str, k: usize) -> f64 {
    let mut out = f64::NAN;
    for_each_param(model, |n, p| {
        if n == name {
            out = p.value.data[k];
        }
    });
    out
}

fn set_param_value<M: Parameterized<f64>>(model: &mut M, name: &str, k: usize, v: f64) {
    for_each_param(model, |n, p| {
        if n == name {
            p.value.data[k] = v;
        }
    });
}

/// Max over parameters of |analytic - central| / max(1, |central|).
///
/// `loss` must be deterministic and must not touch gradient buffers.
pub fn grad_check<M: Parameterized<f64>>(
    model: &mut M,
    loss: &mut dyn FnMut(&mut M) -> f64,
    eps: f64,
) -> Result<GradCheckReport> {
    let mut entries: Vec<(String, Vec<f64>)> = Vec::new();
    for_each_param(model, |n, p| {
        entries.push((n.to_string(), p.grad.data.clone()));
    });

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst_param: String::new(),
        checked: 0,
    };
    for (name, analytic) in &entries {
        for (k, &a) in analytic.iter().enumerate() {
            let orig = param_value(model, name, k);
            set_param_value(model, name, k, orig + eps);
            let up = loss(model);
            set_param_value(model, name, k, orig - eps);
            let down = loss(model);
            set_param_value(model, name, k, orig);
            if !up.is_finite() || !down.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite loss while perturbing {name}[{k}]"
                )));
            }
            let numeric = (up - down) / (2.0 * eps);
            let rel = (a - numeric).abs() / numeric.abs().max(1.0);
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst_param = format!("{name}[{k}]");
            }
            report.checked += 1;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ops::{ActKind, Mlp};
    use crate::nn::tensor::zero_grads;
    use crate::rng::RandomSource;

    #[test]
    fn linear_function_has_exact_gradient() {
        let mut rng = RandomSource::from_seed(4);
        let mut mlp = Mlp::<f64>::new(&[3, 2], ActKind::Identity, &mut rng);
        let x = vec![0.4, -1.2, 2.0];
        let wsum = vec![0.7, -0.3];
        zero_grads(&mut mlp);
        let (out, cache) = mlp.forward(&x).unwrap();
        let _ = out;
        mlp.backward(&cache, &wsum);
        let report = grad_check(
            &mut mlp,
            &mut |m| {
                let (y, _) = m.forward(&x).unwrap();
                y.iter().zip(&wsum).map(|(a, b)| a * b).sum()
            },
            1e-5,
        )
        .unwrap();
        assert!(report.max_rel_err <= 1e-10, "{:?}", report);
    }

    #[test]
    fn mlp_with_nonlinearity_passes() {
        let mut rng = RandomSource::from_seed(5);
        let mut mlp = Mlp::<f64>::new(&[4, 6, 3], ActKind::Silu, &mut rng);
        let x: Vec<f64> = rng.normal_vec(4);
        let wsum: Vec<f64> = rng.normal_vec(3);
        zero_grads(&mut mlp);
        let (_, cache) = mlp.forward(&x).unwrap();
        mlp.backward(&cache, &wsum);
        let report = grad_check(
            &mut mlp,
            &mut |m| {
                let (y, _) = m.forward(&x).unwrap();
                y.iter().zip(&wsum).map(|(a, b)| a * b).sum()
            },
            1e-5,
        )
        .unwrap();
        assert!(report.max_rel_err < 1e-6, "{:?}", report);
    }
}
