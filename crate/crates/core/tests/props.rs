//! Property tests over the signal-processing and metric layers.

use foleygen_core::feature::{block_pool, extract_rms, pool_values, EventFeature};
use foleygen_core::metrics::event_l1;
use foleygen_core::nn::{conv1d, conv1d_transposed, Activation, Tensor};
use foleygen_core::wave::{decode_wav, encode_wav, Waveform};
use proptest::prelude::*;

fn sample_vec(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f32>> {
    prop::collection::vec((-0.999f32..0.999f32), len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// decode(encode(w)) differs per sample by at most one quantization step
    /// and never produces non-finite values.
    #[test]
    fn wav_roundtrip_quantization_bound(samples in sample_vec(1..400)) {
        let w = Waveform::new(samples, 22_050);
        let back = decode_wav(&encode_wav(&w).unwrap()).unwrap();
        prop_assert_eq!(back.samples.len(), w.samples.len());
        for (a, b) in w.samples.iter().zip(&back.samples) {
            prop_assert!(b.is_finite());
            prop_assert!((a - b).abs() <= 1.0 / 32768.0);
        }
    }

    /// RMS is scale-equivariant: extract_rms(a*x) == |a| * extract_rms(x).
    /// Power-of-two scales keep the f32 products exact, so this exercises
    /// the operator itself rather than input quantization.
    #[test]
    fn rms_scale_equivariance(samples in sample_vec(64..300), exp in -3i32..3, neg in any::<bool>()) {
        let scale = if neg { -2.0f32.powi(exp) } else { 2.0f32.powi(exp) };
        let w = Waveform::new(samples.clone(), 8000);
        let scaled = Waveform::new(samples.iter().map(|s| s * scale).collect(), 8000);
        let f = extract_rms(&w, 32, 8).unwrap();
        let g = extract_rms(&scaled, 32, 8).unwrap();
        for (a, b) in f.values.iter().zip(&g.values) {
            prop_assert!((b - (scale.abs() as f64) * a).abs() < 1e-9);
        }
    }

    /// Arbitrary scales hold to the precision the f32 input quantization
    /// allows.
    #[test]
    fn rms_scale_equivariance_general(samples in sample_vec(64..300), scale in -4.0f32..4.0f32) {
        let w = Waveform::new(samples.clone(), 8000);
        let scaled = Waveform::new(samples.iter().map(|s| s * scale).collect(), 8000);
        let f = extract_rms(&w, 32, 8).unwrap();
        let g = extract_rms(&scaled, 32, 8).unwrap();
        for (a, b) in f.values.iter().zip(&g.values) {
            prop_assert!((b - (scale.abs() as f64) * a).abs() < 1e-6);
        }
    }

    /// Every RMS value is bounded by the peak amplitude.
    #[test]
    fn rms_bounded_by_peak(samples in sample_vec(64..300)) {
        let peak = samples.iter().fold(0.0f32, |m, s| m.max(s.abs())) as f64;
        let w = Waveform::new(samples, 8000);
        let f = extract_rms(&w, 32, 8).unwrap();
        for &v in &f.values {
            prop_assert!(v <= peak + 1e-12);
        }
    }

    /// Pooling is invariant to permutations inside a block and monotone:
    /// raising any value never lowers any pooled output.
    #[test]
    fn block_pool_permutation_and_monotonicity(
        values in prop::collection::vec(0.0f64..1.0, 8..64),
        n in 1usize..8,
        bump in 0.0f64..0.5,
    ) {
        prop_assume!(n <= values.len());
        let base = pool_values(&values, n).unwrap();

        // permute within the first block
        let block_len = values.len().div_ceil(n);
        let mut permuted = values.clone();
        permuted[..block_len.min(values.len())].reverse();
        // only guaranteed when the reversal stays inside one block and does
        // not move the final (padding-source) element
        if block_len < values.len() {
            let p = pool_values(&permuted, n).unwrap();
            prop_assert!((p[0] - base[0]).abs() < 1e-15);
        }

        // monotonicity
        let idx = values.len() / 2;
        let mut raised = values.clone();
        raised[idx] += bump;
        let r = pool_values(&raised, n).unwrap();
        for (a, b) in r.iter().zip(&base) {
            prop_assert!(a >= b);
        }
    }

    /// event_l1 is a metric on fixed-geometry features.
    #[test]
    fn event_l1_metric_axioms(
        a in prop::collection::vec(0.0f64..1.0, 12),
        b in prop::collection::vec(0.0f64..1.0, 12),
        c in prop::collection::vec(0.0f64..1.0, 12),
    ) {
        let feat = |values: Vec<f64>| EventFeature { values, window: 8, hop: 4, source_rate: 8000 };
        let fa = feat(a.clone());
        let fb = feat(b.clone());
        let fc = feat(c);
        let ab = event_l1(&fa, &fb).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(ab, event_l1(&fb, &fa).unwrap());
        prop_assert_eq!(event_l1(&fa, &fa).unwrap(), 0.0);
        if a != b {
            prop_assert!(ab > 0.0);
        }
        let ac = event_l1(&fa, &fc).unwrap();
        let cb = event_l1(&fc, &fb).unwrap();
        prop_assert!(ab <= ac + cb + 1e-12);
    }

    /// <conv(x), y> == <x, conv_T(y)> with shared weights at padding 0.
    #[test]
    fn conv_adjoint_identity(
        c_in in 1usize..4,
        c_out in 1usize..4,
        k in 1usize..5,
        stride in 1usize..4,
        extra in 0usize..12,
        seed in 0u64..1000,
    ) {
        let l = k + extra;
        let mut rng = foleygen_core::RandomSource::from_seed(seed);
        let x: Activation<f64> = Activation::from_flat(c_in, l, rng.normal_vec(c_in * l));
        let w: Tensor<f64> = Tensor::from_vec(&[c_out, c_in, k], rng.normal_vec(c_out * c_in * k));
        let cx = conv1d(&x, &w, None, stride, 0).unwrap();
        let y: Activation<f64> = Activation::from_flat(c_out, cx.len, rng.normal_vec(c_out * cx.len));
        let ty = conv1d_transposed(&y, &w, stride).unwrap();
        let lhs: f64 = cx.data.iter().zip(&y.data).map(|(a, b)| a * b).sum();
        let mut rhs = 0.0;
        for c in 0..c_in {
            for (t, &v) in x.row(c).iter().enumerate() {
                if t < ty.len {
                    rhs += v * ty.get(c, t);
                }
            }
        }
        prop_assert!((lhs - rhs).abs() < 1e-10, "{} vs {}", lhs, rhs);
    }
}

/// Power equals RMS squared across random signals.
#[test]
fn power_is_rms_squared_randomized() {
    let mut rng = foleygen_core::RandomSource::from_seed(17);
    for _ in 0..20 {
        let samples: Vec<f32> = (0..500).map(|_| rng.uniform_in(-1.0, 1.0) as f32).collect();
        let w = Waveform::new(samples, 8000);
        let r = extract_rms(&w, 64, 16).unwrap();
        let p = foleygen_core::feature::extract_power(&w, 64, 16).unwrap();
        for (a, b) in r.values.iter().zip(&p.values) {
            assert!((a * a - b).abs() < 1e-12);
        }
    }
}

/// Block pooling respects the frame-count precondition.
#[test]
fn block_pool_rejects_oversized_n() {
    let f = EventFeature {
        values: vec![0.5; 10],
        window: 4,
        hop: 2,
        source_rate: 8000,
    };
    assert!(block_pool(&f, 11).is_err());
    assert!(block_pool(&f, 10).is_ok());
}
