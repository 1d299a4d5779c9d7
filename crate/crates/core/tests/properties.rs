mod common;

use common::*;
use freqalign::adversarial::{discriminator_loss, generator_loss, log_normalize, GeneratorObjective};
use freqalign::checkpoint;
use freqalign::data::{resample_to, synth_dataset, SynthConfig};
use freqalign::fusion::{fuse_amplitude, lf_mask, stff_with_alpha, AlphaMode, FrequencyFusion, FusionConfig};
use freqalign::metrics::{binarize, iou_dice};
use freqalign::spectral::{decompose, fft2d_with, recompose, Layout, Method, Spectrum};
use freqalign::tensor::Tensor;
use proptest::prelude::*;

fn image_from(seed: u64, c: usize, h: usize, w: usize) -> Tensor {
    random_image(&mut rng(seed), c, h, w)
}

fn constant_spectrum(h: usize, w: usize, value: f64) -> Spectrum {
    Spectrum {
        channels: 1,
        height: h,
        width: w,
        amplitude: vec![value; h * w],
        phase: vec![0.0; h * w],
        layout: Layout::Centered,
    }
}

fn mask_pair(seed: u64, n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut r = rng(seed);
    let a = binary_mask(&mut r, vec![n]).to_vec();
    let b = binary_mask(&mut r, vec![n]).to_vec();
    (a, b)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn round_trip_recovers_the_image(seed in any::<u64>(), c in 1usize..=3, h in 1usize..=20, w in 1usize..=20) {
        let x = image_from(seed, c, h, w);
        let back = recompose(&decompose(&x).unwrap()).unwrap();
        let err = x.data().iter().zip(back.data().iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(err < 1e-6, "max error {err:e}");
    }

    #[test]
    fn parseval_holds_per_channel(seed in any::<u64>(), c in 1usize..=3, h in 1usize..=20, w in 1usize..=20) {
        let x = image_from(seed, c, h, w);
        let spec = decompose(&x).unwrap();
        let plane = h * w;
        for ch in 0..c {
            let energy: f64 = x.data()[ch * plane..(ch + 1) * plane].iter().map(|v| v * v).sum();
            let spectral: f64 = spec.amplitude[ch * plane..(ch + 1) * plane].iter().map(|a| a * a).sum();
            let rel = (spectral - (plane as f64) * energy).abs() / ((plane as f64) * energy).max(1e-300);
            prop_assert!(rel < 1e-9, "channel {ch}: relative error {rel:e}");
        }
    }

    #[test]
    fn radix2_agrees_with_direct(seed in any::<u64>(), ph in 0u32..=5, pw in 0u32..=5) {
        let (h, w) = (1usize << ph, 1usize << pw);
        let x = image_from(seed, 1, h, w);
        let fast = fft2d_with(&x, Method::Radix2).unwrap();
        let slow = fft2d_with(&x, Method::Direct).unwrap();
        let err = fast.data.iter().zip(&slow.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        prop_assert!(err < 1e-8, "max difference {err:e}");
    }

    #[test]
    fn transform_matches_the_defining_sum(seed in any::<u64>(), h in 1usize..=9, w in 1usize..=9) {
        let x = image_from(seed, 1, h, w);
        let ours = fft2d_with(&x, Method::Auto).unwrap();
        for (z, (re, im)) in ours.data.iter().zip(reference_dft(&x.data(), h, w)) {
            prop_assert!((z.re - re).abs() < 1e-9 && (z.im - im).abs() < 1e-9);
        }
    }

    #[test]
    fn amplitude_ignores_cyclic_shifts(seed in any::<u64>(), h in 2usize..=16, w in 2usize..=16, dy in 0usize..16, dx in 0usize..16) {
        let x = image_from(seed, 1, h, w);
        let d = x.data();
        let shifted: Vec<f64> = (0..h * w).map(|i| d[((i / w + dy) % h) * w + (i % w + dx) % w]).collect();
        let a = decompose(&x).unwrap();
        let b = decompose(&Tensor::new(vec![1, h, w], shifted).unwrap()).unwrap();
        for (p, q) in a.amplitude.iter().zip(&b.amplitude) {
            prop_assert!((p - q).abs() < 1e-9 * (1.0 + p));
        }
    }

    #[test]
    fn shift_then_unshift_is_identity(seed in any::<u64>(), h in 1usize..=12, w in 1usize..=12) {
        let spec = decompose(&image_from(seed, 2, h, w)).unwrap();
        let back = spec.center_shift().unwrap().center_unshift().unwrap();
        prop_assert_eq!(back, spec);
    }

    #[test]
    fn fusion_keeps_source_phase(seed in any::<u64>(), half in 2usize..=16, alpha in 0.0f64..=1.0, beta in 0.01f64..=0.5) {
        let n = 2 * half;
        let xs = image_from(seed, 1, n, n);
        let xt = image_from(seed ^ 1, 1, n, n);
        let cfg = FusionConfig { beta, ..FusionConfig::default() };
        let fused = stff_with_alpha(&xs, &xt, alpha, &cfg).unwrap();
        let source = decompose(&xs).unwrap().center_shift().unwrap();
        for i in 0..n * n {
            if fused.spectrum.amplitude[i] > 1e-12 {
                prop_assert!((fused.spectrum.phase[i] - source.phase[i]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn fusion_keeps_source_high_frequencies(seed in any::<u64>(), h in 2usize..=24, w in 2usize..=24, alpha in 0.0f64..=1.0, beta in 0.01f64..=0.5) {
        let s = decompose(&image_from(seed, 2, h, w)).unwrap().center_shift().unwrap();
        let t = decompose(&image_from(seed ^ 7, 2, h, w)).unwrap().center_shift().unwrap();
        let mask = lf_mask(h, w, beta).unwrap();
        let fused = fuse_amplitude(&s, &t, alpha, &mask).unwrap();
        for (i, v) in fused.iter().enumerate() {
            if !mask.bits[i % (h * w)] {
                prop_assert_eq!(v.to_bits(), s.amplitude[i].to_bits());
            }
        }
    }

    #[test]
    fn blend_is_monotone_in_alpha(a in 0.0f64..10.0, b in 0.0f64..10.0, lo in 0.0f64..=1.0, hi in 0.0f64..=1.0, beta in 0.05f64..=0.5) {
        let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
        let s = constant_spectrum(8, 8, a);
        let t = constant_spectrum(8, 8, b);
        let mask = lf_mask(8, 8, beta).unwrap();
        let f_lo = fuse_amplitude(&s, &t, lo, &mask).unwrap();
        let f_hi = fuse_amplitude(&s, &t, hi, &mask).unwrap();
        for i in (0..64).filter(|&i| mask.bits[i]) {
            if a >= b {
                prop_assert!(f_hi[i] >= f_lo[i] - 1e-15);
            } else {
                prop_assert!(f_hi[i] <= f_lo[i] + 1e-15);
            }
        }
    }

    #[test]
    fn mask_is_a_centred_square(h in 1usize..=40, w in 1usize..=40, beta in 0.001f64..=0.5) {
        let mask = lf_mask(h, w, beta).unwrap();
        let r = (beta * h.min(w) as f64).floor() as usize;
        let extent = |n: usize| (n / 2 + r).min(n - 1) - (n / 2).saturating_sub(r) + 1;
        prop_assert_eq!(mask.count(), extent(h) * extent(w));
        prop_assert!(mask.get(h / 2, w / 2));
        if 2 * r < h.min(w) {
            prop_assert!(mask.is_centrally_symmetric());
        }
    }

    #[test]
    fn alpha_stream_is_reproducible(seed in any::<u64>()) {
        let cfg = FusionConfig { seed, alpha: AlphaMode::Uniform, ..FusionConfig::default() };
        let mut a = FrequencyFusion::new(cfg.clone()).unwrap();
        let mut b = FrequencyFusion::new(cfg).unwrap();
        let xs = image_from(seed, 1, 8, 8);
        let xt = image_from(seed ^ 3, 1, 8, 8);
        for _ in 0..3 {
            let fa = a.fuse(&xs, &xt).unwrap();
            let fb = b.fuse(&xs, &xt).unwrap();
            prop_assert!((0.0..=1.0).contains(&fa.alpha_used));
            prop_assert_eq!(fa.alpha_used.to_bits(), fb.alpha_used.to_bits());
            prop_assert_eq!(fa.fused_image.to_vec(), fb.fused_image.to_vec());
        }
    }

    #[test]
    fn dice_iou_identity(seed in any::<u64>(), n in 1usize..400) {
        let (p, g) = mask_pair(seed, n);
        let m = iou_dice(&p, &g).unwrap();
        prop_assert!(m.iou <= m.dice + 1e-15);
        if m.tp + m.fp + m.fn_ > 0 {
            prop_assert!((m.dice - 2.0 * m.iou / (1.0 + m.iou)).abs() < 1e-12);
        }
    }

    #[test]
    fn metrics_ignore_joint_permutations(seed in any::<u64>(), n in 1usize..200, key in any::<u64>()) {
        let (p, g) = mask_pair(seed, n);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&i| (i as u64).wrapping_mul(key | 1).rotate_left(17));
        let pp: Vec<f64> = order.iter().map(|&i| p[i]).collect();
        let gp: Vec<f64> = order.iter().map(|&i| g[i]).collect();
        prop_assert_eq!(iou_dice(&p, &g).unwrap(), iou_dice(&pp, &gp).unwrap());
    }

    #[test]
    fn breaking_a_correct_pixel_never_raises_iou(seed in any::<u64>(), n in 1usize..200, pick in any::<usize>()) {
        let (mut p, g) = mask_pair(seed, n);
        let correct: Vec<usize> = (0..n).filter(|&i| p[i] == g[i]).collect();
        prop_assume!(!correct.is_empty());
        let before = iou_dice(&p, &g).unwrap();
        let i = correct[pick % correct.len()];
        p[i] = 1.0 - p[i];
        let after = iou_dice(&p, &g).unwrap();
        prop_assert!(after.iou <= before.iou);
    }

    #[test]
    fn binarize_matches_comparison(values in proptest::collection::vec(0.0f64..=1.0, 0..100), t in 0.0f64..=1.0) {
        let b = binarize(&values, t).unwrap();
        for (v, o) in values.iter().zip(&b) {
            prop_assert_eq!(*o, if *v >= t { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn log_normalized_amplitude_is_in_unit_range(values in proptest::collection::vec(0.0f64..1e6, 1..100)) {
        for v in log_normalize(&values).unwrap() {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn adversarial_losses_are_finite_and_non_negative(
        real in proptest::collection::vec(0.0f64..=1.0, 1..16),
        fake in proptest::collection::vec(0.0f64..=1.0, 1..16),
    ) {
        let pr = Tensor::new(vec![real.len()], real).unwrap();
        let pf = Tensor::new(vec![fake.len()], fake).unwrap();
        let d = discriminator_loss(&pr, &pf).unwrap().item();
        prop_assert!(d.is_finite() && d >= 0.0);
        for obj in [GeneratorObjective::NonSaturating, GeneratorObjective::Saturating] {
            prop_assert!(generator_loss(&pf, obj).unwrap().item().is_finite());
        }
    }

    #[test]
    fn checkpoint_encoding_round_trips(values in proptest::collection::vec(any::<f64>(), 1..40)) {
        let n = values.len();
        let t = Tensor::param(vec![n], values.clone()).unwrap();
        let decoded = checkpoint::decode(&checkpoint::encode(&[("p".into(), t)])).unwrap();
        prop_assert_eq!(decoded.len(), 1);
        let bits: Vec<u64> = decoded[0].2.iter().map(|v| v.to_bits()).collect();
        prop_assert_eq!(bits, values.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn synthetic_data_is_deterministic_binary_and_disjoint(seed in any::<u64>()) {
        let cfg = SynthConfig { size: 16, n_source: 5, n_target: 4, n_val: 3, seed, ..SynthConfig::default() };
        let a = synth_dataset(&cfg).unwrap();
        let b = synth_dataset(&cfg).unwrap();
        let mut ids = std::collections::HashSet::new();
        for (x, y) in a.source.iter().chain(&a.target).chain(&a.target_val).zip(b.source.iter().chain(&b.target).chain(&b.target_val)) {
            prop_assert_eq!(x.image.to_vec(), y.image.to_vec());
            prop_assert!(ids.insert(x.id.clone()), "duplicate id {}", x.id);
            prop_assert!(x.image.data().iter().all(|v| (0.0..=1.0).contains(v)));
            if let Some(m) = &x.mask {
                prop_assert!(m.data().iter().all(|&v| v == 0.0 || v == 1.0));
                let r = resample_to(x, (48, 32)).unwrap();
                prop_assert!(r.mask.unwrap().data().iter().all(|&v| v == 0.0 || v == 1.0));
            }
        }
        prop_assert!(a.target.iter().all(|r| r.mask.is_none()));
    }
}
