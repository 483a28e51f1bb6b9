//! Property-based invariants across the optics, colorimetry, data split, and
//! network code, plus two fixed-seed statistical checks.

// Channel and covariance math reads clearest with explicit indices.
#![allow(clippy::needless_range_loop)]

use proptest::prelude::*;

use purelab::autoencoder::matrix::{
    matmul_nn, matmul_nn_seq, matmul_nt, matmul_nt_seq, matmul_tn, matmul_tn_seq, Matrix,
};
use purelab::autoencoder::train::{train, Phase, TrainConfig};
use purelab::autoencoder::{apply_gradients, backprop, batch_loss, LossSpec, NetworkParams};
use purelab::colorspace::{
    lab_distribution, srgb_eotf, srgb_oetf, srgb_to_lab_batch, srgb_to_lab_batch_seq, LabColor,
};
use purelab::experiment::split_dataset;
use purelab::imaging::{
    normalize, normalize_seq, sample_origins, AcquisitionStack, Patch, RawImage, StackLabel,
    TransmittanceImage, PATCH_HEIGHT, PATCH_LEN, PATCH_WIDTH,
};
use purelab::photonics::{dilute, transmittance, ChromophoreTerm, OpticalMedium};

fn term(name: &str, extinction: [f64; 3], c: f64) -> ChromophoreTerm {
    ChromophoreTerm::new(name, extinction, c, 10.0).unwrap()
}

fn medium_strategy() -> impl Strategy<Value = OpticalMedium> {
    proptest::collection::vec(
        (
            proptest::array::uniform3(0.0f64..0.5),
            0.0f64..2.0,
            0.1f64..15.0,
        ),
        1..4,
    )
    .prop_map(|terms| {
        OpticalMedium::new(
            terms
                .into_iter()
                .enumerate()
                .map(|(i, (ext, c, l))| ChromophoreTerm::new(&format!("t{i}"), ext, c, l).unwrap())
                .collect(),
        )
        .unwrap()
    })
}

proptest! {
    #[test]
    fn srgb_transfer_functions_invert(u in 0.0f64..=1.0) {
        let v = srgb_eotf(u);
        prop_assert!((srgb_oetf(v) - u).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&v));
    }

    #[test]
    fn transmittance_decreases_with_concentration(
        m in medium_strategy(),
        delta in 0.01f64..1.0,
    ) {
        let t1 = transmittance(&m);
        let mut terms = m.terms().to_vec();
        terms[0].concentration += delta;
        let bumped = OpticalMedium::new(terms).unwrap();
        let t2 = transmittance(&bumped);
        for ch in 0..3 {
            prop_assert!(t2[ch] <= t1[ch]);
            if m.terms()[0].extinction[ch] * delta * m.terms()[0].path_length_mm > 1e-9 {
                prop_assert!(t2[ch] < t1[ch]);
            }
        }
    }

    #[test]
    fn doubling_concentration_squares_transmittance(m in medium_strategy()) {
        let t1 = transmittance(&m);
        let doubled = OpticalMedium::new(
            m.terms()
                .iter()
                .map(|t| {
                    let mut t = t.clone();
                    t.concentration *= 2.0;
                    t
                })
                .collect(),
        )
        .unwrap();
        let t2 = transmittance(&doubled);
        for ch in 0..3 {
            if t1[ch] > 1e-100 {
                prop_assert!((t2[ch] - t1[ch] * t1[ch]).abs() <= 1e-12 * t1[ch].max(1e-30));
            }
        }
    }

    #[test]
    fn log_transmittance_is_linear_in_depth(m in medium_strategy()) {
        let t = transmittance(&m);
        for ch in 0..3 {
            let depth: f64 = m
                .terms()
                .iter()
                .map(|x| x.extinction[ch] * x.concentration * x.path_length_mm)
                .sum();
            if depth < 300.0 {
                prop_assert!((t[ch].ln() + depth).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn halving_dilution_scales_exactly(c_base in 0.0f64..2.0, c_dil in 0.0f64..2.0, pure in 0.0f64..2.0) {
        let m = OpticalMedium::new(vec![
            term("pigment", [0.1, 0.2, 0.3], c_base),
            term("water", [0.01, 0.01, 0.01], c_dil),
        ])
        .unwrap();
        let d = dilute(&m, 0.5, "water", pure).unwrap();
        // f = 0.5 is exact in binary floating point.
        prop_assert_eq!(d.term("pigment").unwrap().concentration, c_base * 0.5);
        prop_assert_eq!(d.term("water").unwrap().concentration, c_dil * 0.5 + 0.5 * pure);
    }

    #[test]
    fn classifier_head_emits_a_distribution(seed in any::<u64>(), x in proptest::collection::vec(0.0f64..1.0, 30)) {
        let net = NetworkParams::new_seeded(30, &[10, 6], 5, seed).unwrap();
        let probs = net.forward_classify(&x).unwrap();
        let sum: f64 = probs.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-12);
        prop_assert!(probs.iter().all(|&p| p > 0.0));
    }

    #[test]
    fn uniform_head_bias_shift_leaves_probabilities(seed in any::<u64>(), shift in -5.0f64..5.0, x in proptest::collection::vec(0.0f64..1.0, 20)) {
        let net = NetworkParams::new_seeded(20, &[8, 4], 5, seed).unwrap();
        let base = net.forward_classify(&x).unwrap();
        let mut shifted = net.clone();
        for b in shifted.head.last_mut().unwrap().biases.iter_mut() {
            *b += shift;
        }
        let probs = shifted.forward_classify(&x).unwrap();
        for (p, q) in probs.iter().zip(&base) {
            prop_assert!((p - q).abs() < 1e-9);
        }
    }

    #[test]
    fn split_respects_strata_and_covers(
        sizes in proptest::collection::vec(5usize..12, 10),
        frac in 0.2f64..0.85,
        seed in any::<u64>(),
    ) {
        let mut patches = Vec::new();
        for (s, &n) in sizes.iter().enumerate() {
            for _ in 0..n {
                patches.push(Patch {
                    pixels: vec![0.0; PATCH_LEN],
                    origin: None,
                    class: (s % 5) as u8,
                    flavor_id: (s / 5) as u8,
                });
            }
        }
        let total = patches.len();
        // A stratum rounding to all-train or all-test is a legal reject,
        // so errors end the case without asserting.
        if let Ok(split) = split_dataset(&patches, frac, seed) {
            {
                let mut seen = vec![false; total];
                for &i in split.train.iter().chain(&split.test) {
                    prop_assert!(!seen[i]);
                    seen[i] = true;
                }
                prop_assert!(seen.iter().all(|&s| s));
                // Per-stratum train count is floor(frac * n + 0.5).
                for (s, &n) in sizes.iter().enumerate() {
                    let want = (frac * n as f64 + 0.5).floor() as usize;
                    let got = split
                        .train
                        .iter()
                        .filter(|&&i| {
                            patches[i].class == (s % 5) as u8
                                && patches[i].flavor_id == (s / 5) as u8
                        })
                        .count();
                    prop_assert_eq!(got, want);
                }
                let again = split_dataset(&patches, frac, seed).unwrap();
                prop_assert_eq!(again.train, split.train);
                prop_assert_eq!(again.test, split.test);
            }
        }
    }

    #[test]
    fn normalization_is_gain_invariant(
        gain in 0.5f64..4.0,
        t in proptest::array::uniform3(0.05f64..0.9),
    ) {
        let label = StackLabel { flavor: "x".into(), flavor_id: 0, fraction: 1.0, class: 0 };
        let (w, h) = (PATCH_WIDTH, PATCH_HEIGHT);
        let frame = |dark: f64, signal: [f64; 3], g: f64| {
            let mut data = Vec::with_capacity(w * h * 3);
            for _ in 0..w * h {
                for ch in 0..3 {
                    data.push(g * (dark + signal[ch]));
                }
            }
            RawImage::new(w, h, data).unwrap()
        };
        let build = |g: f64| {
            // tau1 = tau2 keeps the expected value at exactly t.
            AcquisitionStack::new(
                frame(0.05, [0.95 * t[0], 0.95 * t[1], 0.95 * t[2]], g),
                frame(0.05, [0.0; 3], g),
                frame(0.05, [0.95; 3], g),
                10.0,
                10.0,
                0.5,
                label.clone(),
            )
            .unwrap()
        };
        let a = normalize(&build(1.0), 1e-9, 2.0).unwrap();
        let b = normalize(&build(gain), 1e-9, 2.0).unwrap();
        prop_assert_eq!(a.masked_fraction, 0.0);
        prop_assert_eq!(b.masked_fraction, 0.0);
        for (x, y) in a.image.data().iter().zip(b.image.data()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
        for (i, v) in a.image.data().iter().enumerate() {
            prop_assert!((v - t[i % 3]).abs() < 1e-12);
        }
    }

    #[test]
    fn lab_distribution_matches_two_pass_reference(
        vals in proptest::collection::vec((1.0f64..99.0, -80.0f64..80.0, -80.0f64..80.0), 2..40),
    ) {
        let labs: Vec<LabColor> =
            vals.iter().map(|&(l, a, b)| LabColor { l, a, b }).collect();
        let d = lab_distribution(&labs, "prop").unwrap();
        let n = labs.len() as f64;
        let comps = |c: &LabColor| [c.l, c.a, c.b];
        let mut mean = [0.0f64; 3];
        for c in &labs {
            for (m, v) in mean.iter_mut().zip(comps(c)) {
                *m += v;
            }
        }
        for m in mean.iter_mut() {
            *m /= n;
        }
        let mut cov = [[0.0f64; 3]; 3];
        for c in &labs {
            let v = comps(c);
            for i in 0..3 {
                for j in 0..3 {
                    cov[i][j] += (v[i] - mean[i]) * (v[j] - mean[j]);
                }
            }
        }
        for row in cov.iter_mut() {
            for c in row.iter_mut() {
                *c /= n - 1.0;
            }
        }
        for i in 0..3 {
            prop_assert!((d.mean[i] - mean[i]).abs() < 1e-10);
            for j in 0..3 {
                prop_assert!((d.covariance[i][j] - cov[i][j]).abs() < 1e-10);
                prop_assert_eq!(d.covariance[i][j], d.covariance[j][i]);
            }
            prop_assert!(d.covariance[i][i] >= 0.0);
        }
    }

    #[test]
    fn parallel_kernels_match_sequential_bitwise(
        m in 1usize..8, k in 1usize..8, n in 1usize..8,
        seed in any::<u64>(),
    ) {
        use rand::Rng;
        let mut rng = purelab::seeds::rng(seed);
        let mut fill = |r: usize, c: usize| {
            Matrix::from_vec(r, c, (0..r * c).map(|_| rng.gen_range(-2.0..2.0)).collect())
        };
        let a = fill(m, k);
        let b_t = fill(n, k);
        let (p, s) = (matmul_nt(&a, &b_t), matmul_nt_seq(&a, &b_t));
        prop_assert_eq!(p.data(), s.data());
        let b = fill(m, k);
        let w = fill(k, n);
        let (p, s) = (matmul_nn(&b, &w), matmul_nn_seq(&b, &w));
        prop_assert_eq!(p.data(), s.data());
        let x = fill(m, k);
        let y = fill(m, n);
        let (p, s) = (matmul_tn(&x, &y), matmul_tn_seq(&x, &y));
        prop_assert_eq!(p.data(), s.data());
    }

    #[test]
    fn batch_lab_conversion_matches_sequential_bitwise(
        pixels in proptest::collection::vec(proptest::array::uniform3(0.0f64..=1.0), 1..80),
    ) {
        let par = srgb_to_lab_batch(&pixels).unwrap();
        let seq = srgb_to_lab_batch_seq(&pixels).unwrap();
        for (p, s) in par.iter().zip(&seq) {
            prop_assert_eq!(p.l.to_bits(), s.l.to_bits());
            prop_assert_eq!(p.a.to_bits(), s.a.to_bits());
            prop_assert_eq!(p.b.to_bits(), s.b.to_bits());
        }
    }

    #[test]
    fn parallel_normalize_matches_sequential_bitwise(
        seed in any::<u64>(),
        sigma_like in 0.0f64..0.3,
    ) {
        use rand::Rng;
        let (w, h) = (PATCH_WIDTH, PATCH_HEIGHT + 3);
        let mut rng = purelab::seeds::rng(seed);
        let mut frame = |base: f64| {
            let data = (0..w * h * 3)
                .map(|_| (base + sigma_like * rng.gen_range(-1.0..1.0)).max(0.0))
                .collect();
            RawImage::new(w, h, data).unwrap()
        };
        let stack = AcquisitionStack::new(
            frame(0.4),
            frame(0.05),
            frame(1.0),
            10.0,
            20.0,
            0.5,
            StackLabel { flavor: "x".into(), flavor_id: 0, fraction: 0.6, class: 2 },
        )
        .unwrap();
        let a = normalize(&stack, 1e-6, 2.0).unwrap();
        let b = normalize_seq(&stack, 1e-6, 2.0).unwrap();
        prop_assert_eq!(a.masked_fraction, b.masked_fraction);
        for (x, y) in a.image.data().iter().zip(b.image.data()) {
            prop_assert_eq!(x.to_bits(), y.to_bits());
        }
    }
}

/// Chi-square uniformity of patch origins on a 100 x 50 origin grid, binned
/// 10 x 5 (100 cells per bin). Fixed seed; critical value is chi-square
/// with df = 49 at alpha = 0.001.
#[test]
fn patch_origins_are_uniform() {
    let (w, h) = (PATCH_WIDTH + 99, PATCH_HEIGHT + 49);
    let img = TransmittanceImage::from_parts(
        w,
        h,
        vec![0.5; w * h * 3],
        vec![true; w * h],
    )
    .unwrap();
    let n = 100_000usize;
    let origins = sample_origins(&img, n, 31415).unwrap();
    let mut bins = [[0usize; 10]; 5];
    for (x, y) in origins {
        assert!(x < 100 && y < 50);
        bins[y / 10][x / 10] += 1;
    }
    let expected = n as f64 / 50.0;
    let chi2: f64 = bins
        .iter()
        .flatten()
        .map(|&o| {
            let d = o as f64 - expected;
            d * d / expected
        })
        .sum();
    assert!(chi2 < 85.350565, "chi2 = {chi2:.2} exceeds the df=49, alpha=0.001 bound");
}

/// With a small enough step, one full-batch gradient step must not increase
/// the loss (first-order descent). Checked for both loss modes.
#[test]
fn gradient_steps_descend() {
    use rand::Rng;
    let mut rng = purelab::seeds::rng(2718);
    let inputs = Matrix::from_vec(16, 20, (0..320).map(|_| rng.gen_range(0.0..1.0)).collect());
    let labels: Vec<u8> = (0..16).map(|i| (i % 5) as u8).collect();
    let losses = [LossSpec::Mse, LossSpec::CrossEntropy(&labels)];
    for loss in &losses {
        let net = NetworkParams::new_seeded(20, &[8, 4], 5, 999).unwrap();
        let before = batch_loss(&net, &inputs, loss).unwrap();
        let grads = backprop(&net, &inputs, loss).unwrap().gradients;
        let mut lr = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let mut trial = net.clone();
            apply_gradients(&mut trial, &grads, lr);
            if batch_loss(&trial, &inputs, loss).unwrap() <= before {
                accepted = true;
                break;
            }
            lr *= 0.5;
        }
        assert!(accepted, "no step size descended from loss {before}");
    }
}

/// A linearly separable toy problem must be driven to 100% training accuracy
/// by the fine-tuning phase.
#[test]
fn finetune_solves_separable_classes() {
    use rand::Rng;
    let mut rng = purelab::seeds::rng(1234);
    let n_per = 8;
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for class in 0..5u8 {
        for _ in 0..n_per {
            let mut x = vec![0.1f64; 8];
            x[class as usize] = 3.0 + rng.gen_range(0.0..0.2);
            for v in x.iter_mut() {
                *v += rng.gen_range(-0.05..0.05);
            }
            rows.extend(x);
            labels.push(class);
        }
    }
    let inputs = Matrix::from_vec(40, 8, rows);
    let net = NetworkParams::new_seeded(8, &[6, 4], 5, 55).unwrap();
    let cfg = TrainConfig {
        max_epochs: 300,
        batch_size: 8,
        learning_rate: 0.05,
        seed: 77,
        phase: Phase::Finetune,
    };
    let (net, history) = train(net, &inputs, Some(&labels), &cfg).unwrap();
    assert!(history.last().unwrap().loss < 0.1, "loss = {}", history.last().unwrap().loss);
    let probs = net.classify_batch(&inputs).unwrap();
    for (i, &want) in labels.iter().enumerate() {
        let got = purelab::autoencoder::argmax(probs.row(i));
        assert_eq!(got as u8, want, "sample {i}");
    }
}
