//! Acceptance suite: one test per criterion, each pinned to its stated
//! tolerance. Run with `cargo test -p irle-cli --test acceptance`
//! (`-- --nocapture` shows one PASS line per criterion).

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use irle_core::analysis::{wasserstein_1d, LuminanceSampleSet};
use irle_core::gafm::{self, Conv2d, FeatureTensor, GafmParams};
use irle_core::image::{self, save_image, ImageTensor, ScalarMap};
use irle_core::losses::{
    iap_loss, iap_scale_k, rec_loss, stage1_loss, GradientPyramid, LossWeights,
};
use irle_core::pseudo_gt::{chroma_weight, generate_pseudo_gt, PseudoGtConfig};
use irle_core::spectral::{cfc_matrix, sisc_loss, SiscConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_image(
    rng: &mut ChaCha8Rng,
    h: usize,
    w: usize,
    c: usize,
    lo: f64,
    hi: f64,
) -> ImageTensor {
    let data = (0..h * w * c).map(|_| rng.gen_range(lo..=hi)).collect();
    ImageTensor::new(h, w, c, data)
}

fn circular_shift(img: &ImageTensor, dy: usize, dx: usize) -> ImageTensor {
    let (h, w, c) = (img.height(), img.width(), img.channels());
    let mut out = img.clone();
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                out.set(y, x, ch, img.get((y + dy) % h, (x + dx) % w, ch));
            }
        }
    }
    out
}

#[test]
fn criterion_01_sisc_shift_invariance() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let cfg = SiscConfig::default();
    for _ in 0..20 {
        let img = random_image(&mut rng, 64, 64, 3, 0.0, 1.0);
        for _ in 0..5 {
            let dy = rng.gen_range(0..64usize);
            let dx = rng.gen_range(0..64usize);
            let shifted = circular_shift(&img, dy, dx);
            let loss = sisc_loss(&img, &shifted, &cfg).unwrap().total;
            assert!(loss <= 1e-6, "shift ({dy},{dx}) loss {loss}");
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}");
    println!("ACCEPTANCE 01 sisc shift invariance: PASS ({elapsed:?})");
}

#[test]
fn criterion_02_closed_form_k_matches_grid_search() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    for _ in 0..100 {
        let r = random_image(&mut rng, 32, 32, 1, 0.05, 1.0);
        let i = random_image(&mut rng, 32, 32, 1, 0.0, 1.0);
        let k = iap_scale_k(&r, &i, 1e-8).unwrap();

        let energy = |kk: f64| -> f64 {
            r.data()
                .iter()
                .zip(i.data())
                .map(|(rv, iv)| {
                    let d = kk * rv - iv;
                    d * d
                })
                .sum()
        };
        let mut best = (f64::INFINITY, 0.0f64);
        for step in 0..=20_000u32 {
            let kk = step as f64 * 1e-4;
            let e = energy(kk);
            if e < best.0 {
                best = (e, kk);
            }
        }
        assert!((k - best.1).abs() <= 1e-4, "k={k} grid={}", best.1);
        assert!(energy(k) <= energy(k + 1e-3));
        assert!(energy(k) <= energy(k - 1e-3));
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}");
    println!("ACCEPTANCE 02 closed-form k optimality: PASS ({elapsed:?})");
}

#[test]
fn criterion_03_iap_scale_invariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let phi = GradientPyramid::default();
    for _ in 0..5 {
        let r = random_image(&mut rng, 64, 64, 3, 0.2, 1.0);
        let i = random_image(&mut rng, 64, 64, 3, 0.0, 1.0);
        let base = iap_loss(&r, &i, &phi, 1e-8).unwrap();
        for c in [0.1, 0.5, 2.0, 10.0] {
            let scaled = ImageTensor::new(64, 64, 3, r.data().iter().map(|v| c * v).collect());
            let loss = iap_loss(&scaled, &i, &phi, 1e-8).unwrap();
            assert!(
                (loss - base).abs() <= 1e-9,
                "c={c}: |{loss} - {base}| = {}",
                (loss - base).abs()
            );
        }
    }
    println!("ACCEPTANCE 03 iap scale invariance: PASS");
}

#[test]
fn criterion_04_cfc_structure() {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    for _ in 0..50 {
        let k = rng.gen_range(2..16usize);
        let e: Vec<f64> = (0..k).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let c = cfc_matrix(&e, 1e-8);
        for m in 0..k {
            for n in 0..k {
                assert_eq!(c.get(m, n), c.get(n, m), "symmetry at ({m},{n})");
            }
            assert!(c.get(m, m) >= 0.0);
        }
        assert!((c.trace() - k as f64).abs() < 1e-6, "trace {}", c.trace());
    }
    let zero = cfc_matrix(&[1.234; 8], 1e-8);
    assert!(zero.values().iter().all(|&v| v == 0.0));
    println!("ACCEPTANCE 04 cfc structure: PASS");
}

#[test]
fn criterion_05_pseudo_gt_contracts() {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let cfg = PseudoGtConfig::default();
    for fixture in 0..20 {
        // dark scene: random structure scaled well below mid-gray
        let img = random_image(&mut rng, 32, 32, 3, 0.01, 0.3);
        let bundle = generate_pseudo_gt(&img, &cfg).unwrap();

        // (a) shadow desaturation identity, pointwise
        let s_pseudo = image::saturation(&bundle.pseudo_gt);
        let s_bright = image::saturation(&bundle.bright_image);
        for y in 0..32 {
            for x in 0..32 {
                let expect = bundle.chroma_weight.get(y, x) * s_bright.get(y, x);
                assert!(
                    (s_pseudo.get(y, x) - expect).abs() <= 1e-9,
                    "fixture {fixture} at ({y},{x})"
                );
            }
        }

        // (c) brightening never loses mean luminance
        let in_mean = image::luminance(&img).mean();
        let out_mean = image::luminance(&bundle.pseudo_gt).mean();
        assert!(
            out_mean >= in_mean,
            "fixture {fixture}: {out_mean} < {in_mean}"
        );
    }

    // (b) chroma weight hits its bounds exactly at the band edges
    let y = ScalarMap::new(1, 4, vec![cfg.theta_min, cfg.theta_max, 0.0, 1.0]);
    let w = chroma_weight(&y, cfg.theta_min, cfg.theta_max);
    assert_eq!(w.get(0, 0), 0.0);
    assert_eq!(w.get(0, 1), 1.0);
    assert_eq!(w.get(0, 2), 0.0);
    assert_eq!(w.get(0, 3), 1.0);

    // (d) gray-world input yields unit gains; the stabilizer is dropped far
    // below the tolerance so the normalization itself is what is measured
    let gray_cfg = PseudoGtConfig {
        epsilon: 1e-12,
        ..PseudoGtConfig::default()
    };
    for _ in 0..5 {
        let gray = random_image(&mut rng, 16, 16, 1, 0.05, 0.9);
        let gray3 = ImageTensor::new(
            16,
            16,
            3,
            gray.data().iter().flat_map(|&v| [v, v, v]).collect(),
        );
        let bundle = generate_pseudo_gt(&gray3, &gray_cfg).unwrap();
        for g in bundle.gains {
            assert!((g - 1.0).abs() <= 1e-9, "gain {g}");
        }
    }
    println!("ACCEPTANCE 05 pseudo-gt contracts: PASS");
}

#[test]
fn criterion_06_gafm_identity_and_locality() {
    let mut rng = ChaCha8Rng::seed_from_u64(106);

    // identity: zero parameters reproduce the features bit-exactly
    for _ in 0..10 {
        let c = rng.gen_range(1..5usize);
        let f = FeatureTensor::new(
            c,
            16,
            16,
            (0..c * 256).map(|_| rng.gen_range(-3.0..=3.0)).collect(),
        );
        let g = ScalarMap::new(
            16,
            16,
            (0..256).map(|_| rng.gen_range(-1.0..=1.0)).collect(),
        );
        let out = gafm::gafm_modulate(&f, &g, &GafmParams::zeros(4, c)).unwrap();
        assert_eq!(out.data(), f.data(), "bit-exact identity");
    }

    // locality: a single-pixel gain change reaches at most Chebyshev radius 2
    let f = FeatureTensor::new(
        2,
        16,
        16,
        (0..512).map(|_| rng.gen_range(-2.0..=2.0)).collect(),
    );
    let g = ScalarMap::new(
        16,
        16,
        (0..256).map(|_| rng.gen_range(-1.0..=1.0)).collect(),
    );
    let params = GafmParams::seeded(3, 2, 61);
    let conv = Conv2d::from_rng(2, 2, 3, &mut rng);
    let base = gafm::gain_aware_block(&f, &g, &params, &conv).unwrap();
    for py in 0..16usize {
        for px in 0..16usize {
            let mut bumped_gain = g.clone();
            bumped_gain.set(py, px, g.get(py, px) + 0.5);
            let bumped = gafm::gain_aware_block(&f, &bumped_gain, &params, &conv).unwrap();
            for c in 0..2 {
                for y in 0..16 {
                    for x in 0..16 {
                        if base.get(c, y, x) != bumped.get(c, y, x) {
                            let dy = (y as i64 - py as i64).abs();
                            let dx = (x as i64 - px as i64).abs();
                            assert!(
                                dy <= 2 && dx <= 2,
                                "perturbing ({py},{px}) leaked to ({c},{y},{x})"
                            );
                        }
                    }
                }
            }
        }
    }
    println!("ACCEPTANCE 06 gafm identity and locality: PASS");
}

#[test]
fn criterion_07_pixel_shuffle_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    for _ in 0..50 {
        let c = rng.gen_range(1..4usize);
        let h = 2 * rng.gen_range(1..9usize);
        let w = 2 * rng.gen_range(1..9usize);
        let t = FeatureTensor::new(
            c,
            h,
            w,
            (0..c * h * w)
                .map(|_| rng.gen_range(-10.0..=10.0))
                .collect(),
        );
        let back = gafm::pixel_shuffle(&gafm::pixel_unshuffle(&t, 2).unwrap(), 2).unwrap();
        assert_eq!(back, t, "bit-exact round trip");
    }
    println!("ACCEPTANCE 07 pixel shuffle round trip: PASS");
}

/// Minimum mean transport cost over all permutation matchings.
fn enumerated_w1(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = f64::INFINITY;
    // Heap's algorithm
    fn heap(k: usize, perm: &mut Vec<usize>, xs: &[f64], ys: &[f64], best: &mut f64) {
        if k <= 1 {
            let cost: f64 = perm
                .iter()
                .enumerate()
                .map(|(i, &j)| (xs[i] - ys[j]).abs())
                .sum::<f64>()
                / xs.len() as f64;
            if cost < *best {
                *best = cost;
            }
            return;
        }
        for i in 0..k {
            heap(k - 1, perm, xs, ys, best);
            if k.is_multiple_of(2) {
                perm.swap(i, k - 1);
            } else {
                perm.swap(0, k - 1);
            }
        }
    }
    heap(n, &mut perm, xs, ys, &mut best);
    best
}

#[test]
fn criterion_08_wasserstein_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(108);

    let xs = LuminanceSampleSet::new(vec![0.3, 0.5, 0.71, 0.12], "xs");
    assert_eq!(wasserstein_1d(&xs, &xs).unwrap(), 0.0);

    let c = 0.125; // exactly representable so the translation is exact
    let shifted = LuminanceSampleSet::new(xs.samples.iter().map(|v| v + c).collect(), "sh");
    assert!((wasserstein_1d(&xs, &shifted).unwrap() - c).abs() <= 1e-12);

    for _ in 0..20 {
        let n = rng.gen_range(1..=6usize);
        let a: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..=1.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..=1.0)).collect();
        let got = wasserstein_1d(
            &LuminanceSampleSet::new(a.clone(), "a"),
            &LuminanceSampleSet::new(b.clone(), "b"),
        )
        .unwrap();
        let expect = enumerated_w1(&a, &b);
        assert!((got - expect).abs() <= 1e-9, "{got} vs {expect}");
    }
    println!("ACCEPTANCE 08 wasserstein oracle: PASS");
}

#[test]
fn criterion_09_retinex_reconstruction() {
    let mut rng = ChaCha8Rng::seed_from_u64(109);
    for _ in 0..20 {
        let r = random_image(&mut rng, 24, 24, 1, 0.2, 1.0);
        let i = random_image(&mut rng, 24, 24, 1, 0.0, 1.0);
        let l = ScalarMap::new(
            24,
            24,
            i.data()
                .iter()
                .zip(r.data())
                .map(|(iv, rv)| iv / rv)
                .collect(),
        );
        let loss = rec_loss(&r, &l, &i);
        assert!(loss <= 1e-12, "loss {loss}");
    }
    println!("ACCEPTANCE 09 retinex reconstruction: PASS");
}

#[test]
fn criterion_10_stage1_report_consistency() {
    let mut rng = ChaCha8Rng::seed_from_u64(110);
    let weights = LossWeights::default();
    let sisc_cfg = SiscConfig::default();
    let phi = GradientPyramid::default();
    for scene in 0..20 {
        let i_low = random_image(&mut rng, 32, 32, 3, 0.01, 0.35);
        let r1 = random_image(&mut rng, 32, 32, 3, 0.1, 1.0);
        let r2 = random_image(&mut rng, 32, 32, 3, 0.1, 1.0);
        let l = ScalarMap::new(
            32,
            32,
            (0..1024).map(|_| rng.gen_range(0.05..=1.0)).collect(),
        );
        let bundle = generate_pseudo_gt(&i_low, &PseudoGtConfig::default()).unwrap();
        let report = stage1_loss(&r1, &r2, &l, &i_low, &bundle, &weights, &sisc_cfg, &phi).unwrap();
        let recombined = weights.lambda_rec * report.rec
            + weights.lambda_guide * report.guide
            + weights.lambda_loc * report.color_local
            + weights.lambda_glo * report.color_global
            + weights.lambda_iap * report.iap
            + report.sisc;
        assert!(
            (report.total - recombined).abs() <= 1e-12,
            "scene {scene}: {} vs {recombined}",
            report.total
        );
    }

    // CLI replay: identical invocation, byte-identical JSON
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1100);
    let r_path = dir.path().join("r.png");
    let i_path = dir.path().join("i.png");
    save_image(&random_image(&mut rng, 48, 48, 3, 0.1, 1.0), &r_path).unwrap();
    save_image(&random_image(&mut rng, 48, 48, 3, 0.0, 0.3), &i_path).unwrap();
    let invoke = || {
        Command::new(env!("CARGO_BIN_EXE_irle"))
            .args([
                "losses",
                r_path.to_str().unwrap(),
                i_path.to_str().unwrap(),
                "--seed",
                "4",
            ])
            .output()
            .expect("binary runs")
    };
    let a = invoke();
    let b = invoke();
    assert!(a.status.success());
    assert!(!a.stdout.is_empty());
    assert_eq!(a.stdout, b.stdout, "replay must be byte-identical");
    println!("ACCEPTANCE 10 stage-1 report consistency: PASS");
}

#[test]
fn criterion_11_desk_scale_runtime() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(111);
    let img = random_image(&mut rng, 400, 600, 3, 0.0, 0.35);
    let input = dir.path().join("in.png");
    save_image(&img, &input).unwrap();
    let outdir = dir.path().join("out");

    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_irle"))
        .args([
            "pseudo-gt",
            input.to_str().unwrap(),
            "--out",
            outdir.to_str().unwrap(),
        ])
        .output()
        .expect("binary runs");
    let elapsed = start.elapsed();
    assert!(out.status.success());
    assert!(
        elapsed.as_secs_f64() < 2.0,
        "pseudo-gt on 400x600 took {elapsed:?}"
    );
    assert!(Path::new(&outdir).join("pseudo_gt.png").exists());
    println!("ACCEPTANCE 11 desk-scale runtime: PASS ({elapsed:?})");
}
