//! Acceptance suite: one test per release criterion, each printing a
//! PASS/SKIP line with the measured numbers.
//!
//! Criterion 2 (the bicubic baseline on Set5) needs the Set5 HR images,
//! which are not bundled; point `CDCN_SET5_DIR` at a directory of PNGs
//! (or place them under `data/Set5/`) to enable it.

use std::path::{Path, PathBuf};

use cdcn_core::degradation::{
    decompose_labels, degrade, gaussian8_widths, sfold_downsample, DegradationConfig,
};
use cdcn_core::image::Image;
use cdcn_core::kernel::{
    make_anisotropic_gaussian, make_isotropic_gaussian, AnisoKernelSpec, IsoKernelSpec,
};
use cdcn_core::metrics::{psnr_y, ssim_y, PSNR_CAP_DB};
use cdcn_core::model::net::{cdcn_forward_full, image_to_tensor};
use cdcn_core::model::{build_net, Ablation, ModelConfig, ModelParams, Theta};
use cdcn_core::nn::graph::backward;
use cdcn_core::protocol::{evaluate_gaussian8, BicubicBaseline, MetricReport};
use cdcn_core::train::{
    parse_config, sample_patch, train, train_step, KernelMode, LossToggles, TrainConfig,
    TrainState,
};
use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn textured_image(h: usize, w: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fy = rng.gen_range(0.08..0.35);
    let fx = rng.gen_range(0.08..0.35);
    Image::new(Array3::from_shape_fn((h, w, 3), |(i, j, c)| {
        (0.5 + 0.3 * ((i as f64 * fy + c as f64 * 0.5).sin() * (j as f64 * fx).cos())
            + 0.15 * rng.gen_range(-1.0_f64..1.0))
        .clamp(0.0, 1.0)
    }))
}

fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .canonicalize()
        .expect("workspace root")
}

#[test]
fn criterion_1_parameter_counts_match_published_sizes() {
    let variant = |g, b| ModelConfig {
        num_groups: g,
        blocks_per_group: b,
        ..ModelConfig::new(4)
    };
    let table = [
        ("G5B5", variant(5, 5), 8.0e6),
        ("G4B8", variant(4, 8), 9.0e6),
        ("G5B10", variant(5, 10), 11.7e6),
        ("G8B8", variant(8, 8), 14.1e6),
        ("G10B10", variant(10, 10), 19.7e6),
    ];
    let mut counts = std::collections::HashMap::new();
    for (name, cfg, expected) in table {
        let count = cdcn_core::model::param_count(&cfg).unwrap() as f64;
        let rel = (count - expected).abs() / expected;
        assert!(
            rel <= 0.08,
            "{name}: {count:.0} vs {expected:.0} ({:.2}% off)",
            rel * 100.0
        );
        counts.insert(name, count);
    }
    let margin_g = counts["G10B10"] - counts["G5B10"];
    assert!(
        (margin_g - 8.0e6).abs() / 8.0e6 <= 0.08,
        "G10B10-G5B10 margin {margin_g:.0}"
    );
    let margin_b = counts["G8B8"] - counts["G4B8"];
    assert!(
        (margin_b - 5.1e6).abs() / 5.1e6 <= 0.08,
        "G8B8-G4B8 margin {margin_b:.0}"
    );
    println!(
        "criterion 1: PASS - G5B5 {:.2}M, G4B8 {:.2}M, G5B10 {:.2}M, G8B8 {:.2}M, G10B10 {:.2}M (all within 8%)",
        counts["G5B5"] / 1e6,
        counts["G4B8"] / 1e6,
        counts["G5B10"] / 1e6,
        counts["G8B8"] / 1e6,
        counts["G10B10"] / 1e6
    );
}

fn set5_dir() -> Option<PathBuf> {
    if let Ok(dir) = std::env::var("CDCN_SET5_DIR") {
        let p = PathBuf::from(dir);
        if p.is_dir() {
            return Some(p);
        }
    }
    let bundled = workspace_root().join("data/Set5");
    bundled.is_dir().then_some(bundled)
}

#[test]
fn criterion_2_bicubic_baseline_on_set5() {
    let Some(dir) = set5_dir() else {
        println!(
            "criterion 2: SKIP - Set5 HR images not present; set CDCN_SET5_DIR or add data/Set5/*.png (see README)"
        );
        return;
    };
    let x2 = evaluate_gaussian8(&BicubicBaseline, &dir, 2, 2).unwrap();
    assert!(
        (x2.mean_psnr - 28.82).abs() <= 0.3,
        "x2 mean PSNR {:.3} outside 28.82 +/- 0.3",
        x2.mean_psnr
    );
    assert!(
        (x2.mean_ssim - 0.8577).abs() <= 0.01,
        "x2 mean SSIM {:.4} outside 0.8577 +/- 0.01",
        x2.mean_ssim
    );
    let x4 = evaluate_gaussian8(&BicubicBaseline, &dir, 4, 2).unwrap();
    assert!(
        (x4.mean_psnr - 24.57).abs() <= 0.3,
        "x4 mean PSNR {:.3} outside 24.57 +/- 0.3",
        x4.mean_psnr
    );
    println!(
        "criterion 2: PASS - Set5 bicubic x2 {:.2} dB / {:.4} SSIM, x4 {:.2} dB",
        x2.mean_psnr, x2.mean_ssim, x4.mean_psnr
    );
}

#[test]
fn criterion_3_decomposition_identity_holds_for_random_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let mut max_err = 0.0_f64;
    for trial in 0..100 {
        let scale = [2, 3, 4][trial % 3];
        let side = scale * rng.gen_range(10..16);
        let hr = textured_image(side, side, 3000 + trial as u64);
        let kernel = if trial % 2 == 0 {
            let width = rng.gen_range(0.2..4.0);
            make_isotropic_gaussian(IsoKernelSpec::with_size(width, 13)).unwrap()
        } else {
            let spec = AnisoKernelSpec::sample(rng.gen(), 0.25, 11);
            make_anisotropic_gaussian(spec).unwrap()
        };
        let cfg = DegradationConfig::new(scale);
        let triple = decompose_labels(&hr, &kernel, &cfg).unwrap();
        max_err = max_err.max(triple.structure.add(&triple.detail).max_abs_diff(&hr));
        let lr = degrade(&hr, &kernel, &cfg).unwrap();
        assert!(lr == triple.lr, "trial {trial}: degrade != decomposed lr");
    }
    assert!(max_err < 1e-6, "reassembly error {max_err}");
    println!(
        "criterion 3: PASS - 100 random (image, kernel) pairs: max |structure+detail-hr| = {max_err:.2e}, degrade == lr bit-exactly"
    );
}

#[test]
fn criterion_4_kernel_properties() {
    // Normalization across constructors and specs.
    for width in [0.2, 0.9, 1.8, 3.2] {
        let k = make_isotropic_gaussian(IsoKernelSpec::new(width)).unwrap();
        assert!((k.sum() - 1.0).abs() < 1e-6);
        assert!(k.data().iter().all(|v| *v >= 0.0));
    }
    for seed in 0..8 {
        let k = make_anisotropic_gaussian(AnisoKernelSpec::sample(seed, 0.25, 11)).unwrap();
        assert!((k.sum() - 1.0).abs() < 1e-6);
        assert!(k.data().iter().all(|v| *v >= 0.0));
    }
    for scale in [1, 2, 3, 4] {
        let k = cdcn_core::kernel::make_bicubic_kernel(scale, -0.5).unwrap();
        assert!((k.sum() - 1.0).abs() < 1e-6);
    }

    // Four-fold symmetry of isotropic kernels.
    let k = make_isotropic_gaussian(IsoKernelSpec::new(1.4)).unwrap();
    let n = k.size();
    for i in 0..n {
        for j in 0..n {
            assert_eq!(k.data()[[i, j]], k.data()[[n - 1 - i, j]]);
            assert_eq!(k.data()[[i, j]], k.data()[[i, n - 1 - j]]);
        }
    }

    // Anisotropic with equal axes and no noise equals isotropic.
    for (sigma, theta) in [(0.8, 0.3), (2.0, -1.2), (4.5, 2.8)] {
        let aniso =
            make_anisotropic_gaussian(AnisoKernelSpec::new(sigma, sigma, theta, 0.0, 0)).unwrap();
        let iso = make_isotropic_gaussian(IsoKernelSpec::with_size(sigma, 11)).unwrap();
        let diff = aniso
            .data()
            .iter()
            .zip(iso.data().iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0_f64, f64::max);
        assert!(diff < 1e-9, "sigma {sigma}: diff {diff}");
    }

    // The s-fold downsampler picks exactly the upper-left pixel.
    for s in [2usize, 3] {
        let (h, w) = (s * 3, s * 2);
        let img = Image::new(Array3::from_shape_fn((h, w, 1), |(i, j, _)| {
            (i * w + j) as f64
        }));
        let out = sfold_downsample(&img, s).unwrap();
        for i in 0..h / s {
            for j in 0..w / s {
                assert_eq!(out.data()[[i, j, 0]], (i * s * w + j * s) as f64);
            }
        }
    }
    println!("criterion 4: PASS - kernel normalization, symmetry, aniso-iso agreement (1e-9), s-fold subsampling");
}

#[test]
fn criterion_5_analytic_gradients_match_finite_differences() {
    let mut model_cfg = ModelConfig::tiny(2, 4, 1, 1);
    model_cfg.ca_reduction = 4;
    let mut train_cfg = TrainConfig::desk_defaults(2).unwrap();
    train_cfg.patch_size = 8;
    train_cfg.batch_size = 1;

    let params = ModelParams::init(model_cfg, 55).unwrap();
    let net = build_net(&model_cfg).unwrap();
    let pool = vec![textured_image(48, 48, 5000)];
    let mut rng = ChaCha8Rng::seed_from_u64(56);
    let sample = sample_patch(&pool, &train_cfg, &mut rng).unwrap();

    let lr_t = image_to_tensor(&sample.triple.lr);
    let targets = [
        (net.nodes.s_hat.unwrap(), image_to_tensor(&sample.triple.structure)),
        (net.nodes.d_hat.unwrap(), image_to_tensor(&sample.triple.detail)),
        (net.nodes.sr, image_to_tensor(&sample.hr)),
    ];

    let loss_of = |p: &ModelParams| -> f64 {
        let values = cdcn_forward_full(&net, p, lr_t.clone());
        targets
            .iter()
            .map(|(node, t)| {
                let y = values[*node].as_ref().unwrap();
                y.iter().zip(t.iter()).map(|(a, b)| (a - b).abs()).sum::<f64>() / t.len() as f64
            })
            .sum()
    };

    // Analytic gradient of the summed three-term loss.
    let values = cdcn_forward_full(&net, &params, lr_t.clone());
    let seeds = targets
        .iter()
        .map(|(node, t)| {
            let y = values[*node].as_ref().unwrap();
            let n = t.len() as f64;
            let mut seed = Array3::zeros(y.dim());
            ndarray::Zip::from(&mut seed).and(y).and(t).for_each(|s, &a, &b| {
                *s = if a > b {
                    1.0 / n
                } else if a < b {
                    -1.0 / n
                } else {
                    0.0
                };
            });
            (*node, seed)
        })
        .collect();
    let grads = backward(&net.graph, params.values(), &values, seeds);

    // Sampled central differences, stratified over every tensor.
    let mut fd_rng = ChaCha8Rng::seed_from_u64(57);
    let h = 1e-6;
    let mut checked = 0usize;
    let mut failed = 0usize;
    let mut reached = (false, false, false);
    for (pid, spec) in net.layout.iter().enumerate() {
        let g = grads[pid].as_ref().expect("all parameters reachable");
        let n = spec.len();
        let samples: Vec<usize> = (0..3.min(n)).map(|_| fd_rng.gen_range(0..n)).collect();
        for flat in samples {
            let mut plus = params.clone();
            plus.values_mut()[pid].as_slice_mut().unwrap()[flat] += h;
            let mut minus = params.clone();
            minus.values_mut()[pid].as_slice_mut().unwrap()[flat] -= h;
            let fd = (loss_of(&plus) - loss_of(&minus)) / (2.0 * h);
            let an = g.as_slice().unwrap()[flat];
            let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-8);
            checked += 1;
            if rel >= 1e-3 {
                failed += 1;
            }
        }
        let nonzero = g.iter().any(|v| v.abs() > 1e-14);
        match spec.theta {
            Theta::Structure => reached.0 |= nonzero,
            Theta::Detail => reached.1 |= nonzero,
            Theta::Fusion => reached.2 |= nonzero,
        }
    }
    let pass_rate = 1.0 - failed as f64 / checked as f64;
    assert!(
        pass_rate >= 0.99,
        "{failed}/{checked} sampled parameters disagree beyond 1e-3"
    );
    assert!(
        reached.0 && reached.1 && reached.2,
        "gradient coverage: {reached:?}"
    );

    // Cross-path sensitivity: the structure estimate must move when a
    // detail-path weight moves.
    let s_hat = net.nodes.s_hat.unwrap();
    let probe = Array3::ones(values[s_hat].as_ref().unwrap().dim());
    let cross = backward(&net.graph, params.values(), &values, vec![(s_hat, probe)]);
    let cross_nonzero = net
        .layout
        .iter()
        .zip(&cross)
        .filter(|(spec, _)| spec.theta == Theta::Detail)
        .any(|(_, g)| g.as_ref().is_some_and(|g| g.iter().any(|v| v.abs() > 1e-12)));
    assert!(cross_nonzero, "structure output is blind to detail-path weights");

    println!(
        "criterion 5: PASS - {checked} sampled parameters, {:.2}% within 1e-3 of central differences; all partitions reached; cross-path sensitivity nonzero",
        pass_rate * 100.0
    );
}

#[test]
fn criterion_6_overfit_smoke_test() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    std::fs::create_dir(&data).unwrap();
    textured_image(256, 256, 6000)
        .save_png(&data.join("hr.png"))
        .unwrap();

    let mut cfg = TrainConfig::desk_defaults(2).unwrap();
    cfg.patch_size = 16;
    cfg.batch_size = 4;
    cfg.total_iters = 500;
    cfg.lr_halve_every = 1_000_000;
    cfg.width_range = (2.0, 2.0); // one fixed kernel
    cfg.checkpoint_every = 1_000_000;
    let model = ModelConfig::tiny(2, 16, 1, 2);

    let summary = train(&cfg, model, &data, &dir.path().join("run")).unwrap();
    let ratio = summary.final_loss / summary.first_loss;
    assert!(
        ratio < 0.10,
        "loss only fell to {:.1}% of iteration 1 ({:.4} -> {:.4})",
        ratio * 100.0,
        summary.first_loss,
        summary.final_loss
    );
    println!(
        "criterion 6: PASS - 500 iterations: loss {:.4} -> {:.4} ({:.1}% of iteration 1)",
        summary.first_loss,
        summary.final_loss,
        ratio * 100.0
    );
}

#[test]
fn criterion_7_ablation_variants_wire_up_and_train() {
    let pool = vec![textured_image(64, 64, 7000)];

    // The five decomposition/constraint variants.
    let table2: [(&str, Ablation, LossToggles); 5] = [
        ("model1 (single path)", Ablation::NoDecomposition, LossToggles::sr_only()),
        ("model2 (no constraints)", Ablation::Full, LossToggles::sr_only()),
        (
            "model3 (no structure constraint)",
            Ablation::Full,
            LossToggles {
                structure: false,
                detail: true,
                sr: true,
            },
        ),
        (
            "model4 (no detail constraint)",
            Ablation::Full,
            LossToggles {
                structure: true,
                detail: false,
                sr: true,
            },
        ),
        ("model5 (full)", Ablation::Full, LossToggles::ALL),
    ];
    // The four block variants compared against the full collaboration block.
    let table3 = [
        Ablation::PlainBlock,
        Ablation::NoCollab,
        Ablation::FuseConcat,
        Ablation::FuseAdd,
    ];

    let mut cases: Vec<(String, Ablation, LossToggles)> = table2
        .into_iter()
        .map(|(n, a, t)| (n.to_string(), a, t))
        .collect();
    cases.extend(
        table3
            .into_iter()
            .map(|a| (format!("block variant {}", a.name()), a, LossToggles::ALL)),
    );

    for (name, ablation, toggles) in cases {
        let mut model = ModelConfig::tiny(2, 8, 1, 1);
        model.ablation = ablation;
        let mut cfg = TrainConfig::desk_defaults(2).unwrap();
        cfg.patch_size = 8;
        cfg.batch_size = 2;
        cfg.loss_toggles = toggles;

        let mut state = TrainState::new(model, &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let batch: Vec<_> = (0..2)
            .map(|_| sample_patch(&pool, &cfg, &mut rng).unwrap())
            .collect();
        let losses = train_step(&mut state, &batch, &cfg).unwrap();
        assert!(losses.total.is_finite(), "{name}: non-finite loss");

        let out = cdcn_core::model::cdcn_forward(&batch[0].triple.lr, &state.params).unwrap();
        if ablation == Ablation::NoDecomposition {
            assert!(out.structure_hat.is_none() && out.detail_hat.is_none());
        } else {
            assert!(out.structure_hat.is_some() && out.detail_hat.is_some());
        }
    }
    println!("criterion 7: PASS - 5 constraint variants + 4 block variants construct, train one step, and stay finite");
}

#[test]
fn criterion_8_full_scale_recipe_is_shipped_verbatim() {
    // The published benchmark numbers need 5e5-iteration training on
    // thousands of HR images; that is out of desk scope. The shipped
    // configs must instead encode the published hyperparameters exactly.
    let root = workspace_root();
    for scale in [2usize, 3, 4] {
        let path = root.join(format!("configs/train_full_x{scale}.cfg"));
        let text = std::fs::read_to_string(&path).unwrap();
        let (train_cfg, model_cfg) = parse_config(&text).unwrap();
        assert_eq!(train_cfg.scale, scale);
        assert_eq!(train_cfg.total_iters, 500_000);
        assert_eq!(train_cfg.lr_halve_every, 100_000);
        assert_eq!(train_cfg.batch_size, 16);
        assert_eq!(train_cfg.patch_size, 64);
        assert_eq!(train_cfg.lr_init, 2e-4);
        assert_eq!(train_cfg.kernel_mode, KernelMode::Isotropic);
        let expected_range = cdcn_core::degradation::training_width_range(scale).unwrap();
        assert_eq!(train_cfg.width_range, expected_range);
        assert_eq!(train_cfg.loss_toggles, LossToggles::ALL);
        assert_eq!(model_cfg.num_groups, 5);
        assert_eq!(model_cfg.blocks_per_group, 10);
        assert_eq!(model_cfg.channels, 64);
        train_cfg.validate(&model_cfg).unwrap();
    }
    for scale in [2usize, 4] {
        let path = root.join(format!("configs/train_full_aniso_x{scale}.cfg"));
        let (train_cfg, model_cfg) = parse_config(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(train_cfg.kernel_mode, KernelMode::Anisotropic);
        assert_eq!(train_cfg.total_iters, 500_000);
        train_cfg.validate(&model_cfg).unwrap();
    }

    // Optimizer and kernel-protocol constants backing the recipes.
    assert_eq!(cdcn_core::train::adam::BETA1, 0.9);
    assert_eq!(cdcn_core::train::adam::BETA2, 0.99);
    assert_eq!(IsoKernelSpec::new(1.0).size, 21);
    assert_eq!(AnisoKernelSpec::sample(0, 0.25, 11).size, 11);
    assert_eq!(AnisoKernelSpec::LAMBDA_RANGE, (0.6, 5.0));
    assert_eq!(AnisoKernelSpec::MAX_NOISE, 0.25);
    let w4 = gaussian8_widths(4).unwrap();
    assert_eq!((w4[0], w4[7]), (1.80, 3.20));

    println!(
        "criterion 8: PASS - full-scale recipes ship the published hyperparameters verbatim; benchmark tables are documented as out of desk scope"
    );
}

#[test]
fn criterion_9_metric_oracles() {
    // Uniform one-LSB luma difference.
    let a = Image::constant(32, 32, 1, 0.4);
    let b = Image::constant(32, 32, 1, 0.4 + 1.0 / 255.0);
    let psnr = psnr_y(&a, &b, 0).unwrap();
    assert!(
        (psnr - 48.13).abs() <= 0.01,
        "1/255 difference scored {psnr:.4} dB"
    );

    // Self-similarity.
    let img = textured_image(24, 24, 9000);
    assert_eq!(psnr_y(&img, &img, 0).unwrap(), PSNR_CAP_DB);
    assert!((ssim_y(&img, &img).unwrap() - 1.0).abs() < 1e-12);

    // Report aggregates recompute from the saved rows alone.
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("set");
    std::fs::create_dir(&data).unwrap();
    for i in 0..3 {
        textured_image(40, 40, 9100 + i)
            .save_png(&data.join(format!("img{i}.png")))
            .unwrap();
    }
    let report = evaluate_gaussian8(&BicubicBaseline, &data, 2, 1).unwrap();
    let path = dir.path().join("report.csv");
    report.save(&path).unwrap();
    let loaded = MetricReport::load(&path).unwrap();
    assert_eq!(loaded.rows.len(), 3 * 8);
    let mean_psnr: f64 =
        loaded.rows.iter().map(|r| r.psnr).sum::<f64>() / loaded.rows.len() as f64;
    let mean_ssim: f64 =
        loaded.rows.iter().map(|r| r.ssim).sum::<f64>() / loaded.rows.len() as f64;
    assert_eq!(mean_psnr, loaded.mean_psnr);
    assert_eq!(mean_ssim, loaded.mean_ssim);

    println!(
        "criterion 9: PASS - 1/255 difference = {psnr:.2} dB, ssim(a,a) = 1, report aggregates recompute exactly"
    );
}
