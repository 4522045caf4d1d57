//! End-to-end acceptance checks. Runs without the test harness so that each
//! check prints one PASS/FAIL line; exits non-zero if any check fails.

use std::fs;
use std::time::Instant;

use mlsr_autodiff::{decode_checkpoint, encode_checkpoint, load_into, read_checkpoint, write_checkpoint, Adam, GradCheckConfig, Graph};
use mlsr_core::baselines::*;
use mlsr_core::experiment::*;
use mlsr_core::metrics::*;
use mlsr_core::net::*;
use mlsr_core::spectral::*;
use mlsr_core::rng_from_seed;
use rand::Rng;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn gradient_correctness() -> Check {
    let t = Instant::now();
    let cfg = GradCheckConfig { eps: 1e-6, tol: 1e-4, coords_per_param: 32, abs_floor: 1e-8, seed: 1 };
    let check = end_to_end_grad_check(1, &cfg).map_err(err)?;
    let secs = t.elapsed().as_secs_f64();
    let (r, theta, phi) = (&check.report, check.theta_coords, check.phi_coords);
    let msg = format!(
        "{} coords ({theta} theta, {phi} phi, {} skipped at kinks), max rel err {:.2e}, {secs:.1} s",
        theta + phi,
        r.skipped_nonsmooth,
        r.max_rel_error
    );
    ensure(r.max_rel_error < 1e-4, &msg)?;
    ensure(theta + phi >= 256 && theta > 0 && phi > 0, &msg)?;
    ensure(secs < 60.0, &msg)?;
    Ok(msg)
}

fn hypernetwork_gradient_flow() -> Check {
    let mut model = build_variant::<f64>(&ModelConfig::desk(), 3).map_err(err)?;
    let hr = generate_synthetic_scene(&SceneSpec { height: 16, width: 16, ..SceneSpec::desk(3) }).map_err(err)?;
    let rgb = synthesize_rgb(&hr, &RgbResponses::default()).map_err(err)?;
    let sample = TrainingSample::from_hr(&hr, &rgb, 2, &sample_bands_equidistant(31, 5).map_err(err)?).map_err(err)?;
    let inputs = NetInputs::<f64>::from_samples(&[&sample]).map_err(err)?;
    let mut g = Graph::new();
    let o = forward_graph(&mut g, &model.params, &model.config, &inputs).map_err(err)?;
    let target = g.input(target_tensor(&[&sample]).map_err(err)?);
    let loss = g.l1_loss(o.out, target).map_err(err)?;
    g.backward(loss).map_err(err)?;
    g.accumulate_param_grads(&mut model.params);
    let ids: Vec<_> = model.params.ids_with_prefix("phi.").collect();
    for &id in &ids {
        ensure(model.params.grad(id).iter().any(|g| g.abs() > 0.0), format!("{} has an all-zero gradient", model.params.name(id)))?;
    }
    ensure(ids.len() == 8, format!("expected 8 hypernetwork tensors, found {}", ids.len()))?;
    Ok(format!("all {} hypernetwork tensors receive gradient", ids.len()))
}

fn arbitrary_io_contract() -> Check {
    let dir = tempfile::tempdir().map_err(err)?;
    let cfg = ModelConfig::desk();
    let ck = dir.path().join("model.mlsp");
    write_checkpoint(&build_variant::<f32>(&cfg, 5).map_err(err)?.params, &ck).map_err(err)?;
    let model = load_model::<f32>(&cfg, &ck).map_err(err)?;
    let hr = generate_synthetic_scene(&SceneSpec { height: 16, width: 16, ..SceneSpec::desk(6) }).map_err(err)?;
    let rgb = synthesize_rgb(&hr, &RgbResponses::default()).map_err(err)?;
    let mut lists: Vec<Vec<usize>> = (5..=9).map(|k| sample_bands_equidistant(31, k).unwrap()).collect();
    lists.extend(RANDOM_BAND_TABLE.iter().map(|l| l.to_vec()));
    let mut cases = 0;
    for idx in &lists {
        let sample = TrainingSample::from_hr(&hr, &rgb, 2, idx).map_err(err)?;
        let (out, _) = mlsr_forward(&sample, &model).map_err(err)?;
        ensure((out.height(), out.width(), out.n_bands()) == (16, 16, 31), format!("bad output shape for inputs {idx:?}"))?;
        ensure(out.bands() == hr.bands(), "output bands differ from the request")?;
        ensure(out.data().iter().all(|v| v.is_finite()), "non-finite output")?;
        cases += 1;
    }
    let lr = downsample_spatial(&hr, 2).map_err(err)?.select_bands(&lists[0]).map_err(err)?;
    let lr_rgb = downsample_spatial(&rgb, 2).map_err(err)?;
    for nm in [400.0, 437.3, 512.0, 589.9, 655.5, 700.0] {
        let band = BandDescriptor::narrow(nm);
        let inputs = NetInputs::<f32>::new(&lr, &lr_rgb, &rgb, &[band]).map_err(err)?;
        let t = model.predict(&inputs).map_err(err)?;
        ensure(t.shape() == [1, 1, 16, 16], format!("single-band request at {nm} nm gave shape {:?}", t.shape()))?;
        cases += 1;
    }
    Ok(format!("{cases} input/output settings through one checkpoint"))
}

fn overfit_smoke() -> Check {
    let t = Instant::now();
    let cfg = ExperimentConfig::desk();
    let scenes = SceneSet::load(&cfg.dataset.train).map_err(err)?;
    let mut rng = rng_from_seed(0);
    let idx = sample_bands_equidistant(31, 5).map_err(err)?;
    let patches: Vec<TrainingSample> = (0..4)
        .map(|i| crop_patch_pair(&scenes.hsi[i], &scenes.rgb[i], cfg.train.patch_lr, cfg.scale, &idx, false, &mut rng))
        .collect::<Result<_, _>>()
        .map_err(err)?;
    let mut model = build_variant::<f32>(&cfg.model, 0).map_err(err)?;
    let lr = cfg.train.lr_initial;
    let mut adam = Adam::new(lr);
    let mut first = f64::NAN;
    let mut last = f64::NAN;
    for step in 0..500 {
        last = train_step(&mut model, &mut adam, patches.clone(), lr).map_err(err)?;
        if step == 0 {
            first = last;
        }
    }
    let mut psnr = 0.0;
    for p in &patches {
        let (out, _) = mlsr_forward(p, &model).map_err(err)?;
        psnr += cube_metrics(&out, &p.hr_hsi_target).map_err(err)?.mean_psnr_db / patches.len() as f64;
    }
    let secs = t.elapsed().as_secs_f64();
    let msg = format!("L1 {first:.4} -> {last:.5} (ratio {:.4}), training PSNR {psnr:.2} dB, {secs:.0} s", last / first);
    ensure(last <= 0.05 * first && psnr > 35.0 && secs < 600.0, &msg)?;
    Ok(msg)
}

fn interpolation_oracles() -> Check {
    let x = vec![400.0, 433.0, 520.0, 610.0, 700.0];
    let s = SpectrumSamples::new(x.clone(), x.iter().map(|l| 0.002 * l - 0.3).collect()).map_err(err)?;
    let q: Vec<f64> = (0..=300).map(|i| 400.0 + i as f64).collect();
    let lin = interp_linear(&s, &q).iter().zip(&q).map(|(v, l)| (v - (0.002 * l - 0.3)).abs()).fold(0.0, f64::max);
    ensure(lin <= 1e-12, format!("linear error {lin:e} on an affine spectrum"))?;

    let f = |l: f64| {
        let u = (l - 550.0) / 150.0;
        0.4 + 0.3 * u - 0.2 * u * u + 0.25 * u * u * u
    };
    let s = SpectrumSamples::new(x.clone(), x.iter().map(|&l| f(l)).collect()).map_err(err)?;
    let cub = interp_cubic(&s, &q).iter().zip(&q).map(|(v, &l)| (v - f(l)).abs()).fold(0.0, f64::max);
    ensure(cub <= 1e-6, format!("cubic error {cub:e} on a cubic spectrum"))?;

    let mut rng = rng_from_seed(8);
    let mut c2 = 0f64;
    for _ in 0..20 {
        let x: Vec<f64> = (0..9).map(|i| 400.0 + 37.5 * i as f64).collect();
        let y: Vec<f64> = (0..9).map(|_| rng.gen()).collect();
        let sp = CubicSplineCoefficients::fit(&SpectrumSamples::new(x.clone(), y).map_err(err)?);
        for i in 1..8 {
            let [a, b, c, d] = sp.coeffs[i - 1];
            let h = x[i] - x[i - 1];
            let left = [a + h * (b + h * (c + h * d)), b + h * (2.0 * c + 3.0 * h * d), 2.0 * c + 6.0 * h * d];
            let [a2, b2, c2r, _] = sp.coeffs[i];
            let right = [a2, b2, 2.0 * c2r];
            for k in 0..3 {
                c2 = c2.max((left[k] - right[k]).abs());
            }
        }
    }
    ensure(c2 <= 1e-9, format!("derivative jump {c2:e} at a knot"))?;
    Ok(format!("linear {lin:.1e}, cubic {cub:.1e}, C2 jump {c2:.1e}"))
}

fn metric_unit_values() -> Check {
    let mut rng = rng_from_seed(2);
    let target: Vec<f64> = (0..32 * 32).map(|_| rng.gen_range(0.1..0.9)).collect();
    let pred: Vec<f64> = target.iter().enumerate().map(|(i, v)| if i % 2 == 0 { v + 0.1 } else { v - 0.1 }).collect();
    let p = psnr(&pred, &target, 1.0).map_err(err)?;
    ensure((p - 20.0).abs() <= 1e-9, format!("PSNR {p}"))?;
    let same = ssim(&target, &target, 32, 32).map_err(err)?;
    ensure((same - 1.0).abs() <= 1e-12, format!("SSIM(x,x) = {same}"))?;
    let other: Vec<f64> = (0..32 * 32).map(|_| rng.gen()).collect();
    let (ab, ba) = (ssim(&target, &other, 32, 32).map_err(err)?, ssim(&other, &target, 32, 32).map_err(err)?);
    ensure((ab - ba).abs() <= 1e-12, format!("SSIM asymmetric: {ab} vs {ba}"))?;
    Ok(format!("PSNR {p:.12} dB, SSIM(x,x) {same}, |SSIM(a,b)-SSIM(b,a)| {:.1e}", (ab - ba).abs()))
}

fn determinism() -> Check {
    let scene = SceneSpec { height: 32, width: 32, ..SceneSpec::desk(300) };
    let cfg = ExperimentConfig {
        dataset: DatasetSpec {
            train: CubeSource::Synthetic { count: 3, template: scene.clone() },
            eval: CubeSource::Synthetic { count: 1, template: SceneSpec { seed: 950, ..scene } },
        },
        train: TrainConfig { patch_lr: 8, batch_size: 2, epochs: 2, steps_per_epoch: 2, ..TrainConfig::default() },
        precision: Precision::F64,
        deterministic: true,
        seed: 17,
        ..ExperimentConfig::desk()
    };
    let a = tempfile::tempdir().map_err(err)?;
    let b = tempfile::tempdir().map_err(err)?;
    train(&cfg, a.path()).map_err(err)?;
    train(&cfg, b.path()).map_err(err)?;
    let mut files = vec!["manifest.json".to_string(), "checkpoint.mlsp".to_string()];
    let mut names: Vec<String> = fs::read_dir(a.path())
        .map_err(err)?
        .filter_map(|e| e.ok()?.file_name().into_string().ok())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    names.sort();
    files.extend(names);
    for f in &files {
        let (x, y) = (fs::read(a.path().join(f)).map_err(err)?, fs::read(b.path().join(f)).map_err(err)?);
        ensure(x == y, format!("{f} differs between runs"))?;
    }
    Ok(format!("{} artifacts bit-identical across two 64-bit runs", files.len()))
}

fn band_sampling() -> Check {
    let seven = sample_bands_equidistant(31, 7).map_err(err)?;
    ensure(seven == [0, 5, 10, 15, 20, 25, 30], format!("k=7 gave {seven:?}"))?;
    let five = sample_bands_equidistant(31, 5).map_err(err)?;
    ensure([0, 7, 30].iter().all(|i| five.contains(i)), format!("k=5 gave {five:?}"))?;
    Ok(format!("k=7 {seven:?}, k=5 {five:?}"))
}

/// Trained models from the flatness check, reused for the extrapolation check.
struct Trained {
    mlsr: MlsrModel<f32>,
}

fn flatness_trend(trained: &mut Option<Trained>) -> Check {
    let t = Instant::now();
    let mut flat_wins = 0;
    let mut lines = Vec::new();
    let mut all_beat_cubic = true;
    let seeds = [0u64, 1, 2];
    for &seed in &seeds {
        let mut cfg = ExperimentConfig::desk();
        cfg.seed = seed;
        let scenes = SceneSet::load(&cfg.dataset.train).map_err(err)?;
        let eval = SceneSet::load(&cfg.dataset.eval).map_err(err)?;
        let (init_seed, data_seed) = derived_seeds(seed);

        let subs = train_subdatasets(&cfg.band_mode, 31).map_err(err)?;
        let mut mlsr = build_variant::<f32>(&cfg.model, init_seed).map_err(err)?;
        fit(&mut mlsr, &scenes, &subs, &cfg.train, cfg.scale, &mut rng_from_seed(data_seed)).map_err(err)?;

        let input = sample_bands_equidistant(31, 5).map_err(err)?;
        let grid = scenes.hsi[0].bands().clone();
        let mut two = TwoStageTrainer { net: build_plain_cnn::<f32>(&cfg.model, &grid, init_seed).map_err(err)?, method: InterpMethod::Cubic };
        let fixed = [SubDataset::Fixed(input.clone())];
        fit(&mut two, &scenes, &fixed, &cfg.train, cfg.scale, &mut rng_from_seed(data_seed)).map_err(err)?;

        let cubes = EvalCubes::new(&eval, cfg.scale).map_err(err)?;
        let setting = BandSetting { label: "k5".into(), input: input.clone(), output: (0..31).collect() };
        let m = cubes.evaluate(&MlsrPredictor(&mlsr), &setting, &cfg.tiling).map_err(err)?;
        let b = cubes.evaluate(&TwoStagePredictor { net: &two.net, method: InterpMethod::Cubic }, &setting, &cfg.tiling).map_err(err)?;
        let c = cubes.evaluate(&Stage1Predictor(InterpMethod::Cubic), &setting, &cfg.tiling).map_err(err)?;
        let non: Vec<usize> = (0..31).filter(|i| !input.contains(i)).collect();
        let (mn, cn) = (m.subset(&non).mean_psnr_db, c.subset(&non).mean_psnr_db);
        if m.flatness_std_db <= b.flatness_std_db {
            flat_wins += 1;
        }
        all_beat_cubic &= mn > cn;
        lines.push(format!(
            "seed {seed}: flatness {:.2} vs {:.2} dB, non-input PSNR {mn:.2} vs cubic {cn:.2} dB",
            m.flatness_std_db, b.flatness_std_db
        ));
        if trained.is_none() {
            *trained = Some(Trained { mlsr });
        }
    }
    let secs = t.elapsed().as_secs_f64();
    let msg = format!("{}; {secs:.0} s", lines.join("; "));
    ensure(flat_wins >= 2 && all_beat_cubic && secs < 7200.0, &msg)?;
    Ok(msg)
}

fn ablation_runs() -> Check {
    let dir = tempfile::tempdir().map_err(err)?;
    let mut cfg = ExperimentConfig::desk();
    cfg.train.epochs = 2;
    cfg.train.steps_per_epoch = 4;
    let rows = run_ablation_suite(&cfg, dir.path()).map_err(err)?;
    ensure(rows.len() == 4, "expected four variants")?;
    for r in &rows {
        ensure(r.losses_finite && r.mean_psnr_db.is_finite() && r.mean_ssim.is_finite(), format!("{} produced non-finite values", r.name))?;
    }
    let csv = fs::read_to_string(dir.path().join("ablation.csv")).map_err(err)?;
    ensure(csv.lines().count() == 5, "ablation.csv should hold 4 rows")?;
    Ok(rows
        .iter()
        .map(|r| format!("{} {:.2} dB / {} params", r.name, r.mean_psnr_db, r.parameter_counts.total))
        .collect::<Vec<_>>()
        .join(", "))
}

fn extrapolation(trained: &Option<Trained>) -> Check {
    let tail = extrapolation_partition(ExtrapolationMode::Tail, 31).map_err(err)?;
    ensure(tail.input == (0..=20).collect::<Vec<_>>() && tail.output == (21..=30).collect::<Vec<_>>(), "tail partition")?;
    let center = extrapolation_partition(ExtrapolationMode::Center, 31).map_err(err)?;
    ensure(
        center.input == (5..=25).collect::<Vec<_>>() && center.output == (0..=4).chain(26..=30).collect::<Vec<_>>(),
        "center partition",
    )?;
    let fresh;
    let model = match trained {
        Some(t) => &t.mlsr,
        None => {
            fresh = build_variant::<f32>(&ModelConfig::desk(), 0).map_err(err)?;
            &fresh
        }
    };
    let cfg = ExperimentConfig::desk();
    let scenes = SceneSet::load(&cfg.dataset.eval).map_err(err)?;
    let mut parts = Vec::new();
    for mode in [ExtrapolationMode::Tail, ExtrapolationMode::Center] {
        let r = run_extrapolation_experiment(model, &scenes, mode, &Stage1Predictor(InterpMethod::Cubic), &cfg.tiling).map_err(err)?;
        ensure(r.mlsr.per_band_psnr_db.len() == 10 && r.baseline.per_band_psnr_db.len() == 10, "metrics not limited to output bands")?;
        ensure(r.delta_mean_psnr_db.is_finite(), "non-finite delta")?;
        parts.push(format!("{:?} delta {:+.2} dB", mode, r.delta_mean_psnr_db));
    }
    Ok(parts.join(", "))
}

fn file_round_trips() -> Check {
    let dir = tempfile::tempdir().map_err(err)?;
    let cube = generate_synthetic_scene(&SceneSpec { height: 20, width: 12, ..SceneSpec::desk(77) }).map_err(err)?;
    let path = dir.path().join("scene.hsc");
    write_cube(&cube, &path).map_err(err)?;
    let back = read_cube(&path).map_err(err)?;
    ensure(back.bands() == cube.bands(), "band descriptors changed")?;
    let bits = |c: &HsiCube| c.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    ensure(bits(&back) == bits(&cube), ".hsc values changed")?;

    let model = build_variant::<f32>(&ModelConfig::desk(), 9).map_err(err)?;
    let ck = dir.path().join("model.mlsp");
    write_checkpoint(&model.params, &ck).map_err(err)?;
    let entries = read_checkpoint(&ck).map_err(err)?;
    let mut other = build_variant::<f32>(&ModelConfig::desk(), 10).map_err(err)?;
    load_into(&mut other.params, &entries).map_err(err)?;
    for id in model.params.ids() {
        let a: Vec<u32> = model.params.value(id).data().iter().map(|v| v.to_bits()).collect();
        let b: Vec<u32> = other.params.value(id).data().iter().map(|v| v.to_bits()).collect();
        ensure(a == b, format!("{} changed", model.params.name(id)))?;
    }
    let bytes = encode_checkpoint(&other.params).map_err(err)?;
    ensure(bytes == fs::read(&ck).map_err(err)?, "re-encoded checkpoint differs")?;
    ensure(decode_checkpoint(&bytes).map_err(err)? == entries, "decode mismatch")?;
    Ok(format!("{} cube values and {} parameters bit-exact", cube.data().len(), model.params.numel()))
}

fn main() {
    let mut trained = None;
    let mut results: Vec<(usize, &str, Check)> = Vec::new();
    let mut run = |n: usize, name: &'static str, f: &mut dyn FnMut() -> Check| {
        let r = f();
        match &r {
            Ok(m) => println!("PASS {n:>2} {name}: {m}"),
            Err(m) => println!("FAIL {n:>2} {name}: {m}"),
        }
        results.push((n, name, r));
    };
    run(1, "gradient correctness", &mut gradient_correctness);
    run(2, "hypernetwork gradient flow", &mut hypernetwork_gradient_flow);
    run(3, "arbitrary input/output contract", &mut arbitrary_io_contract);
    run(4, "overfit smoke test", &mut overfit_smoke);
    run(5, "interpolation oracles", &mut interpolation_oracles);
    run(6, "metric unit values", &mut metric_unit_values);
    run(7, "determinism", &mut determinism);
    run(8, "band sampling", &mut band_sampling);
    run(9, "flatness trend", &mut || flatness_trend(&mut trained));
    run(10, "ablation suite", &mut ablation_runs);
    run(11, "extrapolation", &mut || extrapolation(&trained));
    run(12, "file round trips", &mut file_round_trips);
    let failed: Vec<usize> = results.iter().filter(|r| r.2.is_err()).map(|r| r.0).collect();
    println!("\n{} of {} acceptance checks passed", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        println!("failed: {failed:?}");
        std::process::exit(1);
    }
}
