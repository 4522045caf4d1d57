use mlsr_autodiff::{grad_check, GradCheckConfig, Graph, ParameterStore, Tensor};
use mlsr_core::net::*;
use mlsr_core::spectral::*;
use mlsr_core::{rng_from_seed, MlsrError};
use rand::Rng;

fn random_cube(h: usize, w: usize, bands: SpectralBandSet, seed: u64) -> HsiCube {
    let mut rng = rng_from_seed(seed);
    let n = h * w * bands.len();
    HsiCube::new(h, w, bands, (0..n).map(|_| rng.gen::<f32>()).collect()).unwrap()
}

fn rgb_bands() -> SpectralBandSet {
    SpectralBandSet::new([460.0, 550.0, 620.0].map(BandDescriptor::wide).to_vec()).unwrap()
}

/// LR HSI with `s` equidistant bands, LR and HR RGB, at scale `r`.
fn inputs(
    h: usize,
    s: usize,
    r: usize,
    out: &[BandDescriptor],
    seed: u64,
) -> (HsiCube, HsiCube, HsiCube, NetInputs<f64>) {
    let grid = wavelength_grid(31, 400.0, 700.0).unwrap();
    let idx = sample_bands_equidistant(31, s).unwrap();
    let lr = random_cube(h, h, grid.select(&idx).unwrap(), seed);
    let lr_rgb = random_cube(h, h, rgb_bands(), seed + 1);
    let hr_rgb = random_cube(h * r, h * r, rgb_bands(), seed + 2);
    let inp = NetInputs::new(&lr, &lr_rgb, &hr_rgb, out).unwrap();
    (lr, lr_rgb, hr_rgb, inp)
}

fn run(model: &MlsrModel<f64>, inp: &NetInputs<f64>) -> (Tensor<f64>, Tensor<f64>) {
    let mut g = Graph::new();
    let o = forward_graph(&mut g, &model.params, &model.config, inp).unwrap();
    (g.value(o.out).clone(), g.value(o.b).clone())
}

fn channel(t: &Tensor<f64>, c: usize) -> &[f64] {
    let s = t.shape();
    let plane = s[2] * s[3];
    &t.data()[c * plane..(c + 1) * plane]
}

fn small_cfg() -> ModelConfig {
    ModelConfig { feature_channels: 6, n_res_blocks_sofe: 1, n_rdb: 2, rdb_layers_per_block: 2, rdb_growth: 4, n_res_blocks_sobr: 1, w2w_hidden: 16, ..ModelConfig::desk() }
}

#[test]
fn desk_shape_contract_and_determinism() {
    let model = build_variant::<f64>(&ModelConfig::desk(), 0).unwrap();
    let grid = wavelength_grid(31, 400.0, 700.0).unwrap();
    let hr = random_cube(24, 24, grid.clone(), 7);
    let rgb = synthesize_rgb(&hr, &RgbResponses::default()).unwrap();
    let sample = TrainingSample::from_hr(&hr, &rgb, 2, &sample_bands_equidistant(31, 5).unwrap()).unwrap();
    assert_eq!(sample.lr_hsi.height(), 12);
    let (cube, trace) = mlsr_forward(&sample, &model).unwrap();
    assert_eq!((cube.height(), cube.width(), cube.n_bands()), (24, 24, 31));
    assert_eq!(cube.bands(), &grid);
    assert_eq!(trace.b.shape(), &[1, 16, 12, 12]);
    assert_eq!(trace.c.shape(), &[1, 16, 12, 12]);
    assert_eq!(trace.d.shape(), &[1, 16, 24, 24]);
    assert_eq!(trace.e.shape(), &[1, 19, 24, 24]);
    let (again, _) = mlsr_forward(&sample, &model).unwrap();
    assert_eq!(cube, again);
}

#[test]
fn variable_input_band_counts_share_parameters() {
    let model = build_variant::<f64>(&small_cfg(), 1).unwrap();
    let before = model.parameter_counts();
    for s in [1, 5, 9] {
        let s_eff = s.max(2);
        let out = wavelength_grid(3, 420.0, 680.0).unwrap();
        let (_, _, _, inp) = inputs(5, s_eff, 2, out.bands(), 3);
        let (y, b) = run(&model, &inp);
        assert_eq!(b.shape(), &[1, 6, 5, 5]);
        assert_eq!(y.shape(), &[1, 3, 10, 10]);
    }
    assert_eq!(model.parameter_counts(), before);
}

#[test]
fn sofe_is_invariant_to_band_permutation() {
    let model = build_variant::<f64>(&small_cfg(), 2).unwrap();
    let out = [BandDescriptor::narrow(500.0)];
    let (_, _, _, inp) = inputs(5, 5, 2, &out, 11);
    let (_, b) = run(&model, &inp);

    let perm = [7, 2, 5, 0, 3, 6, 1, 4];
    let planes = |t: &Tensor<f64>| -> Vec<Vec<f64>> { (0..t.shape()[1]).map(|c| channel(t, c).to_vec()).collect() };
    let mut all = planes(&inp.lr_hsi);
    all.extend(planes(&inp.lr_rgb));
    let shuffled: Vec<f64> = perm.iter().flat_map(|&p| all[p].clone()).collect();
    // Put the first five permuted planes in the "HSI" slot and the rest in the "RGB" slot.
    let permuted = NetInputs {
        lr_hsi: Tensor::new(vec![1, 5, 5, 5], shuffled[..125].to_vec()).unwrap(),
        lr_rgb: Tensor::new(vec![1, 3, 5, 5], shuffled[125..].to_vec()).unwrap(),
        hr_rgb: inp.hr_rgb.clone(),
        in_bands: perm.iter().map(|&p| inp.in_bands[p]).collect(),
        out_bands: out.to_vec(),
    };
    let mut g = Graph::new();
    let bp = sofe_forward(&mut g, &model.params, &model.config, &permuted).unwrap();
    let max = b.data().iter().zip(g.value(bp).data()).map(|(a, c)| (a - c).abs()).fold(0.0, f64::max);
    assert!(max < 1e-6, "permutation changed B by {max}");
}

#[test]
fn output_bands_are_independent_and_order_follows_request() {
    let model = build_variant::<f64>(&small_cfg(), 3).unwrap();
    let (a, b, c) = (BandDescriptor::narrow(430.0), BandDescriptor::narrow(555.5), BandDescriptor::narrow(690.0));
    let (_, _, _, inp_ab) = inputs(4, 5, 2, &[a, b, c], 5);
    let (y, _) = run(&model, &inp_ab);
    let mut swapped = inp_ab.clone();
    swapped.out_bands = vec![c, a, b];
    let (ys, _) = run(&model, &swapped);
    assert_eq!(channel(&y, 0), channel(&ys, 1));
    assert_eq!(channel(&y, 1), channel(&ys, 2));
    assert_eq!(channel(&y, 2), channel(&ys, 0));

    let mut dropped = inp_ab.clone();
    dropped.out_bands = vec![a, c];
    let (yd, _) = run(&model, &dropped);
    assert_eq!(yd.shape(), &[1, 2, 8, 8]);
    assert_eq!(channel(&y, 0), channel(&yd, 0));
    assert_eq!(channel(&y, 2), channel(&yd, 1));

    let mut single = inp_ab;
    single.out_bands = vec![BandDescriptor::narrow(612.3)];
    assert_eq!(run(&model, &single).0.shape(), &[1, 1, 8, 8]);
    single.out_bands.clear();
    let mut g = Graph::new();
    assert!(forward_graph(&mut g, &model.params, &model.config, &single).is_err());
}

#[test]
fn loss_gradients_reach_theta_and_every_hypernetwork_tensor() {
    let mut model = build_variant::<f64>(&small_cfg(), 4).unwrap();
    let out = wavelength_grid(4, 400.0, 700.0).unwrap();
    let (_, _, _, inp) = inputs(4, 5, 2, out.bands(), 9);
    let target = Tensor::from_f64(&[1, 4, 8, 8], &vec![0.5; 256]).unwrap();
    let mut g = Graph::new();
    let o = forward_graph(&mut g, &model.params, &model.config, &inp).unwrap();
    let t = g.input(target);
    let loss = g.l1_loss(o.out, t).unwrap();
    g.backward(loss).unwrap();
    g.accumulate_param_grads(&mut model.params);
    let nonzero = |prefix: &str| model.params.ids_with_prefix(prefix).any(|id| model.params.grad(id).iter().any(|&x| x != 0.0));
    assert!(nonzero("theta."));
    assert!(nonzero("phi."));
    for id in model.params.ids_with_prefix("phi.") {
        assert!(model.params.grad(id).iter().any(|&x| x.abs() > 0.0), "{} has no gradient", model.params.name(id));
    }
}

#[test]
fn hypernetwork_properties() {
    let cfg = small_cfg();
    let model = build_variant::<f64>(&cfg, 5).unwrap();
    assert_eq!(w2w_input(&[BandDescriptor::narrow(550.0)], &cfg), vec![0.5, 0.0]);
    assert_eq!(w2w_input(&[BandDescriptor::wide(400.0)], &cfg), vec![0.0, 1.0]);
    let band = BandDescriptor::narrow(523.0);
    for side in [W2wSide::Input, W2wSide::Output] {
        let w1 = model.predict_meta_weights(side, band).unwrap();
        let w2 = model.predict_meta_weights(side, band).unwrap();
        assert_eq!(w1, w2);
        let lo = model.predict_meta_weights(side, BandDescriptor::narrow(400.0)).unwrap();
        let hi = model.predict_meta_weights(side, BandDescriptor::narrow(700.0)).unwrap();
        let diff = lo.weight.data().iter().zip(hi.weight.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff > 0.0);
        let near = model.predict_meta_weights(side, BandDescriptor::narrow(523.0 + 1e-6)).unwrap();
        let d = w1.weight.data().iter().zip(near.weight.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(d < 1e-6, "weights jump by {d} over 1e-6 nm");
        // Extrapolated wavelengths are legal.
        assert!(model.predict_meta_weights(side, BandDescriptor::narrow(850.0)).is_ok());
    }
    assert_eq!(model.predict_meta_weights(W2wSide::Input, band).unwrap().weight.shape(), &[6, 6, 1, 1]);
    assert_eq!(model.predict_meta_weights(W2wSide::Output, band).unwrap().weight.shape(), &[6, 9, 1, 1]);
}

#[test]
fn meta_wec_identity_and_bias() {
    let mut g = Graph::<f64>::new();
    let mut rng = rng_from_seed(1);
    let x = g.input(Tensor::new(vec![2, 3, 4, 4], (0..96).map(|_| rng.gen()).collect()).unwrap());
    let mut eye = vec![0.0; 9];
    for i in 0..3 {
        eye[i * 3 + i] = 1.0;
    }
    let w = g.input(Tensor::from_f64(&[3, 3, 1, 1], &eye).unwrap());
    let b = g.input(Tensor::zeros(&[3]));
    let y = meta_wec(&mut g, x, w, b).unwrap();
    assert_eq!(g.value(y).data(), g.value(x).data());
    let z = g.input(Tensor::zeros(&[3, 3, 1, 1]));
    let bias = g.input(Tensor::from_f64(&[3], &[0.1, -0.2, 0.3]).unwrap());
    let y = meta_wec(&mut g, x, z, bias).unwrap();
    assert!(g.value(y).data()[16..32].iter().all(|&v| v == -0.2));
    let bad = g.input(Tensor::zeros(&[3, 2, 1, 1]));
    assert!(meta_wec(&mut g, x, bad, bias).is_err());
}

#[test]
fn meta_wec_gradcheck_into_hypernetwork() {
    let cfg = ModelConfig { meta_kernel: 3, ..ModelConfig::tiny() };
    let model = build_variant::<f64>(&cfg, 6).unwrap();
    let mut store = model.params.clone();
    let mut rng = rng_from_seed(2);
    let x = Tensor::new(vec![1, 4, 4, 4], (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    let probe = Tensor::new(vec![2, 4, 4, 4], (0..128).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    let bands = [BandDescriptor::narrow(480.0), BandDescriptor::wide(620.0)];
    let report = grad_check(
        &mut store,
        &["phi.w2w1"],
        |g, s| {
            let out = w2w_forward(g, s, W2wSide::Input, &bands, &cfg).unwrap();
            let xv = g.input(x.clone());
            let dim = cfg.w2w1_output_dim();
            let mut ys = Vec::new();
            for k in 0..2 {
                let w = g.view(out, k * dim, &[4, 4, 3, 3])?;
                let b = g.view(out, k * dim + 144, &[4])?;
                ys.push(g.conv2d(xv, w, Some(b), (1, 1))?);
            }
            let y = g.concat_batch(&ys)?;
            let p = g.input(probe.clone());
            let m = g.mul(y, p)?;
            Ok(g.sum(m))
        },
        &GradCheckConfig { eps: 1e-5, tol: 1e-5, coords_per_param: 64, ..Default::default() },
    )
    .unwrap();
    assert!(report.passed, "max rel err {} at {:?}", report.max_rel_error, report.worst);
    assert!(report.checked() >= 64);
}

#[test]
fn backbone_skip_and_gradcheck() {
    let cfg = ModelConfig { feature_channels: 4, n_rdb: 2, rdb_layers_per_block: 2, rdb_growth: 3, ..ModelConfig::tiny() };
    let mut model = build_variant::<f64>(&cfg, 7).unwrap();
    let mut rng = rng_from_seed(3);
    let b = Tensor::new(vec![1, 4, 4, 4], (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();

    let mut zeroed: ParameterStore<f64> = model.params.clone();
    for n in ["theta.backbone.gff2.w", "theta.backbone.gff2.b"] {
        let id = zeroed.id(n).unwrap();
        zeroed.value_mut(id).data_mut().fill(0.0);
    }
    let mut g = Graph::new();
    let bv = g.input(b.clone());
    let c = backbone_forward(&mut g, &zeroed, &cfg, bv).unwrap();
    assert_eq!(g.value(c).data(), g.value(bv).data());

    let probe = Tensor::new(vec![1, 4, 4, 4], (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    let report = grad_check(
        &mut model.params,
        &["theta.backbone"],
        |g, s| {
            let bv = g.input(b.clone());
            let c = backbone_forward(g, s, &cfg, bv).unwrap();
            let p = g.input(probe.clone());
            let m = g.mul(c, p)?;
            Ok(g.sum(m))
        },
        &GradCheckConfig { eps: 1e-6, tol: 1e-5, coords_per_param: 32, ..Default::default() },
    )
    .unwrap();
    assert!(report.passed, "max rel err {} at {:?}", report.max_rel_error, report.worst);
}

#[test]
fn upsampler_shapes() {
    let cfg = ModelConfig { scale: 3, ..ModelConfig::tiny() };
    let model = build_variant::<f64>(&cfg, 8).unwrap();
    let mut g = Graph::new();
    let c = g.input(Tensor::zeros(&[1, 4, 8, 8]));
    let (d, e) = upsample_forward(&mut g, &model.params, &cfg, c, &Tensor::zeros(&[1, 3, 24, 24])).unwrap();
    assert_eq!(g.shape(d), &[1, 4, 24, 24]);
    assert_eq!(g.shape(e), &[1, 7, 24, 24]);
    let err = upsample_forward(&mut g, &model.params, &cfg, c, &Tensor::zeros(&[1, 3, 23, 23]));
    assert!(matches!(err, Err(MlsrError::InvalidArgument(_))));
}

#[test]
fn variant_parameter_layout() {
    let base = ModelConfig::desk();
    let meta = build_variant::<f32>(&base, 0).unwrap();
    let sofe = build_variant::<f32>(&ModelConfig { variant: Variant::PlainSofe, ..base.clone() }, 0).unwrap();
    let both = build_variant::<f32>(&ModelConfig { variant: Variant::PlainBoth, ..base.clone() }, 0).unwrap();
    assert_eq!(both.parameter_counts().phi, 0);
    assert!(sofe.has_w2w(W2wSide::Output) && !sofe.has_w2w(W2wSide::Input));
    let (h, g) = (base.w2w_hidden, base.feature_channels);
    let w2w = |out: usize| 2 * h + h + h * out + out;
    assert_eq!(meta.parameter_counts().phi, w2w(base.w2w1_output_dim()) + w2w(base.w2w2_output_dim()));
    assert_eq!(sofe.parameter_counts().phi, w2w(base.w2w2_output_dim()));
    assert_eq!(sofe.parameter_counts().theta, meta.parameter_counts().theta + g * g + g);
    assert_eq!(both.parameter_counts().theta, sofe.parameter_counts().theta + (g + 3) * g + g);
    let k3 = build_variant::<f32>(&ModelConfig { meta_kernel: 3, ..base.clone() }, 0).unwrap();
    assert!(k3.parameter_counts().phi > meta.parameter_counts().phi);
    assert_eq!(k3.parameter_counts().theta, meta.parameter_counts().theta);
}

#[test]
fn plain_conv_set_to_predicted_weights_matches_meta() {
    let cfg = small_cfg();
    let meta = build_variant::<f64>(&cfg, 9).unwrap();
    let mut plain = build_variant::<f64>(&ModelConfig { variant: Variant::PlainBoth, ..cfg.clone() }, 9).unwrap();
    for id in meta.params.ids_with_prefix("theta.") {
        let name = meta.params.name(id);
        let pid = plain.params.id(name).unwrap();
        *plain.params.value_mut(pid) = meta.params.value(id).clone();
    }
    let band = BandDescriptor::narrow(560.0);
    for (side, name) in [(W2wSide::Input, "theta.sofe.plain"), (W2wSide::Output, "theta.sobr.plain")] {
        let mw = meta.predict_meta_weights(side, band).unwrap();
        let w = plain.params.id(&format!("{name}.w")).unwrap();
        *plain.params.value_mut(w) = mw.weight;
        let b = plain.params.id(&format!("{name}.b")).unwrap();
        *plain.params.value_mut(b) = mw.bias;
    }
    let (_, _, _, mut inp) = inputs(4, 5, 2, &[band], 13);
    inp.in_bands = vec![band; 8];
    let (ym, _) = run(&meta, &inp);
    let (yp, _) = run(&plain, &inp);
    let d = ym.data().iter().zip(yp.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(d < 1e-12, "meta and plain outputs differ by {d}");
}
