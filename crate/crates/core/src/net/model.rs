use mlsr_autodiff::{he_uniform, Graph, ParameterStore, Real, Tensor, Var};
use rand::Rng;

use crate::error::{invalid, MlsrError, Result};
use crate::net::config::ModelConfig;
use crate::net::layers::{add_backbone, add_conv, add_res_blocks, backbone, conv, res_blocks, upsample, RdbShape};
use crate::rng_from_seed;
use crate::spectral::{BandDescriptor, HsiCube, SpectralBandSet, TrainingSample};

/// Which hypernetwork: input side (SOFE) or output side (SOBR).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum W2wSide {
    Input,
    Output,
}

impl W2wSide {
    pub fn prefix(self) -> &'static str {
        match self {
            W2wSide::Input => "phi.w2w1",
            W2wSide::Output => "phi.w2w2",
        }
    }

    fn in_channels(self, cfg: &ModelConfig) -> usize {
        match self {
            W2wSide::Input => cfg.feature_channels,
            W2wSide::Output => cfg.feature_channels + 3,
        }
    }

    fn output_dim(self, cfg: &ModelConfig) -> usize {
        match self {
            W2wSide::Input => cfg.w2w1_output_dim(),
            W2wSide::Output => cfg.w2w2_output_dim(),
        }
    }
}

/// Trainable parameters of one model. Names under `theta.` are the
/// feature/reconstruction network, names under `phi.` the hypernetworks.
#[derive(Debug, Clone)]
pub struct MlsrModel<T> {
    pub config: ModelConfig,
    pub params: ParameterStore<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ParamCounts {
    pub theta: usize,
    pub phi: usize,
    pub total: usize,
}

/// Convolution weights predicted for one band.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaConvWeights<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

/// Intermediate activations of one forward pass, all N x C x H x W.
#[derive(Debug, Clone)]
pub struct ForwardTrace<T> {
    /// Band-averaged spectrum-informed features, G channels at LR.
    pub b: Tensor<T>,
    /// Backbone output.
    pub c: Tensor<T>,
    /// Upsampled embedding, G channels at HR.
    pub d: Tensor<T>,
    /// `d` with the HR RGB appended, G + 3 channels.
    pub e: Tensor<T>,
}

/// Graph nodes of the forward pass.
#[derive(Debug, Clone, Copy)]
pub struct GraphOutputs {
    pub b: Var,
    pub c: Var,
    pub d: Var,
    pub e: Var,
    /// N x S_out x H x W.
    pub out: Var,
}

/// One batch of network inputs in NCHW layout. `in_bands` lists the HSI
/// bands followed by the three RGB bands.
#[derive(Debug, Clone)]
pub struct NetInputs<T> {
    pub lr_hsi: Tensor<T>,
    pub lr_rgb: Tensor<T>,
    pub hr_rgb: Tensor<T>,
    pub in_bands: Vec<BandDescriptor>,
    pub out_bands: Vec<BandDescriptor>,
}

/// Stacks same-shape cubes into an N x S x H x W tensor.
pub fn cubes_to_tensor<T: Real>(cubes: &[&HsiCube]) -> Result<Tensor<T>> {
    let Some(first) = cubes.first() else {
        return invalid("no cubes to stack");
    };
    let (h, w, s) = (first.height(), first.width(), first.n_bands());
    let mut data = Vec::with_capacity(cubes.len() * h * w * s);
    for c in cubes {
        if (c.height(), c.width(), c.n_bands()) != (h, w, s) {
            return invalid("cubes in a batch must share their shape");
        }
        for b in 0..s {
            data.extend(c.data().iter().skip(b).step_by(s).map(|&v| T::cast(v as f64)));
        }
    }
    Ok(Tensor::new(vec![cubes.len(), s, h, w], data)?)
}

/// Converts sample `n` of an N x S x H x W tensor into a cube, clamping to [0, 1].
pub fn tensor_to_cube<T: Real>(t: &Tensor<T>, n: usize, bands: SpectralBandSet) -> Result<HsiCube> {
    let &[_, s, h, w] = t.shape() else {
        return invalid(format!("expected a 4-d tensor, got {:?}", t.shape()));
    };
    if bands.len() != s {
        return invalid(format!("{} band descriptors for {s} channels", bands.len()));
    }
    let src = &t.data()[n * s * h * w..(n + 1) * s * h * w];
    let mut data = vec![0f32; h * w * s];
    for b in 0..s {
        for p in 0..h * w {
            data[p * s + b] = src[b * h * w + p].widen() as f32;
        }
    }
    HsiCube::new(h, w, bands, data)
}

impl<T: Real> NetInputs<T> {
    pub fn new(lr_hsi: &HsiCube, lr_rgb: &HsiCube, hr_rgb: &HsiCube, out_bands: &[BandDescriptor]) -> Result<Self> {
        Self::batch(&[lr_hsi], &[lr_rgb], &[hr_rgb], out_bands)
    }

    pub fn batch(
        lr_hsi: &[&HsiCube],
        lr_rgb: &[&HsiCube],
        hr_rgb: &[&HsiCube],
        out_bands: &[BandDescriptor],
    ) -> Result<Self> {
        let Some(first) = lr_hsi.first() else {
            return invalid("empty batch");
        };
        if lr_hsi.iter().any(|c| c.bands() != first.bands()) || lr_rgb.iter().any(|c| c.bands() != lr_rgb[0].bands()) {
            return invalid("all samples of a batch must share their band settings");
        }
        if lr_rgb[0].n_bands() != 3 || hr_rgb[0].n_bands() != 3 {
            return invalid("RGB guides must have exactly 3 bands");
        }
        let mut in_bands = first.bands().bands().to_vec();
        in_bands.extend_from_slice(lr_rgb[0].bands().bands());
        Ok(NetInputs {
            lr_hsi: cubes_to_tensor(lr_hsi)?,
            lr_rgb: cubes_to_tensor(lr_rgb)?,
            hr_rgb: cubes_to_tensor(hr_rgb)?,
            in_bands,
            out_bands: out_bands.to_vec(),
        })
    }

    pub fn from_samples(samples: &[&TrainingSample]) -> Result<Self> {
        let lr_hsi: Vec<&HsiCube> = samples.iter().map(|s| &s.lr_hsi).collect();
        let lr_rgb: Vec<&HsiCube> = samples.iter().map(|s| &s.lr_rgb).collect();
        let hr_rgb: Vec<&HsiCube> = samples.iter().map(|s| &s.hr_rgb).collect();
        let Some(first) = samples.first() else {
            return invalid("empty batch");
        };
        Self::batch(&lr_hsi, &lr_rgb, &hr_rgb, first.requested_out_bands.bands())
    }
}

fn rdb_shape(cfg: &ModelConfig) -> RdbShape {
    RdbShape {
        channels: cfg.feature_channels,
        blocks: cfg.n_rdb,
        layers: cfg.rdb_layers_per_block,
        growth: cfg.rdb_growth,
    }
}

fn add_w2w<T: Real, R: Rng + ?Sized>(
    store: &mut ParameterStore<T>,
    side: W2wSide,
    cfg: &ModelConfig,
    rng: &mut R,
) -> Result<()> {
    let p = side.prefix();
    let (hid, out) = (cfg.w2w_hidden, side.output_dim(cfg));
    let b1 = 1.0 / 2f64.sqrt();
    store.add(format!("{p}.fc1.w"), he_uniform(&[2, hid], 2, 1.0, rng))?;
    let bias1: Vec<f64> = (0..hid).map(|_| rng.gen_range(-b1..=b1)).collect();
    store.add(format!("{p}.fc1.b"), Tensor::from_f64(&[hid], &bias1)?)?;
    store.add(format!("{p}.fc2.w"), he_uniform(&[hid, out], hid, 0.1, rng))?;
    // The output bias of the weight portion starts as an ordinary He-initialised
    // conv shared by all bands; the predicted conv bias starts at zero.
    let k = cfg.meta_kernel;
    let n_w = out - cfg.feature_channels;
    let fan_in = side.in_channels(cfg) * k * k;
    let mut bias2 = he_uniform::<T, R>(&[out], fan_in, 1.0, rng);
    bias2.data_mut()[n_w..].fill(T::zero());
    store.add(format!("{p}.fc2.b"), bias2)?;
    Ok(())
}

/// Allocates and initialises every parameter of `cfg`'s variant.
pub fn build_variant<T: Real>(cfg: &ModelConfig, seed: u64) -> Result<MlsrModel<T>> {
    cfg.validate()?;
    let mut rng = rng_from_seed(seed);
    let mut s = ParameterStore::new();
    let (g, k) = (cfg.feature_channels, cfg.meta_kernel);
    add_conv(&mut s, "theta.sofe.entry", g, 1, 3, 1.0, &mut rng)?;
    add_res_blocks(&mut s, "theta.sofe", cfg.n_res_blocks_sofe, g, &mut rng)?;
    if !cfg.variant.meta_sofe() {
        add_conv(&mut s, "theta.sofe.plain", g, g, k, 1.0, &mut rng)?;
    }
    add_backbone(&mut s, "theta.backbone", rdb_shape(cfg), &mut rng)?;
    add_conv(&mut s, "theta.upsample", g * cfg.scale * cfg.scale, g, 3, 1.0, &mut rng)?;
    if !cfg.variant.meta_sobr() {
        add_conv(&mut s, "theta.sobr.plain", g, g + 3, k, 1.0, &mut rng)?;
    }
    add_res_blocks(&mut s, "theta.sobr", cfg.n_res_blocks_sobr, g, &mut rng)?;
    add_conv(&mut s, "theta.sobr.exit", 1, g, 3, 1.0, &mut rng)?;
    if cfg.variant.meta_sofe() {
        add_w2w(&mut s, W2wSide::Input, cfg, &mut rng)?;
    }
    if cfg.variant.meta_sobr() {
        add_w2w(&mut s, W2wSide::Output, cfg, &mut rng)?;
    }
    Ok(MlsrModel { config: cfg.clone(), params: s })
}

impl<T: Real> MlsrModel<T> {
    pub fn parameter_counts(&self) -> ParamCounts {
        let theta = self.params.numel_with_prefix("theta.");
        let phi = self.params.numel_with_prefix("phi.");
        ParamCounts { theta, phi, total: theta + phi }
    }

    pub fn has_w2w(&self, side: W2wSide) -> bool {
        self.params.id(&format!("{}.fc1.w", side.prefix())).is_some()
    }

    /// Meta-conv weights the hypernetwork of `side` predicts for `band`.
    pub fn predict_meta_weights(&self, side: W2wSide, band: BandDescriptor) -> Result<MetaConvWeights<T>> {
        if !self.has_w2w(side) {
            return invalid(format!("this variant has no {} hypernetwork", side.prefix()));
        }
        let mut g = Graph::new();
        let out = w2w_forward(&mut g, &self.params, side, &[band], &self.config)?;
        let (w, b) = meta_slices(&mut g, out, 0, side, &self.config)?;
        Ok(MetaConvWeights { weight: g.value(w).clone(), bias: g.value(b).clone() })
    }

    /// Runs the network on one batch without recording gradients for later use.
    pub fn predict(&self, inputs: &NetInputs<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let o = forward_graph(&mut g, &self.params, &self.config, inputs)?;
        Ok(g.value(o.out).clone())
    }
}

/// Hypernetwork over a list of bands: (K, 2) descriptors -> (K, output_dim).
pub fn w2w_forward<T: Real>(
    g: &mut Graph<T>,
    store: &ParameterStore<T>,
    side: W2wSide,
    bands: &[BandDescriptor],
    cfg: &ModelConfig,
) -> Result<Var> {
    let x = g.input(Tensor::from_f64(&[bands.len(), 2], &w2w_input(bands, cfg))?);
    let p = side.prefix();
    let param = |g: &mut Graph<T>, n: &str| {
        store
            .id(&format!("{p}.{n}"))
            .map(|id| g.param(store, id))
            .ok_or_else(|| MlsrError::InvalidArgument(format!("missing parameter {p}.{n}")))
    };
    let (w1, b1) = (param(g, "fc1.w")?, param(g, "fc1.b")?);
    let h = g.dense(x, w1, b1)?;
    let h = g.relu(h);
    let (w2, b2) = (param(g, "fc2.w")?, param(g, "fc2.b")?);
    Ok(g.dense(h, w2, b2)?)
}

/// Normalised (wavelength, wide flag) pairs, row-major.
pub fn w2w_input(bands: &[BandDescriptor], cfg: &ModelConfig) -> Vec<f64> {
    let (lo, hi) = cfg.wavelength_norm_range;
    bands.iter().flat_map(|b| [(b.peak_wavelength_nm - lo) / (hi - lo), b.flag()]).collect()
}

/// Row `k` of a hypernetwork output split into conv weight then bias.
fn meta_slices<T: Real>(
    g: &mut Graph<T>,
    w2w_out: Var,
    k: usize,
    side: W2wSide,
    cfg: &ModelConfig,
) -> Result<(Var, Var)> {
    let (o, c, ks) = (cfg.feature_channels, side.in_channels(cfg), cfg.meta_kernel);
    let base = k * side.output_dim(cfg);
    let w = g.view(w2w_out, base, &[o, c, ks, ks])?;
    let b = g.view(w2w_out, base + o * c * ks * ks, &[o])?;
    Ok((w, b))
}

/// Convolution with externally supplied (predicted) weights.
pub fn meta_wec<T: Real>(g: &mut Graph<T>, x: Var, weight: Var, bias: Var) -> Result<Var> {
    let k = g.shape(weight)[2];
    Ok(g.conv2d(x, weight, Some(bias), (k / 2, k / 2))?)
}

/// Per-band conv weights for `bands`: predicted, or the shared plain conv.
fn band_weights<T: Real>(
    g: &mut Graph<T>,
    store: &ParameterStore<T>,
    cfg: &ModelConfig,
    side: W2wSide,
    meta: bool,
    bands: &[BandDescriptor],
) -> Result<Vec<(Var, Var)>> {
    if meta {
        let out = w2w_forward(g, store, side, bands, cfg)?;
        (0..bands.len()).map(|k| meta_slices(g, out, k, side, cfg)).collect()
    } else {
        let name = match side {
            W2wSide::Input => "theta.sofe.plain",
            W2wSide::Output => "theta.sobr.plain",
        };
        let lookup = |n: String| store.id(&n).ok_or_else(|| MlsrError::InvalidArgument(format!("missing parameter {n}")));
        let w = g.param(store, lookup(format!("{name}.w"))?);
        let b = g.param(store, lookup(format!("{name}.b"))?);
        Ok(vec![(w, b); bands.len()])
    }
}

/// Shared extractor over every input band, per-band embedding conv and the
/// band average. Returns B, N x G x h x w.
pub fn sofe_forward<T: Real>(
    g: &mut Graph<T>,
    store: &ParameterStore<T>,
    cfg: &ModelConfig,
    inputs: &NetInputs<T>,
) -> Result<Var> {
    let &[n, s, h, w] = inputs.lr_hsi.shape() else {
        return invalid("lr_hsi must be N x s x h x w");
    };
    if inputs.lr_rgb.shape() != [n, 3, h, w] {
        return invalid(format!("lr_rgb shape {:?} does not match lr_hsi {:?}", inputs.lr_rgb.shape(), [n, s, h, w]));
    }
    let k_total = s + 3;
    if inputs.in_bands.len() != k_total {
        return invalid(format!("{} input band descriptors for {k_total} input bands", inputs.in_bands.len()));
    }
    // Band-major stack: item k * n + i is band k of sample i.
    let plane = h * w;
    let mut stack = Vec::with_capacity(k_total * n * plane);
    for k in 0..k_total {
        for i in 0..n {
            let (src, c, kk) = if k < s { (&inputs.lr_hsi, s, k) } else { (&inputs.lr_rgb, 3, k - s) };
            let off = (i * c + kk) * plane;
            stack.extend_from_slice(&src.data()[off..off + plane]);
        }
    }
    let x = g.input(Tensor::new(vec![k_total * n, 1, h, w], stack)?);
    let f = conv(g, store, "theta.sofe.entry", x)?;
    let f = res_blocks(g, store, "theta.sofe", cfg.n_res_blocks_sofe, f)?;
    let weights = band_weights(g, store, cfg, W2wSide::Input, cfg.variant.meta_sofe(), &inputs.in_bands)?;
    let mut per_band = Vec::with_capacity(k_total);
    for (k, &(wk, bk)) in weights.iter().enumerate() {
        let fk = g.slice_batch(f, k * n, n)?;
        per_band.push(meta_wec(g, fk, wk, bk)?);
    }
    Ok(g.mean_over_set(&per_band)?)
}

pub fn backbone_forward<T: Real>(g: &mut Graph<T>, store: &ParameterStore<T>, cfg: &ModelConfig, b: Var) -> Result<Var> {
    backbone(g, store, "theta.backbone", rdb_shape(cfg), b)
}

/// Sub-pixel upsampling of C to D, then E = [D, HR RGB]. Returns (D, E).
pub fn upsample_forward<T: Real>(
    g: &mut Graph<T>,
    store: &ParameterStore<T>,
    cfg: &ModelConfig,
    c: Var,
    hr_rgb: &Tensor<T>,
) -> Result<(Var, Var)> {
    let cs = g.shape(c).to_vec();
    let r = cfg.scale;
    let want = [cs[0], 3, cs[2] * r, cs[3] * r];
    if hr_rgb.shape() != want {
        return invalid(format!("HR RGB shape {:?} does not match {want:?} at scale {r}", hr_rgb.shape()));
    }
    let d = upsample(g, store, "theta.upsample", r, c)?;
    let y = g.input(hr_rgb.clone());
    let e = g.concat_channels(&[d, y])?;
    Ok((d, e))
}

/// Per-output-band embedding conv on E, the shared reconstructor, and
/// concatenation in request order. Returns N x S_out x H x W.
pub fn sobr_forward<T: Real>(
    g: &mut Graph<T>,
    store: &ParameterStore<T>,
    cfg: &ModelConfig,
    e: Var,
    out_bands: &[BandDescriptor],
) -> Result<Var> {
    if out_bands.is_empty() {
        return invalid("no output bands requested");
    }
    let n = g.shape(e)[0];
    let meta = cfg.variant.meta_sobr();
    let distinct = if meta { out_bands } else { &out_bands[..1] };
    let weights = band_weights(g, store, cfg, W2wSide::Output, meta, distinct)?;
    let mut per_band = Vec::with_capacity(weights.len());
    for &(wk, bk) in &weights {
        per_band.push(meta_wec(g, e, wk, bk)?);
    }
    let stacked = if per_band.len() == 1 { per_band[0] } else { g.concat_batch(&per_band)? };
    let r = res_blocks(g, store, "theta.sobr", cfg.n_res_blocks_sobr, stacked)?;
    let r = conv(g, store, "theta.sobr.exit", r)?;
    let bands: Vec<Var> = if meta {
        if out_bands.len() == 1 {
            return Ok(r);
        }
        (0..out_bands.len()).map(|k| g.slice_batch(r, k * n, n)).collect::<std::result::Result<_, _>>()?
    } else {
        vec![r; out_bands.len()]
    };
    if bands.len() == 1 {
        return Ok(bands[0]);
    }
    Ok(g.concat_channels(&bands)?)
}

/// The full network on one batch.
pub fn forward_graph<T: Real>(
    g: &mut Graph<T>,
    store: &ParameterStore<T>,
    cfg: &ModelConfig,
    inputs: &NetInputs<T>,
) -> Result<GraphOutputs> {
    let b = sofe_forward(g, store, cfg, inputs)?;
    let c = backbone_forward(g, store, cfg, b)?;
    let (d, e) = upsample_forward(g, store, cfg, c, &inputs.hr_rgb)?;
    let out = sobr_forward(g, store, cfg, e, &inputs.out_bands)?;
    Ok(GraphOutputs { b, c, d, e, out })
}

/// Predicted HR cube for one sample, with its intermediate activations.
pub fn mlsr_forward<T: Real>(sample: &TrainingSample, model: &MlsrModel<T>) -> Result<(HsiCube, ForwardTrace<T>)> {
    let inputs = NetInputs::from_samples(&[sample])?;
    let mut g = Graph::new();
    let o = forward_graph(&mut g, &model.params, &model.config, &inputs)?;
    let trace = ForwardTrace {
        b: g.value(o.b).clone(),
        c: g.value(o.c).clone(),
        d: g.value(o.d).clone(),
        e: g.value(o.e).clone(),
    };
    let cube = tensor_to_cube(g.value(o.out), 0, sample.requested_out_bands.clone())?;
    Ok((cube, trace))
}
