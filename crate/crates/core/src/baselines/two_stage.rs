//! Spectral-then-spatial baseline: spectral interpolation to a fixed band
//! grid, then a fusion CNN trained for exactly that grid.

use mlsr_autodiff::{Graph, ParameterStore, Real, Tensor, Var};

use crate::baselines::interp::{spectral_resample_cube, InterpMethod};
use crate::error::{invalid, Result};
use crate::net::{
    add_backbone, add_conv, add_res_blocks, backbone, conv, cubes_to_tensor, res_blocks, tensor_to_cube, upsample,
    ModelConfig, NetInputs, RdbShape,
};
use crate::rng_from_seed;
use crate::spectral::{upsample_spatial, HsiCube, SpectralBandSet, TrainingSample};

/// Plain fusion CNN: LR RGB joins the LR HSI at the input, HR RGB joins the
/// features after upsampling. Every convolution is an ordinary trainable one.
#[derive(Debug, Clone)]
pub struct PlainCnn<T> {
    pub config: ModelConfig,
    pub bands: SpectralBandSet,
    pub params: ParameterStore<T>,
}

fn shape(cfg: &ModelConfig) -> RdbShape {
    RdbShape { channels: cfg.feature_channels, blocks: cfg.n_rdb, layers: cfg.rdb_layers_per_block, growth: cfg.rdb_growth }
}

/// Stage-2 network for `bands` in and out, sized like `cfg`'s backbone.
pub fn build_plain_cnn<T: Real>(cfg: &ModelConfig, bands: &SpectralBandSet, seed: u64) -> Result<PlainCnn<T>> {
    cfg.validate()?;
    let mut rng = rng_from_seed(seed);
    let mut s = ParameterStore::new();
    let (g, nb) = (cfg.feature_channels, bands.len());
    add_conv(&mut s, "theta.entry", g, nb + 3, 3, 1.0, &mut rng)?;
    add_backbone(&mut s, "theta.backbone", shape(cfg), &mut rng)?;
    add_conv(&mut s, "theta.upsample", g * cfg.scale * cfg.scale, g, 3, 1.0, &mut rng)?;
    add_conv(&mut s, "theta.recon.fuse", g, g + 3, 3, 1.0, &mut rng)?;
    add_res_blocks(&mut s, "theta.recon", cfg.n_res_blocks_sobr, g, &mut rng)?;
    add_conv(&mut s, "theta.recon.exit", nb, g, 3, 1.0, &mut rng)?;
    Ok(PlainCnn { config: cfg.clone(), bands: bands.clone(), params: s })
}

impl<T: Real> PlainCnn<T> {
    /// Graph of the network on stage-1 outputs; `inputs.lr_hsi` must carry
    /// exactly the trained bands.
    pub fn forward_graph(&self, g: &mut Graph<T>, store: &ParameterStore<T>, inputs: &NetInputs<T>) -> Result<Var> {
        let s = inputs.lr_hsi.shape()[1];
        let trained = self.bands.bands();
        if s != trained.len() || inputs.in_bands[..s] != *trained {
            return invalid(format!(
                "stage-2 network was trained on {} fixed bands; got a {s}-band input with different descriptors",
                trained.len()
            ));
        }
        let cfg = &self.config;
        let hsi = g.input(inputs.lr_hsi.clone());
        let rgb = g.input(inputs.lr_rgb.clone());
        let x = g.concat_channels(&[hsi, rgb])?;
        let f = conv(g, store, "theta.entry", x)?;
        let f = backbone(g, store, "theta.backbone", shape(cfg), f)?;
        let d = upsample(g, store, "theta.upsample", cfg.scale, f)?;
        let want = [inputs.hr_rgb.shape()[0], 3, g.shape(d)[2], g.shape(d)[3]];
        if inputs.hr_rgb.shape() != want {
            return invalid(format!("HR RGB shape {:?} does not match {want:?}", inputs.hr_rgb.shape()));
        }
        let y = g.input(inputs.hr_rgb.clone());
        let e = g.concat_channels(&[d, y])?;
        let h = conv(g, store, "theta.recon.fuse", e)?;
        let h = g.relu(h);
        let h = res_blocks(g, store, "theta.recon", cfg.n_res_blocks_sobr, h)?;
        conv(g, store, "theta.recon.exit", h)
    }

    pub fn predict(&self, inputs: &NetInputs<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let out = self.forward_graph(&mut g, &self.params, inputs)?;
        Ok(g.value(out).clone())
    }

    /// Low-resolution pixels of context an output pixel depends on, per side.
    pub fn receptive_radius_lr(&self) -> usize {
        let c = &self.config;
        let lr = 1 + c.n_rdb * c.rdb_layers_per_block + 1 + 1;
        lr + (2 + 2 * c.n_res_blocks_sobr).div_ceil(c.scale)
    }

    pub fn parameter_count(&self) -> usize {
        self.params.numel()
    }
}

/// Stage-1 spectral resampling of a sample's LR HSI onto `bands`, keeping
/// the RGB guides and target.
pub fn stage1_sample(sample: &TrainingSample, bands: &SpectralBandSet, method: InterpMethod) -> Result<TrainingSample> {
    Ok(TrainingSample { lr_hsi: spectral_resample_cube(&sample.lr_hsi, bands, method)?, ..sample.clone() })
}

/// Two-stage prediction. Without a stage-2 network the stage-1 cube is
/// upsampled bicubically (unchanged when the scale is 1).
pub fn baseline_two_stage<T: Real>(
    sample: &TrainingSample,
    method: InterpMethod,
    target_bands: &SpectralBandSet,
    stage2: Option<&PlainCnn<T>>,
) -> Result<HsiCube> {
    let s1 = spectral_resample_cube(&sample.lr_hsi, target_bands, method)?;
    let r = sample.scale();
    match stage2 {
        None => upsample_spatial(&s1, r),
        Some(net) => {
            if r != net.config.scale {
                return invalid(format!("stage-2 network is for scale {}, sample has scale {r}", net.config.scale));
            }
            let inputs = NetInputs::<T>::new(&s1, &sample.lr_rgb, &sample.hr_rgb, net.bands.bands())?;
            let out = net.predict(&inputs)?;
            tensor_to_cube(&out, 0, net.bands.clone())
        }
    }
}

/// N x S x H x W target tensor for a batch.
pub fn target_tensor<T: Real>(samples: &[&TrainingSample]) -> Result<Tensor<T>> {
    let cubes: Vec<&HsiCube> = samples.iter().map(|s| &s.hr_hsi_target).collect();
    cubes_to_tensor(&cubes)
}
