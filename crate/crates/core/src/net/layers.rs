//! Parameter allocation and graph construction for the ordinary layers
//! shared by the model and the plain-CNN baseline.

use mlsr_autodiff::{he_uniform, Graph, ParameterStore, Real, Tensor, Var};
use rand::Rng;

use crate::error::{MlsrError, Result};

/// Init gain of the last conv on every residual branch.
pub(crate) const RESIDUAL_GAIN: f64 = 0.1;

pub(crate) fn add_conv<T: Real, R: Rng + ?Sized>(
    store: &mut ParameterStore<T>,
    name: &str,
    out_ch: usize,
    in_ch: usize,
    k: usize,
    gain: f64,
    rng: &mut R,
) -> Result<()> {
    store.add(format!("{name}.w"), he_uniform(&[out_ch, in_ch, k, k], in_ch * k * k, gain, rng))?;
    store.add(format!("{name}.b"), Tensor::zeros(&[out_ch]))?;
    Ok(())
}

fn lookup<T: Real>(g: &mut Graph<T>, store: &ParameterStore<T>, name: &str) -> Result<Var> {
    let id = store.id(name).ok_or_else(|| MlsrError::InvalidArgument(format!("missing parameter {name}")))?;
    Ok(g.param(store, id))
}

/// Same-size convolution with the named weight and bias.
pub(crate) fn conv<T: Real>(g: &mut Graph<T>, store: &ParameterStore<T>, name: &str, x: Var) -> Result<Var> {
    let w = lookup(g, store, &format!("{name}.w"))?;
    let b = lookup(g, store, &format!("{name}.b"))?;
    let k = g.shape(w)[2];
    Ok(g.conv2d(x, w, Some(b), (k / 2, k / 2))?)
}

pub(crate) fn add_res_blocks<T: Real, R: Rng + ?Sized>(
    store: &mut ParameterStore<T>,
    prefix: &str,
    n: usize,
    ch: usize,
    rng: &mut R,
) -> Result<()> {
    for i in 0..n {
        add_conv(store, &format!("{prefix}.res{i}.conv1"), ch, ch, 3, 1.0, rng)?;
        add_conv(store, &format!("{prefix}.res{i}.conv2"), ch, ch, 3, RESIDUAL_GAIN, rng)?;
    }
    Ok(())
}

/// `n` blocks of conv3x3 -> ReLU -> conv3x3 plus identity skip.
pub(crate) fn res_blocks<T: Real>(
    g: &mut Graph<T>,
    store: &ParameterStore<T>,
    prefix: &str,
    n: usize,
    mut x: Var,
) -> Result<Var> {
    for i in 0..n {
        let h = conv(g, store, &format!("{prefix}.res{i}.conv1"), x)?;
        let h = g.relu(h);
        let h = conv(g, store, &format!("{prefix}.res{i}.conv2"), h)?;
        x = g.add(x, h)?;
    }
    Ok(x)
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct RdbShape {
    pub channels: usize,
    pub blocks: usize,
    pub layers: usize,
    pub growth: usize,
}

pub(crate) fn add_backbone<T: Real, R: Rng + ?Sized>(
    store: &mut ParameterStore<T>,
    prefix: &str,
    s: RdbShape,
    rng: &mut R,
) -> Result<()> {
    for b in 0..s.blocks {
        for l in 0..s.layers {
            add_conv(store, &format!("{prefix}.rdb{b}.layer{l}"), s.growth, s.channels + l * s.growth, 3, 1.0, rng)?;
        }
        add_conv(store, &format!("{prefix}.rdb{b}.fuse"), s.channels, s.channels + s.layers * s.growth, 1, RESIDUAL_GAIN, rng)?;
    }
    add_conv(store, &format!("{prefix}.gff1"), s.channels, s.blocks * s.channels, 1, 1.0, rng)?;
    add_conv(store, &format!("{prefix}.gff2"), s.channels, s.channels, 3, RESIDUAL_GAIN, rng)?;
    Ok(())
}

/// Residual dense blocks, global 1x1 + 3x3 fusion of all block outputs, and
/// a skip over the whole stack.
pub(crate) fn backbone<T: Real>(
    g: &mut Graph<T>,
    store: &ParameterStore<T>,
    prefix: &str,
    s: RdbShape,
    input: Var,
) -> Result<Var> {
    let mut x = input;
    let mut outs = Vec::with_capacity(s.blocks);
    for b in 0..s.blocks {
        let mut feats = vec![x];
        for l in 0..s.layers {
            let cat = if feats.len() == 1 { x } else { g.concat_channels(&feats)? };
            let h = conv(g, store, &format!("{prefix}.rdb{b}.layer{l}"), cat)?;
            feats.push(g.relu(h));
        }
        let cat = g.concat_channels(&feats)?;
        let fused = conv(g, store, &format!("{prefix}.rdb{b}.fuse"), cat)?;
        x = g.add(x, fused)?;
        outs.push(x);
    }
    let cat = if outs.len() == 1 { outs[0] } else { g.concat_channels(&outs)? };
    let f = conv(g, store, &format!("{prefix}.gff1"), cat)?;
    let f = conv(g, store, &format!("{prefix}.gff2"), f)?;
    Ok(g.add(input, f)?)
}

/// 3x3 conv to `ch * r^2` channels followed by pixel shuffle.
pub(crate) fn upsample<T: Real>(
    g: &mut Graph<T>,
    store: &ParameterStore<T>,
    name: &str,
    r: usize,
    x: Var,
) -> Result<Var> {
    let h = conv(g, store, name, x)?;
    Ok(g.pixel_shuffle(h, r)?)
}
