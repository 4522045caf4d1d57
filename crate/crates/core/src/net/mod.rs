//! The band-flexible network: hypernetworks, meta convolutions, feature
//! extraction, backbone, upsampler and band reconstruction.

mod check;
pub mod config;
mod layers;
pub mod model;

pub use check::{end_to_end_grad_check, EndToEndCheck};
pub use config::{ModelConfig, Variant};
pub use model::{
    backbone_forward, build_variant, cubes_to_tensor, forward_graph, meta_wec, mlsr_forward, sobr_forward,
    sofe_forward, tensor_to_cube, upsample_forward, w2w_forward, w2w_input, ForwardTrace, GraphOutputs,
    MetaConvWeights, MlsrModel, NetInputs, ParamCounts, W2wSide,
};

pub(crate) use layers::{add_backbone, add_conv, add_res_blocks, backbone, conv, res_blocks, upsample, RdbShape};
