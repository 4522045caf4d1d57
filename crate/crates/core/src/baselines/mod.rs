//! Spectral interpolation baselines and the two-stage comparison pipeline.

pub mod interp;
pub mod two_stage;

pub use interp::{
    interp, interp_cubic, interp_linear, spectral_resample_cube, CubicSplineCoefficients, InterpMethod, SpectrumSamples,
};
pub use two_stage::{baseline_two_stage, build_plain_cnn, stage1_sample, target_tensor, PlainCnn};
