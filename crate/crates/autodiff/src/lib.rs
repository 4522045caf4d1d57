//! Reverse-mode differentiation over dense `f32`/`f64` tensors with the
//! operator set a meta-convolution super-resolution network needs: 2d
//! convolution, dense layers, (leaky) relu, pixel shuffle, channel and batch
//! concatenation, set means and an L1 loss. Also provides Adam, a central
//! difference gradient checker and a binary parameter checkpoint format.

mod adam;
pub mod checkpoint;
mod error;
mod gradcheck;
mod graph;
mod kernels;
mod params;
mod real;
mod tensor;

pub use adam::Adam;
pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_into, read_checkpoint, write_checkpoint, CheckpointEntry};
pub use error::{AutodiffError, Result};
pub use gradcheck::{grad_check, CoordCheck, GradCheckConfig, GradCheckReport};
pub use graph::{Graph, NonFinite, Var};
pub use params::{he_uniform, ParamId, ParameterStore};
pub use real::Real;
pub use tensor::{numel, Tensor};
