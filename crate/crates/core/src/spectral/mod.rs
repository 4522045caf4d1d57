//! Hyperspectral cubes, band sets and dataset construction.

pub mod bands;
pub mod cube;
pub mod io;
pub mod patch;
pub mod resample;
pub mod rgb;
pub mod scene;

pub use bands::{sample_bands_equidistant, sample_bands_random, wavelength_grid, BandDescriptor, SpectralBandSet};
pub use cube::HsiCube;
pub use io::{read_cube, write_cube};
pub use patch::{crop_patch_pair, TrainingSample};
pub use resample::{downsample_spatial, upsample_spatial};
pub use rgb::{synthesize_rgb, RgbResponses};
pub use scene::{generate_synthetic_scene, SceneSpec};
