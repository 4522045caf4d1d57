//! Hyperspectral super-resolution with arbitrary input and output band
//! settings: a wavelength-conditioned hypernetwork predicts the per-band
//! convolutions that encode each input band and decode each requested
//! output band around a shared residual-dense backbone.

pub mod baselines;
mod error;
pub mod experiment;
pub mod metrics;
pub mod net;
pub mod spectral;

pub use error::{MlsrError, Result};

use rand::SeedableRng;

/// Seedable generator used by every stochastic operation (xoshiro256**).
pub type Rng = rand_xoshiro::Xoshiro256StarStar;

pub fn rng_from_seed(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}
