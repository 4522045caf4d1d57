use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rng_from_seed;
use crate::spectral::bands::wavelength_grid;
use crate::spectral::cube::HsiCube;

/// Parameters of one synthetic scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub height: usize,
    pub width: usize,
    pub n_bands: usize,
    pub wavelength_min_nm: f64,
    pub wavelength_max_nm: f64,
    pub n_blobs: usize,
    pub seed: u64,
}

impl SceneSpec {
    pub fn desk(seed: u64) -> Self {
        SceneSpec {
            height: 64,
            width: 64,
            n_bands: 31,
            wavelength_min_nm: 400.0,
            wavelength_max_nm: 700.0,
            n_blobs: 48,
            seed,
        }
    }
}

/// Smallest blob standard deviation in pixels.
pub const SIGMA_MIN: f64 = 0.7;

struct Blob {
    cy: f64,
    cx: f64,
    inv_two_var: f64,
    amplitude: f64,
    spectrum: Vec<f64>,
}

/// Smooth spectrum from 2 to 4 Gaussian bumps, peak-normalised to 1.
fn smooth_spectrum<R: Rng>(rng: &mut R, grid: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    let span = hi - lo;
    let bumps: Vec<(f64, f64, f64)> = (0..rng.gen_range(2..=4))
        .map(|_| {
            (
                rng.gen_range(lo - 0.1 * span..=hi + 0.1 * span),
                rng.gen_range(0.15 * span..=0.4 * span),
                rng.gen_range(0.2..=1.0),
            )
        })
        .collect();
    let raw: Vec<f64> = grid
        .iter()
        .map(|&l| bumps.iter().map(|&(mu, sd, w)| w * (-(l - mu) * (l - mu) / (2.0 * sd * sd)).exp()).sum())
        .collect();
    let peak = raw.iter().cloned().fold(f64::MIN, f64::max);
    raw.into_iter().map(|v| v / peak).collect()
}

/// Deterministic scene: a faint smooth background plus `n_blobs` Gaussian
/// blobs, each carrying its own smooth spectrum.
pub fn generate_synthetic_scene(spec: &SceneSpec) -> Result<HsiCube> {
    if spec.height == 0 || spec.width == 0 {
        return invalid("scene dimensions must be positive");
    }
    let bands = wavelength_grid(spec.n_bands, spec.wavelength_min_nm, spec.wavelength_max_nm)?;
    let grid = bands.wavelengths();
    let (lo, hi) = (spec.wavelength_min_nm, spec.wavelength_max_nm);
    let mut rng = rng_from_seed(spec.seed);

    let phase = rng.gen_range(0.0..2.0 * PI);
    let background: Vec<f64> =
        grid.iter().map(|&l| 0.06 + 0.03 * (PI * (l - lo) / (hi - lo) + phase).sin()).collect();
    let (gy, gx) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));

    let size = spec.height.min(spec.width) as f64;
    let blobs: Vec<Blob> = (0..spec.n_blobs)
        .map(|_| {
            let sigma: f64 = rng.gen_range(SIGMA_MIN..=(size / 16.0).max(SIGMA_MIN));
            Blob {
                cy: rng.gen_range(0.0..spec.height as f64),
                cx: rng.gen_range(0.0..spec.width as f64),
                inv_two_var: 1.0 / (2.0 * sigma * sigma),
                amplitude: rng.gen_range(0.2..=0.7),
                spectrum: smooth_spectrum(&mut rng, &grid, lo, hi),
            }
        })
        .collect();

    let s = spec.n_bands;
    let mut data = vec![0f32; spec.height * spec.width * s];
    let mut acc = vec![0f64; s];
    for y in 0..spec.height {
        for x in 0..spec.width {
            let ny = y as f64 / spec.height as f64 - 0.5;
            let nx = x as f64 / spec.width as f64 - 0.5;
            let shade = 1.0 + 0.2 * (gy * ny + gx * nx);
            for (a, &b) in acc.iter_mut().zip(&background) {
                *a = b * shade;
            }
            for blob in &blobs {
                let d2 = (y as f64 - blob.cy).powi(2) + (x as f64 - blob.cx).powi(2);
                let k = blob.amplitude * (-d2 * blob.inv_two_var).exp();
                if k < 1e-12 {
                    continue;
                }
                for (a, &sv) in acc.iter_mut().zip(&blob.spectrum) {
                    *a += k * sv;
                }
            }
            let base = (y * spec.width + x) * s;
            for (d, &a) in data[base..base + s].iter_mut().zip(&acc) {
                *d = a as f32;
            }
        }
    }
    HsiCube::new(spec.height, spec.width, bands, data)
}
