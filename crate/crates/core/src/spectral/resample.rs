//! Separable bicubic spatial resampling (a = -0.5).

use crate::error::{invalid, Result};
use crate::spectral::cube::HsiCube;

const CUBIC_A: f64 = -0.5;

pub(crate) fn cubic_kernel(t: f64) -> f64 {
    let t = t.abs();
    let a = CUBIC_A;
    if t <= 1.0 {
        ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0
    } else if t < 2.0 {
        ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a
    } else {
        0.0
    }
}

/// Normalised taps for each output sample. Downscaling stretches the kernel
/// by the scale factor (antialiasing); taps falling outside the input are
/// dropped and the remainder renormalised.
fn taps(in_len: usize, out_len: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = in_len as f64 / out_len as f64;
    let support = scale.max(1.0);
    (0..out_len)
        .map(|i| {
            let center = (i as f64 + 0.5) * scale - 0.5;
            let lo = (center - 2.0 * support).floor().max(0.0) as usize;
            let hi = ((center + 2.0 * support).ceil() as usize).min(in_len - 1);
            let mut t: Vec<(usize, f64)> = (lo..=hi)
                .map(|j| (j, cubic_kernel((j as f64 - center) / support)))
                .filter(|&(_, w)| w != 0.0)
                .collect();
            let sum: f64 = t.iter().map(|&(_, w)| w).sum();
            for tap in &mut t {
                tap.1 /= sum;
            }
            t
        })
        .collect()
}

/// Resamples one row-major plane to `out_h x out_w`.
pub fn resize_plane(plane: &[f64], h: usize, w: usize, out_h: usize, out_w: usize) -> Vec<f64> {
    let tx = taps(w, out_w);
    let ty = taps(h, out_h);
    let mut rows = vec![0.0; h * out_w];
    for y in 0..h {
        let src = &plane[y * w..(y + 1) * w];
        for (x, t) in tx.iter().enumerate() {
            rows[y * out_w + x] = t.iter().map(|&(j, wt)| src[j] * wt).sum();
        }
    }
    let mut out = vec![0.0; out_h * out_w];
    for (y, t) in ty.iter().enumerate() {
        for x in 0..out_w {
            out[y * out_w + x] = t.iter().map(|&(j, wt)| rows[j * out_w + x] * wt).sum();
        }
    }
    out
}

fn resize_cube(cube: &HsiCube, out_h: usize, out_w: usize) -> Result<HsiCube> {
    let planes: Vec<Vec<f64>> = (0..cube.n_bands())
        .map(|b| resize_plane(&cube.band_plane_f64(b), cube.height(), cube.width(), out_h, out_w))
        .collect();
    HsiCube::from_planes(out_h, out_w, cube.bands().clone(), &planes)
}

/// Shrinks every band by the integer factor `r` with an antialiased bicubic kernel.
pub fn downsample_spatial(cube: &HsiCube, r: usize) -> Result<HsiCube> {
    if r == 0 || cube.height() % r != 0 || cube.width() % r != 0 {
        return invalid(format!("{}x{} cube not divisible by scale {r}", cube.height(), cube.width()));
    }
    if r == 1 {
        return Ok(cube.clone());
    }
    resize_cube(cube, cube.height() / r, cube.width() / r)
}

/// Enlarges every band by the integer factor `r` with plain bicubic interpolation.
pub fn upsample_spatial(cube: &HsiCube, r: usize) -> Result<HsiCube> {
    if r == 0 {
        return invalid("scale must be positive");
    }
    if r == 1 {
        return Ok(cube.clone());
    }
    resize_cube(cube, cube.height() * r, cube.width() * r)
}
