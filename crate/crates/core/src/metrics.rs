//! PSNR, SSIM, per-band cube reports and error maps.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::spectral::io::write_pgm16;
use crate::spectral::HsiCube;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

/// `10 log10(peak^2 / MSE)`; infinite when the images are identical.
pub fn psnr(pred: &[f64], target: &[f64], peak: f64) -> Result<f64> {
    if pred.len() != target.len() || pred.is_empty() {
        return invalid(format!("psnr needs equal nonempty images, got {} and {}", pred.len(), target.len()));
    }
    let mse = pred.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / pred.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

/// Normalised 1-d Gaussian taps; the 2-d window is their outer product.
pub fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let raw: Vec<f64> = (0..size).map(|i| (-(i as f64 - c).powi(2) / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// Mean local SSIM over all fully contained 11x11 Gaussian windows (L = 1).
pub fn ssim(pred: &[f64], target: &[f64], height: usize, width: usize) -> Result<f64> {
    if pred.len() != height * width || target.len() != height * width {
        return invalid("ssim image sizes do not match the given dimensions");
    }
    let k = SSIM_WINDOW;
    if height < k || width < k {
        return invalid(format!("ssim needs at least {k}x{k} pixels, got {height}x{width}"));
    }
    let taps = gaussian_taps(k, SSIM_SIGMA);
    let (c1, c2) = (K1 * K1, K2 * K2);
    let (oh, ow) = (height - k + 1, width - k + 1);
    // Separable filtering: rows first, then columns, of x, y, x^2, y^2, xy.
    let fields: [Vec<f64>; 5] = [
        pred.to_vec(),
        target.to_vec(),
        pred.iter().map(|v| v * v).collect(),
        target.iter().map(|v| v * v).collect(),
        pred.iter().zip(target).map(|(a, b)| a * b).collect(),
    ];
    let filtered: Vec<Vec<f64>> = fields
        .iter()
        .map(|f| {
            let mut rows = vec![0.0; height * ow];
            for y in 0..height {
                for x in 0..ow {
                    rows[y * ow + x] = taps.iter().enumerate().map(|(i, t)| t * f[y * width + x + i]).sum();
                }
            }
            let mut out = vec![0.0; oh * ow];
            for y in 0..oh {
                for x in 0..ow {
                    out[y * ow + x] = taps.iter().enumerate().map(|(i, t)| t * rows[(y + i) * ow + x]).sum();
                }
            }
            out
        })
        .collect();
    let mut total = 0.0;
    for i in 0..oh * ow {
        let (mx, my) = (filtered[0][i], filtered[1][i]);
        let vx = filtered[2][i] - mx * mx;
        let vy = filtered[3][i] - my * my;
        let cxy = filtered[4][i] - mx * my;
        total += ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
    }
    Ok(total / (oh * ow) as f64)
}

/// Serialises infinite PSNR values as the string "inf".
mod inf_num {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Num {
        F(f64),
        S(String),
    }

    fn to(v: f64) -> Num {
        if v == f64::INFINITY {
            Num::S("inf".into())
        } else {
            Num::F(v)
        }
    }

    fn from<E: serde::de::Error>(n: Num) -> Result<f64, E> {
        match n {
            Num::F(v) => Ok(v),
            Num::S(s) if s == "inf" => Ok(f64::INFINITY),
            Num::S(s) => Err(E::custom(format!("bad number {s:?}"))),
        }
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        to(*v).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        from(Num::deserialize(d)?)
    }

    pub mod vec {
        use super::*;

        pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
            v.iter().map(|&x| to(x)).collect::<Vec<_>>().serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
            Vec::<Num>::deserialize(d)?.into_iter().map(from).collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Mean over bands with finite PSNR; infinite if every band is exact.
    #[serde(with = "inf_num")]
    pub mean_psnr_db: f64,
    pub mean_ssim: f64,
    #[serde(with = "inf_num::vec")]
    pub per_band_psnr_db: Vec<f64>,
    pub per_band_ssim: Vec<f64>,
    /// Sample standard deviation of the finite per-band PSNRs (0 for fewer than two).
    pub flatness_std_db: f64,
    /// Bands whose PSNR is infinite and so left out of the means.
    pub n_inf_psnr: usize,
}

impl MetricReport {
    pub fn from_per_band(per_band_psnr_db: Vec<f64>, per_band_ssim: Vec<f64>) -> Self {
        let finite: Vec<f64> = per_band_psnr_db.iter().copied().filter(|v| v.is_finite()).collect();
        let n_inf_psnr = per_band_psnr_db.len() - finite.len();
        let mean_psnr_db =
            if finite.is_empty() { f64::INFINITY } else { finite.iter().sum::<f64>() / finite.len() as f64 };
        let flatness_std_db = if finite.len() < 2 {
            0.0
        } else {
            let var = finite.iter().map(|v| (v - mean_psnr_db).powi(2)).sum::<f64>() / (finite.len() - 1) as f64;
            var.sqrt()
        };
        let mean_ssim = per_band_ssim.iter().sum::<f64>() / per_band_ssim.len().max(1) as f64;
        MetricReport { mean_psnr_db, mean_ssim, per_band_psnr_db, per_band_ssim, flatness_std_db, n_inf_psnr }
    }

    /// Report restricted to the given band positions.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self::from_per_band(
            indices.iter().map(|&i| self.per_band_psnr_db[i]).collect(),
            indices.iter().map(|&i| self.per_band_ssim[i]).collect(),
        )
    }
}

/// Band-wise PSNR and SSIM of two cubes with identical band sets.
pub fn cube_metrics(pred: &HsiCube, target: &HsiCube) -> Result<MetricReport> {
    if pred.bands() != target.bands() {
        return invalid("predicted and target cubes have different bands");
    }
    if (pred.height(), pred.width()) != (target.height(), target.width()) {
        return invalid("predicted and target cubes have different sizes");
    }
    let mut p = Vec::with_capacity(pred.n_bands());
    let mut s = Vec::with_capacity(pred.n_bands());
    for b in 0..pred.n_bands() {
        let (x, y) = (pred.band_plane_f64(b), target.band_plane_f64(b));
        p.push(psnr(&x, &y, 1.0)?);
        s.push(ssim(&x, &y, pred.height(), pred.width())?);
    }
    Ok(MetricReport::from_per_band(p, s))
}

pub const ERROR_MAP_SCALE: f64 = 4.0;

/// Writes `|pred - target| * scale` (saturating at 1) as a 16-bit PGM plus a
/// `.txt` sidecar recording the scale. Returns the sidecar path.
pub fn error_map(pred: &[f64], target: &[f64], width: usize, height: usize, scale: f64, path: &Path) -> Result<PathBuf> {
    if pred.len() != width * height || target.len() != width * height {
        return invalid("error map band sizes do not match");
    }
    let px: Vec<f64> = pred.iter().zip(target).map(|(a, b)| ((a - b).abs() * scale).min(1.0)).collect();
    write_pgm16(path, width, height, &px)?;
    let sidecar = path.with_extension("txt");
    fs::write(&sidecar, format!("absolute error scaled by {scale}, saturating at 1.0 (65535)\nscale={scale}\n"))?;
    Ok(sidecar)
}

fn fmt_num(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else {
        format!("{v}")
    }
}

/// `band_index,wavelength_nm,psnr_db,ssim` rows.
pub fn band_metrics_csv(report: &MetricReport, wavelengths_nm: &[f64], band_indices: &[usize]) -> Result<String> {
    let n = report.per_band_psnr_db.len();
    if wavelengths_nm.len() != n || band_indices.len() != n {
        return invalid("band metadata does not match the report");
    }
    let mut out = String::from("band_index,wavelength_nm,psnr_db,ssim\n");
    for i in 0..n {
        writeln!(
            out,
            "{},{},{},{}",
            band_indices[i],
            wavelengths_nm[i],
            fmt_num(report.per_band_psnr_db[i]),
            report.per_band_ssim[i]
        )
        .unwrap();
    }
    Ok(out)
}
