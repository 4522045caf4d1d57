use crate::error::{invalid, Result};
use crate::spectral::bands::{BandDescriptor, SpectralBandSet};
use crate::spectral::cube::HsiCube;

/// Three Gaussian spectral response curves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RgbResponses {
    pub centers_nm: [f64; 3],
    pub sigma_nm: f64,
}

impl Default for RgbResponses {
    fn default() -> Self {
        RgbResponses { centers_nm: [460.0, 550.0, 620.0], sigma_nm: 40.0 }
    }
}

impl RgbResponses {
    /// Per-channel weights over `wavelengths`, each row summing to one.
    pub fn weights(&self, wavelengths: &[f64]) -> [Vec<f64>; 3] {
        self.centers_nm.map(|c| {
            let raw: Vec<f64> = wavelengths
                .iter()
                .map(|&l| (-(l - c) * (l - c) / (2.0 * self.sigma_nm * self.sigma_nm)).exp())
                .collect();
            let sum: f64 = raw.iter().sum();
            raw.into_iter().map(|w| w / sum).collect()
        })
    }
}

/// Response-weighted RGB rendering of a hyperspectral cube. The output bands
/// carry the response peaks and are flagged wide.
pub fn synthesize_rgb(cube: &HsiCube, responses: &RgbResponses) -> Result<HsiCube> {
    if cube.n_bands() < 3 {
        return invalid(format!("RGB synthesis needs at least 3 bands, got {}", cube.n_bands()));
    }
    let weights = responses.weights(&cube.bands().wavelengths());
    let mut data = Vec::with_capacity(cube.height() * cube.width() * 3);
    for px in cube.data().chunks(cube.n_bands()) {
        for w in &weights {
            data.push(w.iter().zip(px).map(|(&wi, &v)| wi * v as f64).sum::<f64>() as f32);
        }
    }
    let bands = SpectralBandSet::new(responses.centers_nm.iter().map(|&c| BandDescriptor::wide(c)).collect())?;
    HsiCube::new(cube.height(), cube.width(), bands, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::bands::wavelength_grid;

    #[test]
    fn flat_spectra_map_to_equal_channels() {
        let bands = wavelength_grid(31, 400.0, 700.0).unwrap();
        for &v in &[0.0f32, 0.3, 0.77, 1.0] {
            let c = HsiCube::new(2, 2, bands.clone(), vec![v; 4 * 31]).unwrap();
            let rgb = synthesize_rgb(&c, &RgbResponses::default()).unwrap();
            assert!(rgb.data().iter().all(|&x| (x as f64 - v as f64).abs() < 1e-9));
            assert_eq!(rgb.bands().wavelengths(), vec![460.0, 550.0, 620.0]);
            assert!(rgb.bands().bands().iter().all(|b| b.wide_band));
        }
    }

    #[test]
    fn single_green_band_lights_green_most() {
        let bands = wavelength_grid(31, 400.0, 700.0).unwrap();
        let mut data = vec![0f32; 3 * 31];
        for px in 0..3 {
            data[px * 31 + 15] = 0.8; // 550 nm
        }
        let c = HsiCube::new(1, 3, bands, data).unwrap();
        let rgb = synthesize_rgb(&c, &RgbResponses::default()).unwrap();
        for px in rgb.data().chunks(3) {
            assert!(px[1] > px[0] && px[1] > px[2], "{px:?}");
        }
    }
}
