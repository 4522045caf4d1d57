use rand::Rng;

use crate::error::{invalid, Result};
use crate::spectral::bands::SpectralBandSet;
use crate::spectral::cube::HsiCube;
use crate::spectral::resample::downsample_spatial;

/// One aligned LR/HR training example.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub lr_hsi: HsiCube,
    pub lr_rgb: HsiCube,
    pub hr_rgb: HsiCube,
    pub hr_hsi_target: HsiCube,
    pub requested_out_bands: SpectralBandSet,
}

impl TrainingSample {
    /// Degrades an aligned HR pair by `r` and keeps `input_band_indices` of the LR HSI.
    pub fn from_hr(hr_hsi: &HsiCube, hr_rgb: &HsiCube, r: usize, input_band_indices: &[usize]) -> Result<Self> {
        if hr_hsi.height() != hr_rgb.height() || hr_hsi.width() != hr_rgb.width() {
            return invalid("HR HSI and HR RGB must have the same spatial size");
        }
        check_indices(input_band_indices, hr_hsi.n_bands())?;
        let lr_full = downsample_spatial(hr_hsi, r)?;
        Ok(TrainingSample {
            lr_hsi: lr_full.select_bands(input_band_indices)?,
            lr_rgb: downsample_spatial(hr_rgb, r)?,
            hr_rgb: hr_rgb.clone(),
            hr_hsi_target: hr_hsi.clone(),
            requested_out_bands: hr_hsi.bands().clone(),
        })
    }

    pub fn scale(&self) -> usize {
        self.hr_rgb.height() / self.lr_rgb.height()
    }
}

pub(crate) fn check_indices(indices: &[usize], total: usize) -> Result<()> {
    if indices.is_empty() {
        return invalid("input band list is empty");
    }
    if let Some(&i) = indices.iter().find(|&&i| i >= total) {
        return invalid(format!("band index {i} out of range for {total} bands"));
    }
    if indices.windows(2).any(|w| w[1] <= w[0]) {
        return invalid(format!("band indices must be strictly increasing without duplicates: {indices:?}"));
    }
    Ok(())
}

/// Random aligned crop of `patch*r` HR pixels (so `patch` LR pixels), with
/// optional flips and a 90 degree rotation, each with probability 1/2 and
/// shared by every cube of the sample.
pub fn crop_patch_pair<R: Rng + ?Sized>(
    hr_hsi: &HsiCube,
    hr_rgb: &HsiCube,
    patch: usize,
    r: usize,
    input_band_indices: &[usize],
    augment: bool,
    rng: &mut R,
) -> Result<TrainingSample> {
    let hr = patch * r;
    if patch == 0 || r == 0 || hr > hr_hsi.height().min(hr_hsi.width()) {
        return invalid(format!(
            "patch {patch} at scale {r} does not fit a {}x{} cube",
            hr_hsi.height(),
            hr_hsi.width()
        ));
    }
    let y0 = rng.gen_range(0..=hr_hsi.height() - hr);
    let x0 = rng.gen_range(0..=hr_hsi.width() - hr);
    let mut hsi = hr_hsi.crop(y0, x0, hr, hr)?;
    let mut rgb = hr_rgb.crop(y0, x0, hr, hr)?;
    if augment {
        if rng.gen_bool(0.5) {
            hsi = hsi.flip_horizontal();
            rgb = rgb.flip_horizontal();
        }
        if rng.gen_bool(0.5) {
            hsi = hsi.flip_vertical();
            rgb = rgb.flip_vertical();
        }
        if rng.gen_bool(0.5) {
            hsi = hsi.rotate90();
            rgb = rgb.rotate90();
        }
    }
    TrainingSample::from_hr(&hsi, &rgb, r, input_band_indices)
}
