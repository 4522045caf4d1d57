use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// One spectral channel, identified by its peak wavelength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandDescriptor {
    pub peak_wavelength_nm: f64,
    /// True for wide RGB-like bands, false for narrow hyperspectral bands.
    pub wide_band: bool,
}

impl BandDescriptor {
    pub fn narrow(peak_wavelength_nm: f64) -> Self {
        BandDescriptor { peak_wavelength_nm, wide_band: false }
    }

    pub fn wide(peak_wavelength_nm: f64) -> Self {
        BandDescriptor { peak_wavelength_nm, wide_band: true }
    }

    pub fn flag(&self) -> f64 {
        if self.wide_band {
            1.0
        } else {
            0.0
        }
    }
}

/// Ordered, nonempty list of bands. Narrow-band wavelengths are strictly
/// increasing; free-order band requests are plain `&[BandDescriptor]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<BandDescriptor>", into = "Vec<BandDescriptor>")]
pub struct SpectralBandSet {
    bands: Vec<BandDescriptor>,
}

impl TryFrom<Vec<BandDescriptor>> for SpectralBandSet {
    type Error = crate::error::MlsrError;

    fn try_from(bands: Vec<BandDescriptor>) -> Result<Self> {
        SpectralBandSet::new(bands)
    }
}

impl From<SpectralBandSet> for Vec<BandDescriptor> {
    fn from(s: SpectralBandSet) -> Self {
        s.bands
    }
}

impl SpectralBandSet {
    pub fn new(bands: Vec<BandDescriptor>) -> Result<Self> {
        if bands.is_empty() {
            return invalid("band set must be nonempty");
        }
        if let Some(b) = bands.iter().find(|b| !(b.peak_wavelength_nm.is_finite() && b.peak_wavelength_nm > 0.0)) {
            return invalid(format!("peak wavelength must be positive, got {}", b.peak_wavelength_nm));
        }
        let narrow: Vec<f64> = bands.iter().filter(|b| !b.wide_band).map(|b| b.peak_wavelength_nm).collect();
        if narrow.windows(2).any(|w| w[1] <= w[0]) {
            return invalid("narrow-band wavelengths must be strictly increasing");
        }
        Ok(SpectralBandSet { bands })
    }

    pub fn bands(&self) -> &[BandDescriptor] {
        &self.bands
    }

    pub fn len(&self) -> usize {
        self.bands.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn wavelengths(&self) -> Vec<f64> {
        self.bands.iter().map(|b| b.peak_wavelength_nm).collect()
    }

    /// Bands at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<SpectralBandSet> {
        if let Some(&i) = indices.iter().find(|&&i| i >= self.len()) {
            return invalid(format!("band index {i} out of range for {} bands", self.len()));
        }
        SpectralBandSet::new(indices.iter().map(|&i| self.bands[i]).collect())
    }

    /// `[self, other]` concatenation.
    pub fn concat(&self, other: &SpectralBandSet) -> Result<SpectralBandSet> {
        let mut bands = self.bands.clone();
        bands.extend_from_slice(&other.bands);
        SpectralBandSet::new(bands)
    }
}

/// `n_bands` narrow bands evenly spaced over `[min, max]`, endpoints included.
pub fn wavelength_grid(n_bands: usize, wavelength_min_nm: f64, wavelength_max_nm: f64) -> Result<SpectralBandSet> {
    if n_bands < 2 {
        return invalid(format!("wavelength grid needs at least 2 bands, got {n_bands}"));
    }
    if !(wavelength_min_nm > 0.0 && wavelength_max_nm > wavelength_min_nm) {
        return invalid(format!("bad wavelength range [{wavelength_min_nm}, {wavelength_max_nm}]"));
    }
    let span = wavelength_max_nm - wavelength_min_nm;
    let steps = (n_bands - 1) as f64;
    let bands = (0..n_bands)
        .map(|i| BandDescriptor::narrow(wavelength_min_nm + span * i as f64 / steps))
        .collect();
    SpectralBandSet::new(bands)
}

/// `k` evenly spread indices over `0..total`: `round(j * (total-1) / (k-1))`
/// with exact halves rounded down.
pub fn sample_bands_equidistant(total_bands: usize, k: usize) -> Result<Vec<usize>> {
    if k < 2 || k > total_bands {
        return invalid(format!("equidistant sampling needs 2 <= k <= {total_bands}, got {k}"));
    }
    let den = k - 1;
    Ok((0..k)
        .map(|j| {
            let num = j * (total_bands - 1);
            let (q, rem) = (num / den, num % den);
            if 2 * rem > den {
                q + 1
            } else {
                q
            }
        })
        .collect())
}

/// `k` distinct sorted indices drawn uniformly without replacement.
pub fn sample_bands_random<R: Rng + ?Sized>(total_bands: usize, k: usize, rng: &mut R) -> Result<Vec<usize>> {
    if k == 0 || k > total_bands {
        return invalid(format!("random sampling needs 1 <= k <= {total_bands}, got {k}"));
    }
    let mut idx = sample(rng, total_bands, k).into_vec();
    idx.sort_unstable();
    Ok(idx)
}
