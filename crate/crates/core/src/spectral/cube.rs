use crate::error::{invalid, MlsrError, Result};
use crate::spectral::bands::SpectralBandSet;

/// `height x width x bands` image cube, row-major with the band index innermost.
/// Values are clamped into `[0, 1]` at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct HsiCube {
    height: usize,
    width: usize,
    bands: SpectralBandSet,
    data: Vec<f32>,
}

impl HsiCube {
    pub fn new(height: usize, width: usize, bands: SpectralBandSet, mut data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return invalid(format!("cube dimensions must be positive, got {height}x{width}"));
        }
        let want = height * width * bands.len();
        if data.len() != want {
            return invalid(format!("cube {height}x{width}x{} needs {want} values, got {}", bands.len(), data.len()));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(MlsrError::NonFinite(format!("cube value at flat index {i}")));
        }
        for v in &mut data {
            *v = v.clamp(0.0, 1.0);
        }
        Ok(HsiCube { height, width, bands, data })
    }

    /// Builds a cube from per-band `height x width` planes.
    pub fn from_planes(height: usize, width: usize, bands: SpectralBandSet, planes: &[Vec<f64>]) -> Result<Self> {
        if planes.len() != bands.len() {
            return invalid(format!("{} planes for {} bands", planes.len(), bands.len()));
        }
        if let Some(p) = planes.iter().find(|p| p.len() != height * width) {
            return invalid(format!("plane of {} values for a {height}x{width} cube", p.len()));
        }
        let s = bands.len();
        let mut data = vec![0f32; height * width * s];
        for (b, plane) in planes.iter().enumerate() {
            for (px, &v) in plane.iter().enumerate() {
                data[px * s + b] = v as f32;
            }
        }
        HsiCube::new(height, width, bands, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn n_bands(&self) -> usize {
        self.bands.len()
    }

    pub fn bands(&self) -> &SpectralBandSet {
        &self.bands
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, y: usize, x: usize, band: usize) -> f32 {
        self.data[(y * self.width + x) * self.n_bands() + band]
    }

    /// All band values of one pixel.
    pub fn spectrum(&self, y: usize, x: usize) -> &[f32] {
        let s = self.n_bands();
        let i = (y * self.width + x) * s;
        &self.data[i..i + s]
    }

    /// One band as a row-major `height x width` plane.
    pub fn band_plane(&self, band: usize) -> Vec<f32> {
        self.data.iter().skip(band).step_by(self.n_bands()).copied().collect()
    }

    pub fn band_plane_f64(&self, band: usize) -> Vec<f64> {
        self.data.iter().skip(band).step_by(self.n_bands()).map(|&v| v as f64).collect()
    }

    pub fn select_bands(&self, indices: &[usize]) -> Result<HsiCube> {
        let bands = self.bands.select(indices)?;
        let s = self.n_bands();
        let mut data = Vec::with_capacity(self.height * self.width * indices.len());
        for px in self.data.chunks(s) {
            data.extend(indices.iter().map(|&i| px[i]));
        }
        Ok(HsiCube { height: self.height, width: self.width, bands, data })
    }

    pub fn crop(&self, y0: usize, x0: usize, height: usize, width: usize) -> Result<HsiCube> {
        if height == 0 || width == 0 || y0 + height > self.height || x0 + width > self.width {
            return invalid(format!(
                "crop {height}x{width} at ({y0},{x0}) outside {}x{} cube",
                self.height, self.width
            ));
        }
        let s = self.n_bands();
        let mut data = Vec::with_capacity(height * width * s);
        for y in y0..y0 + height {
            let start = (y * self.width + x0) * s;
            data.extend_from_slice(&self.data[start..start + width * s]);
        }
        Ok(HsiCube { height, width, bands: self.bands.clone(), data })
    }

    fn remap(&self, height: usize, width: usize, src: impl Fn(usize, usize) -> (usize, usize)) -> HsiCube {
        let s = self.n_bands();
        let mut data = Vec::with_capacity(self.data.len());
        for y in 0..height {
            for x in 0..width {
                let (sy, sx) = src(y, x);
                data.extend_from_slice(self.spectrum(sy, sx));
            }
        }
        debug_assert_eq!(data.len(), height * width * s);
        HsiCube { height, width, bands: self.bands.clone(), data }
    }

    /// Mirror left-right.
    pub fn flip_horizontal(&self) -> HsiCube {
        let w = self.width;
        self.remap(self.height, w, |y, x| (y, w - 1 - x))
    }

    /// Mirror top-bottom.
    pub fn flip_vertical(&self) -> HsiCube {
        let h = self.height;
        self.remap(h, self.width, |y, x| (h - 1 - y, x))
    }

    /// Transpose-then-mirror rotation by 90 degrees clockwise.
    pub fn rotate90(&self) -> HsiCube {
        let h = self.height;
        self.remap(self.width, h, |y, x| (h - 1 - x, y))
    }

    /// Same pixels with replaced band descriptors.
    pub fn with_bands(mut self, bands: SpectralBandSet) -> Result<HsiCube> {
        if bands.len() != self.n_bands() {
            return invalid(format!("{} descriptors for a {}-band cube", bands.len(), self.n_bands()));
        }
        self.bands = bands;
        Ok(self)
    }
}
