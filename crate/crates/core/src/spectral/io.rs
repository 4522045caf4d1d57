//! `.hsc` cube files and 16-bit PGM images.
//!
//! `.hsc` layout (little-endian): magic `HSIC`, u32 version = 1, u32 H,
//! u32 W, u32 S, S records of (f32 peak wavelength, u8 wide flag), then
//! H*W*S f32 values ordered row, column, band.

use std::fs;
use std::path::Path;

use crate::error::{MlsrError, Result};
use crate::spectral::bands::{BandDescriptor, SpectralBandSet};
use crate::spectral::cube::HsiCube;

pub const CUBE_MAGIC: &[u8; 4] = b"HSIC";
pub const CUBE_VERSION: u32 = 1;

fn format_err<T>(offset: usize, reason: impl Into<String>) -> Result<T> {
    Err(MlsrError::Format { offset: offset as u64, reason: reason.into() })
}

pub fn encode_cube(cube: &HsiCube) -> Vec<u8> {
    let s = cube.n_bands();
    let mut out = Vec::with_capacity(20 + 5 * s + 4 * cube.data().len());
    out.extend_from_slice(CUBE_MAGIC);
    for v in [CUBE_VERSION, cube.height() as u32, cube.width() as u32, s as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for b in cube.bands().bands() {
        out.extend_from_slice(&(b.peak_wavelength_nm as f32).to_le_bytes());
        out.push(b.wide_band as u8);
    }
    for &v in cube.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_cube(bytes: &[u8]) -> Result<HsiCube> {
    if bytes.len() < 20 {
        return format_err(bytes.len(), "truncated header");
    }
    if &bytes[..4] != CUBE_MAGIC {
        return format_err(0, "bad magic, expected HSIC");
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
    let version = word(4);
    if version != CUBE_VERSION as usize {
        return format_err(4, format!("unsupported version {version}"));
    }
    let (h, w, s) = (word(8), word(12), word(16));
    if h == 0 || w == 0 || s == 0 {
        return format_err(8, format!("zero dimension in {h}x{w}x{s}"));
    }
    let mut pos = 20;
    let band_end = pos + 5 * s;
    if bytes.len() < band_end {
        return format_err(bytes.len(), "truncated band records");
    }
    let mut bands = Vec::with_capacity(s);
    for _ in 0..s {
        let peak = f32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap());
        let flag = bytes[pos + 4];
        if flag > 1 {
            return format_err(pos + 4, format!("wide-band flag must be 0 or 1, got {flag}"));
        }
        bands.push(BandDescriptor { peak_wavelength_nm: peak as f64, wide_band: flag == 1 });
        pos += 5;
    }
    let bands = SpectralBandSet::new(bands).or_else(|e| format_err(20, e.to_string()))?;
    let n = h * w * s;
    if bytes.len() < pos + 4 * n {
        return format_err(bytes.len(), format!("truncated payload: need {} value bytes", 4 * n));
    }
    if bytes.len() > pos + 4 * n {
        return format_err(pos + 4 * n, "trailing bytes after payload");
    }
    let mut data = Vec::with_capacity(n);
    for (i, c) in bytes[pos..].chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(c.try_into().unwrap());
        if !v.is_finite() {
            return format_err(pos + 4 * i, "non-finite value in payload");
        }
        data.push(v);
    }
    HsiCube::new(h, w, bands, data)
}

pub fn write_cube(cube: &HsiCube, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_cube(cube))?;
    Ok(())
}

pub fn read_cube(path: impl AsRef<Path>) -> Result<HsiCube> {
    decode_cube(&fs::read(path)?)
}

/// Binary 16-bit PGM (`P5`, maxval 65535, big-endian samples).
pub fn encode_pgm16(width: usize, height: usize, pixels: &[f64]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n65535\n").into_bytes();
    for &p in pixels {
        let q = (p.clamp(0.0, 1.0) * 65535.0).round() as u16;
        out.extend_from_slice(&q.to_be_bytes());
    }
    out
}

pub fn write_pgm16(path: impl AsRef<Path>, width: usize, height: usize, pixels: &[f64]) -> Result<()> {
    fs::write(path, encode_pgm16(width, height, pixels))?;
    Ok(())
}

/// Raw 16-bit samples of a `P5` image written by [`encode_pgm16`].
pub fn decode_pgm16(bytes: &[u8]) -> Result<(usize, usize, Vec<u16>)> {
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return format_err(pos, "truncated PGM header");
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    if fields[0] != "P5" {
        return format_err(0, "not a binary PGM");
    }
    let parse = |s: &str, at: usize| s.parse::<usize>().or_else(|_| format_err(at, format!("bad header field {s:?}")));
    let (w, h, max) = (parse(&fields[1], 3)?, parse(&fields[2], 3)?, parse(&fields[3], 3)?);
    if max != 65535 {
        return format_err(3, format!("expected maxval 65535, got {max}"));
    }
    if bytes.len() != pos + 2 * w * h {
        return format_err(bytes.len(), "PGM payload size mismatch");
    }
    let px = bytes[pos..].chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect();
    Ok((w, h, px))
}
