use std::fs;
use std::path::{Path, PathBuf};

use mlsr_autodiff::{Real, Tensor};
use serde::{Deserialize, Serialize};

use crate::baselines::{spectral_resample_cube, InterpMethod, PlainCnn};
use crate::error::{invalid, Result};
use crate::experiment::config::{ExperimentConfig, TileConfig};
use crate::experiment::data::{eval_settings, BandSetting, SceneSet};
use crate::metrics::{band_metrics_csv, cube_metrics, MetricReport};
use crate::net::{tensor_to_cube, MlsrModel, NetInputs};
use crate::spectral::{downsample_spatial, upsample_spatial, BandDescriptor, HsiCube, SpectralBandSet};

/// Full-cube inputs of one evaluation case.
#[derive(Debug, Clone)]
pub struct EvalInput<'a> {
    pub lr_hsi: &'a HsiCube,
    pub lr_rgb: &'a HsiCube,
    pub hr_rgb: &'a HsiCube,
    pub out_bands: &'a SpectralBandSet,
    pub scale: usize,
}

/// A method mapping LR inputs to an HR cube on the requested bands.
pub trait Predictor {
    fn name(&self) -> String;
    fn predict_cube(&self, input: &EvalInput, tiling: &TileConfig) -> Result<HsiCube>;
}

/// Tile spans `[start, end)` covering `len` with at most `tile` per span.
pub fn tile_spans(len: usize, tile: usize, overlap: usize) -> Vec<(usize, usize)> {
    if len <= tile {
        return vec![(0, len)];
    }
    let step = tile - overlap;
    let mut spans = Vec::new();
    let mut s = 0;
    loop {
        spans.push((s, s + tile));
        if s + tile >= len {
            break;
        }
        s = (s + step).min(len - tile);
    }
    spans
}

/// Linear blend weight of HR position `p` inside span `i` of `spans` (HR units).
fn blend_weight(spans: &[(usize, usize)], i: usize, p: usize) -> f64 {
    let (a, b) = spans[i];
    let mut w: f64 = 1.0;
    if i > 0 {
        let ov = (spans[i - 1].1 - a) as f64;
        w = w.min(((p - a) as f64 + 0.5) / ov.max(1.0));
    }
    if i + 1 < spans.len() {
        let ov = (b - spans[i + 1].0) as f64;
        w = w.min(((b - p) as f64 - 0.5) / ov.max(1.0));
    }
    w.clamp(0.0, 1.0)
}

/// Whole-image network inference. Images larger than the tile budget are
/// cut into overlapping tiles, each padded by `halo` LR pixels of real
/// context (so borders see the same neighbourhood as an untiled pass), and
/// blended linearly across the overlaps.
pub fn infer_tiled<T: Real>(
    run: &dyn Fn(&NetInputs<T>) -> Result<Tensor<T>>,
    lr_hsi: &HsiCube,
    lr_rgb: &HsiCube,
    hr_rgb: &HsiCube,
    out_bands: &[BandDescriptor],
    scale: usize,
    halo: usize,
    tiling: &TileConfig,
) -> Result<Tensor<T>> {
    let (h, w, s) = (lr_hsi.height(), lr_hsi.width(), out_bands.len());
    if hr_rgb.height() != h * scale || hr_rgb.width() != w * scale {
        return invalid("HR RGB does not match the LR size at this scale");
    }
    if h <= tiling.max_tile_lr && w <= tiling.max_tile_lr {
        return run(&NetInputs::new(lr_hsi, lr_rgb, hr_rgb, out_bands)?);
    }
    let ys = tile_spans(h, tiling.max_tile_lr, tiling.overlap_lr);
    let xs = tile_spans(w, tiling.max_tile_lr, tiling.overlap_lr);
    let hr = |v: &[(usize, usize)]| -> Vec<(usize, usize)> { v.iter().map(|&(a, b)| (a * scale, b * scale)).collect() };
    let (ys_hr, xs_hr) = (hr(&ys), hr(&xs));
    let (hh, ww) = (h * scale, w * scale);
    let mut acc = vec![0f64; s * hh * ww];
    let mut wsum = vec![0f64; hh * ww];
    for (iy, &(y0, y1)) in ys.iter().enumerate() {
        for (ix, &(x0, x1)) in xs.iter().enumerate() {
            let (ey0, ey1) = (y0.saturating_sub(halo), (y1 + halo).min(h));
            let (ex0, ex1) = (x0.saturating_sub(halo), (x1 + halo).min(w));
            let (eh, ew) = (ey1 - ey0, ex1 - ex0);
            let inputs = NetInputs::new(
                &lr_hsi.crop(ey0, ex0, eh, ew)?,
                &lr_rgb.crop(ey0, ex0, eh, ew)?,
                &hr_rgb.crop(ey0 * scale, ex0 * scale, eh * scale, ew * scale)?,
                out_bands,
            )?;
            let out = run(&inputs)?;
            let (oh, ow) = (eh * scale, ew * scale);
            for py in y0 * scale..y1 * scale {
                let wy = blend_weight(&ys_hr, iy, py);
                for px in x0 * scale..x1 * scale {
                    let wt = wy * blend_weight(&xs_hr, ix, px);
                    if wt == 0.0 {
                        continue;
                    }
                    let (ly, lx) = (py - ey0 * scale, px - ex0 * scale);
                    for c in 0..s {
                        acc[(c * hh + py) * ww + px] += wt * out.data()[(c * oh + ly) * ow + lx].widen();
                    }
                    wsum[py * ww + px] += wt;
                }
            }
        }
    }
    let data = acc
        .iter()
        .enumerate()
        .map(|(i, &v)| T::cast(v / wsum[i % (hh * ww)]))
        .collect();
    Ok(Tensor::new(vec![1, s, hh, ww], data)?)
}

pub struct MlsrPredictor<'a, T>(pub &'a MlsrModel<T>);

impl<T: Real> Predictor for MlsrPredictor<'_, T> {
    fn name(&self) -> String {
        "mlsr".into()
    }

    fn predict_cube(&self, input: &EvalInput, tiling: &TileConfig) -> Result<HsiCube> {
        let model = self.0;
        if input.scale != model.config.scale {
            return invalid(format!("model scale {} cannot serve scale {}", model.config.scale, input.scale));
        }
        let run = |inp: &NetInputs<T>| model.predict(inp);
        let out = infer_tiled(
            &run,
            input.lr_hsi,
            input.lr_rgb,
            input.hr_rgb,
            input.out_bands.bands(),
            input.scale,
            model.config.receptive_radius_lr(),
            tiling,
        )?;
        tensor_to_cube(&out, 0, input.out_bands.clone())
    }
}

/// Stage-1 interpolation then the trained stage-2 network; output bands are
/// taken from the network's fixed grid.
pub struct TwoStagePredictor<'a, T> {
    pub net: &'a PlainCnn<T>,
    pub method: InterpMethod,
}

impl<T: Real> Predictor for TwoStagePredictor<'_, T> {
    fn name(&self) -> String {
        format!("{:?}+plain_cnn", self.method).to_lowercase()
    }

    fn predict_cube(&self, input: &EvalInput, tiling: &TileConfig) -> Result<HsiCube> {
        let net = self.net;
        let grid = &net.bands;
        let pos: Vec<usize> = input
            .out_bands
            .bands()
            .iter()
            .map(|b| grid.bands().iter().position(|g| g == b))
            .collect::<Option<_>>()
            .ok_or_else(|| crate::MlsrError::InvalidArgument("requested band outside the stage-2 grid".into()))?;
        let s1 = spectral_resample_cube(input.lr_hsi, grid, self.method)?;
        let run = |inp: &NetInputs<T>| net.predict(inp);
        let out = infer_tiled(&run, &s1, input.lr_rgb, input.hr_rgb, grid.bands(), input.scale, net.receptive_radius_lr(), tiling)?;
        tensor_to_cube(&out, 0, grid.clone())?.select_bands(&pos)
    }
}

/// Spectral interpolation onto the output bands, then bicubic upsampling.
pub struct Stage1Predictor(pub InterpMethod);

impl Predictor for Stage1Predictor {
    fn name(&self) -> String {
        format!("{:?}", self.0).to_lowercase()
    }

    fn predict_cube(&self, input: &EvalInput, _tiling: &TileConfig) -> Result<HsiCube> {
        upsample_spatial(&spectral_resample_cube(input.lr_hsi, input.out_bands, self.0)?, input.scale)
    }
}

/// Metrics of one band setting, averaged band-wise over the evaluation cubes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalEntry {
    pub setting: BandSetting,
    pub report: MetricReport,
}

/// HR cubes with their LR versions, computed once per scale.
pub struct EvalCubes<'a> {
    pub scenes: &'a SceneSet,
    pub lr_hsi: Vec<HsiCube>,
    pub lr_rgb: Vec<HsiCube>,
    pub scale: usize,
}

impl<'a> EvalCubes<'a> {
    pub fn new(scenes: &'a SceneSet, scale: usize) -> Result<Self> {
        Ok(EvalCubes {
            lr_hsi: scenes.hsi.iter().map(|c| downsample_spatial(c, scale)).collect::<Result<_>>()?,
            lr_rgb: scenes.rgb.iter().map(|c| downsample_spatial(c, scale)).collect::<Result<_>>()?,
            scenes,
            scale,
        })
    }

    /// Band-wise mean report of `pred` over all cubes for `setting`.
    pub fn evaluate(&self, pred: &dyn Predictor, setting: &BandSetting, tiling: &TileConfig) -> Result<MetricReport> {
        let mut psnr = vec![0.0; setting.output.len()];
        let mut ssim = vec![0.0; setting.output.len()];
        for i in 0..self.scenes.len() {
            let lr = self.lr_hsi[i].select_bands(&setting.input)?;
            let target = self.scenes.hsi[i].select_bands(&setting.output)?;
            let input = EvalInput {
                lr_hsi: &lr,
                lr_rgb: &self.lr_rgb[i],
                hr_rgb: &self.scenes.rgb[i],
                out_bands: target.bands(),
                scale: self.scale,
            };
            let out = pred.predict_cube(&input, tiling)?;
            let r = cube_metrics(&out, &target)?;
            for b in 0..psnr.len() {
                psnr[b] += r.per_band_psnr_db[b];
                ssim[b] += r.per_band_ssim[b];
            }
        }
        let n = self.scenes.len() as f64;
        Ok(MetricReport::from_per_band(psnr.iter().map(|v| v / n).collect(), ssim.iter().map(|v| v / n).collect()))
    }
}

/// Evaluates `pred` on every band setting of `cfg`.
pub fn evaluate_predictor(pred: &dyn Predictor, scenes: &SceneSet, cfg: &ExperimentConfig) -> Result<Vec<EvalEntry>> {
    let cubes = EvalCubes::new(scenes, cfg.scale)?;
    eval_settings(&cfg.band_mode, &cfg.out_bands, scenes.n_bands())?
        .into_iter()
        .map(|setting| Ok(EvalEntry { report: cubes.evaluate(pred, &setting, &cfg.tiling)?, setting }))
        .collect()
}

/// Checks a checkpoint against `cfg`, then evaluates it on the evaluation set.
pub fn evaluate(checkpoint: &Path, cfg: &ExperimentConfig) -> Result<Vec<EvalEntry>> {
    cfg.validate()?;
    let scenes = SceneSet::load(&cfg.dataset.eval)?;
    match cfg.precision {
        super::config::Precision::F32 => {
            let m = super::train::load_model::<f32>(&cfg.model, checkpoint)?;
            evaluate_predictor(&MlsrPredictor(&m), &scenes, cfg)
        }
        super::config::Precision::F64 => {
            let m = super::train::load_model::<f64>(&cfg.model, checkpoint)?;
            evaluate_predictor(&MlsrPredictor(&m), &scenes, cfg)
        }
    }
}

/// One `<prefix>_<label>.csv` per entry; returns file names relative to `dir`.
pub fn write_eval_csvs(entries: &[EvalEntry], grid: &SpectralBandSet, dir: &Path, prefix: &str) -> Result<Vec<PathBuf>> {
    let wl = grid.wavelengths();
    let mut names = Vec::new();
    for e in entries {
        let name = PathBuf::from(format!("{prefix}_{}.csv", e.setting.label));
        let w: Vec<f64> = e.setting.output.iter().map(|&i| wl[i]).collect();
        fs::write(dir.join(&name), band_metrics_csv(&e.report, &w, &e.setting.output)?)?;
        names.push(name);
    }
    Ok(names)
}
