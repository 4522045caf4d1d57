use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use mlsr_autodiff::Real;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::experiment::config::{ExperimentConfig, TileConfig};
use crate::experiment::data::{BandSetting, SceneSet};
use crate::experiment::eval::{EvalCubes, MlsrPredictor, Predictor};
use crate::experiment::train::train_typed;
use crate::metrics::MetricReport;
use crate::net::{MlsrModel, ParamCounts, Variant};

/// Which side of the spectrum is withheld from the input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtrapolationMode {
    /// Last ten bands from the remaining ones.
    Tail,
    /// Five bands on each side from the middle ones.
    Center,
}

impl std::str::FromStr for ExtrapolationMode {
    type Err = crate::MlsrError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tail" => Ok(ExtrapolationMode::Tail),
            "center" => Ok(ExtrapolationMode::Center),
            _ => invalid(format!("unknown extrapolation mode {s:?} (expected tail or center)")),
        }
    }
}

pub fn extrapolation_partition(mode: ExtrapolationMode, total: usize) -> Result<BandSetting> {
    if total < 12 {
        return invalid(format!("extrapolation needs at least 12 bands, got {total}"));
    }
    let (input, output): (Vec<usize>, Vec<usize>) = match mode {
        ExtrapolationMode::Tail => ((0..total - 10).collect(), (total - 10..total).collect()),
        ExtrapolationMode::Center => ((5..total - 5).collect(), (0..5).chain(total - 5..total).collect()),
    };
    let label = format!("{mode:?}").to_lowercase();
    Ok(BandSetting { label, input, output })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub setting: BandSetting,
    pub mlsr: MetricReport,
    pub baseline_name: String,
    pub baseline: MetricReport,
    pub delta_mean_psnr_db: f64,
    pub delta_mean_ssim: f64,
}

impl ComparisonReport {
    fn new(setting: BandSetting, mlsr: MetricReport, baseline_name: String, baseline: MetricReport) -> Self {
        ComparisonReport {
            delta_mean_psnr_db: mlsr.mean_psnr_db - baseline.mean_psnr_db,
            delta_mean_ssim: mlsr.mean_ssim - baseline.mean_ssim,
            setting,
            mlsr,
            baseline_name,
            baseline,
        }
    }

    /// `band_index,wavelength_nm,mlsr_psnr_db,baseline_psnr_db,delta_psnr_db`.
    pub fn to_csv(&self, wavelengths_nm: &[f64]) -> String {
        let mut out = String::from("band_index,wavelength_nm,mlsr_psnr_db,baseline_psnr_db,delta_psnr_db\n");
        for (i, &b) in self.setting.output.iter().enumerate() {
            let (m, c) = (self.mlsr.per_band_psnr_db[i], self.baseline.per_band_psnr_db[i]);
            writeln!(out, "{b},{},{m},{c},{}", wavelengths_nm[b], m - c).unwrap();
        }
        out
    }
}

/// Evaluates the model and a baseline on the withheld bands only.
pub fn run_extrapolation_experiment<T: Real>(
    model: &MlsrModel<T>,
    scenes: &SceneSet,
    mode: ExtrapolationMode,
    baseline: &dyn Predictor,
    tiling: &TileConfig,
) -> Result<ComparisonReport> {
    let setting = extrapolation_partition(mode, scenes.n_bands())?;
    let cubes = EvalCubes::new(scenes, model.config.scale)?;
    let mlsr = cubes.evaluate(&MlsrPredictor(model), &setting, tiling)?;
    let base = cubes.evaluate(baseline, &setting, tiling)?;
    Ok(ComparisonReport::new(setting, mlsr, baseline.name(), base))
}

/// Input band lists of the randomised-input table.
pub const RANDOM_BAND_TABLE: [&[usize]; 6] = [
    &[2, 5, 11, 20, 28],
    &[7, 19, 21, 25, 29],
    &[8, 12, 15, 20, 21],
    &[1, 4, 9, 12, 19, 28],
    &[5, 6, 8, 17, 19, 20, 25],
    &[6, 7, 9, 10, 11, 12, 15, 17, 22],
];

/// One model over many input band lists, all bands as output.
pub fn run_random_bands_experiment<T: Real>(
    model: &MlsrModel<T>,
    scenes: &SceneSet,
    index_lists: &[Vec<usize>],
    baseline: &dyn Predictor,
    tiling: &TileConfig,
) -> Result<Vec<ComparisonReport>> {
    let total = scenes.n_bands();
    let mut settings = Vec::with_capacity(index_lists.len());
    for list in index_lists {
        let mut sorted = list.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return invalid(format!("duplicate band index in {list:?}"));
        }
        if sorted.is_empty() || sorted[sorted.len() - 1] >= total {
            return invalid(format!("band list {list:?} invalid for {total} bands"));
        }
        let label = sorted.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("-");
        settings.push(BandSetting { label, input: sorted, output: (0..total).collect() });
    }
    let cubes = EvalCubes::new(scenes, model.config.scale)?;
    settings
        .into_iter()
        .map(|s| {
            let m = cubes.evaluate(&MlsrPredictor(model), &s, tiling)?;
            let b = cubes.evaluate(baseline, &s, tiling)?;
            Ok(ComparisonReport::new(s, m, baseline.name(), b))
        })
        .collect()
}

pub fn comparison_table_csv(rows: &[ComparisonReport]) -> String {
    let mut out = String::from("input_bands,mlsr_psnr_db,mlsr_ssim,baseline_psnr_db,baseline_ssim\n");
    for r in rows {
        let idx = r.setting.input.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" ");
        writeln!(out, "{idx},{},{},{},{}", r.mlsr.mean_psnr_db, r.mlsr.mean_ssim, r.baseline.mean_psnr_db, r.baseline.mean_ssim)
            .unwrap();
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub name: String,
    pub variant: Variant,
    pub meta_kernel: usize,
    pub parameter_counts: ParamCounts,
    pub mean_psnr_db: f64,
    pub mean_ssim: f64,
    pub final_loss: f64,
    pub losses_finite: bool,
}

/// The four variants: plain SOFE conv, plain convs on both sides, 3x3 meta
/// kernel, and the reference model. Same seed and budget for each.
pub fn ablation_variants() -> [(&'static str, Variant, usize); 4] {
    [
        ("plain_sofe", Variant::PlainSofe, 1),
        ("plain_both", Variant::PlainBoth, 1),
        ("meta_kernel_3", Variant::Meta, 3),
        ("meta", Variant::Meta, 1),
    ]
}

/// Trains and evaluates every ablation variant under `cfg`'s seed and
/// budget, writing each run under `out_dir/<name>` and a summary CSV.
pub fn run_ablation_suite(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::new();
    for (name, variant, k) in ablation_variants() {
        let mut c = cfg.clone();
        c.model.variant = variant;
        c.model.meta_kernel = k;
        let dir = out_dir.join(name);
        let manifest = match cfg.precision {
            super::config::Precision::F32 => train_typed::<f32>(&c, &dir)?.0,
            super::config::Precision::F64 => train_typed::<f64>(&c, &dir)?.0,
        };
        let n = manifest.eval.len().max(1) as f64;
        rows.push(AblationRow {
            name: name.into(),
            variant,
            meta_kernel: k,
            parameter_counts: manifest.parameter_counts,
            mean_psnr_db: manifest.eval.iter().map(|e| e.report.mean_psnr_db).sum::<f64>() / n,
            mean_ssim: manifest.eval.iter().map(|e| e.report.mean_ssim).sum::<f64>() / n,
            final_loss: *manifest.epoch_losses.last().unwrap_or(&f64::NAN),
            losses_finite: manifest.epoch_losses.iter().all(|l| l.is_finite()),
        });
    }
    let mut csv = String::from("variant,meta_kernel,theta_params,phi_params,total_params,mean_psnr_db,mean_ssim,final_loss\n");
    for r in &rows {
        let p = r.parameter_counts;
        writeln!(csv, "{},{},{},{},{},{},{},{}", r.name, r.meta_kernel, p.theta, p.phi, p.total, r.mean_psnr_db, r.mean_ssim, r.final_loss)
            .unwrap();
    }
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("ablation.csv"), csv)?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandwiseRow {
    pub method: String,
    pub band_index: usize,
    pub psnr_db: f64,
    pub is_input_band: bool,
}

/// Long-format `method,band_index,psnr_db,is_input_band` rows for plotting
/// per-band PSNR curves; `band_indices` label the report entries.
pub fn emit_bandwise_plot_data(
    reports: &[(&str, &MetricReport)],
    band_indices: &[usize],
    input_indices: &[usize],
) -> Result<String> {
    let mut out = String::from("method,band_index,psnr_db,is_input_band\n");
    for (method, r) in reports {
        if method.contains(',') {
            return invalid(format!("method name {method:?} contains a comma"));
        }
        if r.per_band_psnr_db.len() != band_indices.len() {
            return invalid("report length does not match the band index list");
        }
        for (&b, &p) in band_indices.iter().zip(&r.per_band_psnr_db) {
            let p = if p.is_infinite() { "inf".to_string() } else { p.to_string() };
            writeln!(out, "{method},{b},{p},{}", input_indices.contains(&b)).unwrap();
        }
    }
    Ok(out)
}

pub fn parse_bandwise_csv(text: &str) -> Result<Vec<BandwiseRow>> {
    let mut lines = text.lines();
    if lines.next() != Some("method,band_index,psnr_db,is_input_band") {
        return invalid("missing band-wise CSV header");
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            let bad = || crate::MlsrError::InvalidArgument(format!("bad row {}: {line:?}", i + 2));
            if f.len() != 4 {
                return Err(bad());
            }
            Ok(BandwiseRow {
                method: f[0].to_string(),
                band_index: f[1].parse().map_err(|_| bad())?,
                psnr_db: if f[2] == "inf" { f64::INFINITY } else { f[2].parse().map_err(|_| bad())? },
                is_input_band: f[3].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}
