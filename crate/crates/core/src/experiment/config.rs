use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::net::ModelConfig;
use crate::spectral::SceneSpec;

/// Where the HR cubes come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CubeSource {
    /// `count` scenes from `template`, scene i using seed `template.seed + i`.
    Synthetic { count: usize, template: SceneSpec },
    /// `.hsc` files on disk.
    Files { paths: Vec<PathBuf> },
}

impl CubeSource {
    pub fn len(&self) -> usize {
        match self {
            CubeSource::Synthetic { count, .. } => *count,
            CubeSource::Files { paths } => paths.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub train: CubeSource,
    pub eval: CubeSource,
}

/// How LR input bands are chosen; each entry of a list is one sub-dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum BandMode {
    Equidistant { k_list: Vec<usize> },
    /// Fresh random index sets per batch in training; one fixed draw per k,
    /// from `seed`, in evaluation.
    Random { k_list: Vec<usize>, seed: u64 },
    Explicit { index_lists: Vec<Vec<usize>> },
    /// Inclusive index ranges: one input range, one or more output ranges.
    Extrapolation { input_range: [usize; 2], output_ranges: Vec<[usize; 2]> },
}

/// Output bands to reconstruct.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutBands {
    All,
    Indices(Vec<usize>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

impl std::str::FromStr for Precision {
    type Err = crate::MlsrError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f32" => Ok(Precision::F32),
            "f64" => Ok(Precision::F64),
            _ => invalid(format!("unknown precision {s:?} (expected f32 or f64)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub patch_lr: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub lr_initial: f64,
    pub lr_halve_every_epochs: usize,
    pub augment: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            patch_lr: 12,
            batch_size: 8,
            epochs: 40,
            steps_per_epoch: 48,
            lr_initial: 1e-3,
            lr_halve_every_epochs: 20,
            augment: true,
        }
    }
}

/// Full-image inference tiling. Cubes whose LR side exceeds `max_tile_lr`
/// are split into tiles overlapping by `overlap_lr` pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileConfig {
    pub max_tile_lr: usize,
    pub overlap_lr: usize,
}

impl Default for TileConfig {
    fn default() -> Self {
        TileConfig { max_tile_lr: 64, overlap_lr: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub scale: usize,
    pub band_mode: BandMode,
    pub out_bands: OutBands,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub seed: u64,
    #[serde(default)]
    pub precision: Precision,
    #[serde(default)]
    pub deterministic: bool,
    #[serde(default)]
    pub tiling: TileConfig,
}

impl ExperimentConfig {
    /// 16 training and 4 evaluation scenes of 64x64x31, x2, 5 to 9 equidistant bands.
    pub fn desk() -> Self {
        ExperimentConfig {
            dataset: DatasetSpec {
                train: CubeSource::Synthetic { count: 16, template: SceneSpec::desk(1000) },
                eval: CubeSource::Synthetic { count: 4, template: SceneSpec::desk(9000) },
            },
            scale: 2,
            band_mode: BandMode::Equidistant { k_list: vec![5, 6, 7, 8, 9] },
            out_bands: OutBands::All,
            model: ModelConfig::desk(),
            train: TrainConfig::default(),
            seed: 0,
            precision: Precision::F32,
            deterministic: true,
            tiling: TileConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.scale != self.model.scale {
            return invalid(format!("experiment scale {} differs from model scale {}", self.scale, self.model.scale));
        }
        let t = &self.train;
        if t.patch_lr == 0 || t.batch_size == 0 || t.epochs == 0 || t.steps_per_epoch == 0 || t.lr_halve_every_epochs == 0 {
            return invalid("train config values must be positive");
        }
        if !(t.lr_initial > 0.0 && t.lr_initial.is_finite()) {
            return invalid("lr_initial must be positive");
        }
        if self.tiling.max_tile_lr <= 2 * self.tiling.overlap_lr {
            return invalid("tile size must exceed twice the overlap");
        }
        let empty = match &self.band_mode {
            BandMode::Equidistant { k_list } | BandMode::Random { k_list, .. } => k_list.is_empty(),
            BandMode::Explicit { index_lists } => index_lists.is_empty(),
            BandMode::Extrapolation { output_ranges, .. } => output_ranges.is_empty(),
        };
        if empty {
            return invalid("band_mode lists no band settings");
        }
        Ok(())
    }
}

/// `lr_initial * 0.5^floor(epoch / lr_halve_every_epochs)`.
pub fn lr_at_epoch(epoch: usize, cfg: &TrainConfig) -> f64 {
    cfg.lr_initial * 0.5f64.powi((epoch / cfg.lr_halve_every_epochs) as i32)
}
