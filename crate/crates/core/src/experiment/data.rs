use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::experiment::config::{BandMode, CubeSource, OutBands};
use crate::spectral::patch::check_indices;
use crate::spectral::{
    generate_synthetic_scene, read_cube, sample_bands_equidistant, sample_bands_random, synthesize_rgb, HsiCube,
    RgbResponses, SceneSpec,
};

/// HR hyperspectral cubes with their synthesised RGB guides.
#[derive(Debug, Clone)]
pub struct SceneSet {
    pub hsi: Vec<HsiCube>,
    pub rgb: Vec<HsiCube>,
}

impl SceneSet {
    pub fn from_cubes(hsi: Vec<HsiCube>) -> Result<Self> {
        if let Some(first) = hsi.first() {
            if hsi.iter().any(|c| c.bands() != first.bands()) {
                return invalid("all cubes of a dataset must share one wavelength grid");
            }
        }
        let rgb = hsi.iter().map(|c| synthesize_rgb(c, &RgbResponses::default())).collect::<Result<_>>()?;
        Ok(SceneSet { hsi, rgb })
    }

    pub fn load(src: &CubeSource) -> Result<Self> {
        let cubes = match src {
            CubeSource::Synthetic { count, template } => (0..*count as u64)
                .map(|i| generate_synthetic_scene(&SceneSpec { seed: template.seed + i, ..template.clone() }))
                .collect::<Result<Vec<_>>>()?,
            CubeSource::Files { paths } => paths.iter().map(read_cube).collect::<Result<Vec<_>>>()?,
        };
        Self::from_cubes(cubes)
    }

    pub fn len(&self) -> usize {
        self.hsi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hsi.is_empty()
    }

    pub fn n_bands(&self) -> usize {
        self.hsi.first().map_or(0, HsiCube::n_bands)
    }
}

/// One evaluation band setting: input indices and output indices into the HR grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandSetting {
    pub label: String,
    pub input: Vec<usize>,
    pub output: Vec<usize>,
}

fn range_indices(r: [usize; 2], total: usize) -> Result<Vec<usize>> {
    if r[0] > r[1] || r[1] >= total {
        return invalid(format!("band range {r:?} invalid for {total} bands"));
    }
    Ok((r[0]..=r[1]).collect())
}

pub fn resolve_out_bands(out: &OutBands, total: usize) -> Result<Vec<usize>> {
    match out {
        OutBands::All => Ok((0..total).collect()),
        OutBands::Indices(v) => {
            check_indices(v, total)?;
            Ok(v.clone())
        }
    }
}

fn label(indices: &[usize]) -> String {
    indices.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("-")
}

/// Evaluation settings of a band mode; each is deterministic.
pub fn eval_settings(mode: &BandMode, out: &OutBands, total: usize) -> Result<Vec<BandSetting>> {
    let output = resolve_out_bands(out, total)?;
    let with_output = |label: String, input: Vec<usize>| BandSetting { label, input, output: output.clone() };
    match mode {
        BandMode::Equidistant { k_list } => k_list
            .iter()
            .map(|&k| Ok(with_output(format!("k{k}"), sample_bands_equidistant(total, k)?)))
            .collect(),
        BandMode::Random { k_list, seed } => {
            let mut rng = crate::rng_from_seed(*seed);
            k_list
                .iter()
                .map(|&k| {
                    let idx = sample_bands_random(total, k, &mut rng)?;
                    Ok(with_output(format!("random-{}", label(&idx)), idx))
                })
                .collect()
        }
        BandMode::Explicit { index_lists } => index_lists
            .iter()
            .map(|idx| {
                check_indices(idx, total)?;
                Ok(with_output(format!("bands-{}", label(idx)), idx.clone()))
            })
            .collect(),
        BandMode::Extrapolation { input_range, output_ranges } => {
            let input = range_indices(*input_range, total)?;
            let mut output = Vec::new();
            for r in output_ranges {
                output.extend(range_indices(*r, total)?);
            }
            output.sort_unstable();
            if output.windows(2).any(|w| w[0] == w[1]) {
                return invalid("extrapolation output ranges overlap");
            }
            Ok(vec![BandSetting { label: format!("in{}-{}", input_range[0], input_range[1]), input, output }])
        }
    }
}

/// A training sub-dataset: a fixed input band list, or random lists of size k.
#[derive(Debug, Clone, PartialEq)]
pub enum SubDataset {
    Fixed(Vec<usize>),
    Random(usize),
}

impl SubDataset {
    pub fn draw<R: Rng + ?Sized>(&self, total: usize, rng: &mut R) -> Result<Vec<usize>> {
        match self {
            SubDataset::Fixed(v) => Ok(v.clone()),
            SubDataset::Random(k) => sample_bands_random(total, *k, rng),
        }
    }
}

pub fn train_subdatasets(mode: &BandMode, total: usize) -> Result<Vec<SubDataset>> {
    match mode {
        BandMode::Random { k_list, .. } => {
            if let Some(&k) = k_list.iter().find(|&&k| k == 0 || k > total) {
                return invalid(format!("k = {k} out of range for {total} bands"));
            }
            Ok(k_list.iter().map(|&k| SubDataset::Random(k)).collect())
        }
        _ => Ok(eval_settings(mode, &OutBands::All, total)?.into_iter().map(|s| SubDataset::Fixed(s.input)).collect()),
    }
}

/// Uniform choice of the sub-dataset feeding the next batch.
pub fn pick_subdataset<R: Rng + ?Sized>(n: usize, rng: &mut R) -> usize {
    rng.gen_range(0..n)
}
