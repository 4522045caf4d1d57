use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use mlsr_autodiff::{write_checkpoint, Adam, Graph, ParameterStore, Real, Var};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::baselines::{stage1_sample, target_tensor, InterpMethod, PlainCnn};
use crate::error::{invalid, MlsrError, Result};
use crate::experiment::config::{ExperimentConfig, Precision, TrainConfig};
use crate::experiment::data::{pick_subdataset, train_subdatasets, SceneSet, SubDataset};
use crate::experiment::eval::{evaluate_predictor, EvalEntry, MlsrPredictor};
use crate::net::{build_variant, forward_graph, MlsrModel, NetInputs, ParamCounts};
use crate::spectral::{crop_patch_pair, SpectralBandSet, TrainingSample};
use crate::{rng_from_seed, Rng};

/// Anything the training loop can optimise.
pub trait Trainable<T: Real> {
    fn store(&self) -> &ParameterStore<T>;
    fn store_mut(&mut self) -> &mut ParameterStore<T>;
    /// Graph of the prediction (N x S x H x W) for one batch.
    fn build(&self, g: &mut Graph<T>, inputs: &NetInputs<T>) -> Result<Var>;
    /// Per-sample preprocessing before batching.
    fn prepare(&self, sample: TrainingSample) -> Result<TrainingSample> {
        Ok(sample)
    }
}

impl<T: Real> Trainable<T> for MlsrModel<T> {
    fn store(&self) -> &ParameterStore<T> {
        &self.params
    }

    fn store_mut(&mut self) -> &mut ParameterStore<T> {
        &mut self.params
    }

    fn build(&self, g: &mut Graph<T>, inputs: &NetInputs<T>) -> Result<Var> {
        Ok(forward_graph(g, &self.params, &self.config, inputs)?.out)
    }
}

/// Stage-2 network together with the stage-1 method feeding it.
#[derive(Debug, Clone)]
pub struct TwoStageTrainer<T> {
    pub net: PlainCnn<T>,
    pub method: InterpMethod,
}

impl<T: Real> Trainable<T> for TwoStageTrainer<T> {
    fn store(&self) -> &ParameterStore<T> {
        &self.net.params
    }

    fn store_mut(&mut self) -> &mut ParameterStore<T> {
        &mut self.net.params
    }

    fn build(&self, g: &mut Graph<T>, inputs: &NetInputs<T>) -> Result<Var> {
        self.net.forward_graph(g, &self.net.params, inputs)
    }

    fn prepare(&self, sample: TrainingSample) -> Result<TrainingSample> {
        stage1_sample(&sample, &self.net.bands, self.method)
    }
}

/// One optimisation step on `batch`; returns the batch L1 loss before the update.
pub fn train_step<T: Real, M: Trainable<T>>(
    model: &mut M,
    adam: &mut Adam<T>,
    batch: Vec<TrainingSample>,
    lr: f64,
) -> Result<f64> {
    let batch = batch.into_iter().map(|s| model.prepare(s)).collect::<Result<Vec<_>>>()?;
    let refs: Vec<&TrainingSample> = batch.iter().collect();
    let inputs = NetInputs::from_samples(&refs)?;
    let mut g = Graph::new();
    let out = model.build(&mut g, &inputs)?;
    let target = g.input(target_tensor(&refs)?);
    let loss = g.l1_loss(out, target)?;
    let value = g.value(loss).item().widen();
    if !value.is_finite() {
        let detail = match g.first_non_finite() {
            Some(nf) => {
                let param = nf.param.map(|id| format!(" (parameter {})", model.store().name(id))).unwrap_or_default();
                format!("first non-finite tensor is node {} from op {}{param}", nf.node, nf.op)
            }
            None => "no non-finite intermediate found".into(),
        };
        return Err(MlsrError::NonFinite(format!("loss is {value}; {detail}")));
    }
    g.backward(loss)?;
    let store = model.store_mut();
    g.accumulate_param_grads(store);
    adam.lr = lr;
    adam.step(store);
    store.zero_grads();
    Ok(value)
}

/// Draws a batch: one sub-dataset for the whole batch, then random scenes and crops.
pub fn draw_batch(
    scenes: &SceneSet,
    subs: &[SubDataset],
    cfg: &TrainConfig,
    scale: usize,
    rng: &mut Rng,
) -> Result<Vec<TrainingSample>> {
    if scenes.is_empty() || subs.is_empty() {
        return invalid("training needs at least one scene and one band setting");
    }
    let sub = &subs[pick_subdataset(subs.len(), rng)];
    let indices = sub.draw(scenes.n_bands(), rng)?;
    (0..cfg.batch_size)
        .map(|_| {
            let i = rng.gen_range(0..scenes.len());
            crop_patch_pair(&scenes.hsi[i], &scenes.rgb[i], cfg.patch_lr, scale, &indices, cfg.augment, rng)
        })
        .collect()
}

/// Runs the epoch loop; returns the mean loss of every epoch.
pub fn fit<T: Real, M: Trainable<T>>(
    model: &mut M,
    scenes: &SceneSet,
    subs: &[SubDataset],
    cfg: &TrainConfig,
    scale: usize,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    let mut adam = Adam::new(cfg.lr_initial);
    let mut losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let lr = super::config::lr_at_epoch(epoch, cfg);
        let mut total = 0.0;
        for _ in 0..cfg.steps_per_epoch {
            let batch = draw_batch(scenes, subs, cfg, scale, rng)?;
            total += train_step(model, &mut adam, batch, lr)?;
        }
        losses.push(total / cfg.steps_per_epoch as f64);
    }
    Ok(losses)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifacts {
    pub checkpoint: PathBuf,
    pub manifest: PathBuf,
    pub metrics_csv: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub init_seed: u64,
    pub data_seed: u64,
    pub parameter_counts: ParamCounts,
    pub epoch_losses: Vec<f64>,
    pub eval: Vec<EvalEntry>,
    /// Training plus evaluation time; left out in deterministic mode so that
    /// reruns give byte-identical manifests (it then goes to `timing.json`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_clock_s: Option<f64>,
    /// Paths relative to the output directory.
    pub artifacts: Artifacts,
}

/// Seeds for parameter init and data order derived from the experiment seed.
pub fn derived_seeds(seed: u64) -> (u64, u64) {
    let mut r = rng_from_seed(seed);
    (r.gen(), r.gen())
}

/// Trains the configured model, evaluates it, and writes checkpoint,
/// manifest and per-setting metric CSVs into `out_dir`.
pub fn train(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunManifest> {
    match cfg.precision {
        Precision::F32 => train_typed::<f32>(cfg, out_dir).map(|(m, _)| m),
        Precision::F64 => train_typed::<f64>(cfg, out_dir).map(|(m, _)| m),
    }
}

pub fn train_typed<T: Real>(cfg: &ExperimentConfig, out_dir: &Path) -> Result<(RunManifest, MlsrModel<T>)> {
    cfg.validate()?;
    let start = Instant::now();
    let scenes = SceneSet::load(&cfg.dataset.train)?;
    if scenes.is_empty() {
        return invalid("training dataset is empty");
    }
    let subs = train_subdatasets(&cfg.band_mode, scenes.n_bands())?;
    let (init_seed, data_seed) = derived_seeds(cfg.seed);
    let mut model = build_variant::<T>(&cfg.model, init_seed)?;
    let mut rng = rng_from_seed(data_seed);
    let epoch_losses = fit(&mut model, &scenes, &subs, &cfg.train, cfg.scale, &mut rng)?;
    drop(scenes);

    fs::create_dir_all(out_dir)?;
    let eval_scenes = SceneSet::load(&cfg.dataset.eval)?;
    let (eval, metrics_csv) = if eval_scenes.is_empty() {
        (Vec::new(), Vec::new())
    } else {
        let eval = evaluate_predictor(&MlsrPredictor(&model), &eval_scenes, cfg)?;
        let csvs = super::eval::write_eval_csvs(&eval, &eval_scenes.hsi[0].bands().clone(), out_dir, "metrics")?;
        (eval, csvs)
    };
    let checkpoint = PathBuf::from("checkpoint.mlsp");
    write_checkpoint(&model.params, out_dir.join(&checkpoint))?;
    let elapsed = start.elapsed().as_secs_f64();
    let manifest = RunManifest {
        config: cfg.clone(),
        seed: cfg.seed,
        init_seed,
        data_seed,
        parameter_counts: model.parameter_counts(),
        epoch_losses,
        eval,
        wall_clock_s: if cfg.deterministic { None } else { Some(elapsed) },
        artifacts: Artifacts { checkpoint, manifest: PathBuf::from("manifest.json"), metrics_csv },
    };
    fs::write(out_dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    if cfg.deterministic {
        fs::write(out_dir.join("timing.json"), format!("{{\"wall_clock_s\": {elapsed}}}\n"))?;
    }
    Ok((manifest, model))
}

/// Restores a model for `cfg` from a checkpoint; shapes must match.
pub fn load_model<T: Real>(cfg: &crate::net::ModelConfig, checkpoint: &Path) -> Result<MlsrModel<T>> {
    let mut model = build_variant::<T>(cfg, 0)?;
    let entries = mlsr_autodiff::read_checkpoint(checkpoint)?;
    mlsr_autodiff::load_into(&mut model.params, &entries)
        .map_err(|e| MlsrError::InvalidArgument(format!("checkpoint does not fit the model config: {e}")))?;
    Ok(model)
}

/// Band grid of the training targets, used to size a stage-2 baseline.
pub fn training_grid(cfg: &ExperimentConfig) -> Result<SpectralBandSet> {
    let scenes = SceneSet::load(&cfg.dataset.train)?;
    scenes.hsi.first().map(|c| c.bands().clone()).ok_or_else(|| MlsrError::InvalidArgument("empty dataset".into()))
}
