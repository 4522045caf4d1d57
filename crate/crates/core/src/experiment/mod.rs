//! Training, evaluation and the experiment runners.

pub mod config;
pub mod data;
pub mod eval;
pub mod runners;
pub mod train;

pub use config::{
    lr_at_epoch, BandMode, CubeSource, DatasetSpec, ExperimentConfig, OutBands, Precision, TileConfig, TrainConfig,
};
pub use data::{eval_settings, pick_subdataset, train_subdatasets, BandSetting, SceneSet, SubDataset};
pub use eval::{
    evaluate, evaluate_predictor, infer_tiled, write_eval_csvs, tile_spans, EvalCubes, EvalEntry, EvalInput, MlsrPredictor, Predictor,
    Stage1Predictor, TwoStagePredictor,
};
pub use runners::{
    ablation_variants, comparison_table_csv, emit_bandwise_plot_data, extrapolation_partition, parse_bandwise_csv,
    run_ablation_suite, run_extrapolation_experiment, run_random_bands_experiment, AblationRow, BandwiseRow,
    ComparisonReport, ExtrapolationMode, RANDOM_BAND_TABLE,
};
pub use train::{
    derived_seeds, draw_batch, fit, load_model, train, train_step, train_typed, training_grid, Artifacts, RunManifest,
    Trainable, TwoStageTrainer,
};
