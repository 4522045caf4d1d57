use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use mlsr_autodiff::{GradCheckConfig, Real};
use mlsr_core::baselines::{spectral_resample_cube, InterpMethod};
use mlsr_core::experiment::{
    comparison_table_csv, emit_bandwise_plot_data, eval_settings, evaluate_predictor, load_model, run_ablation_suite,
    run_extrapolation_experiment, run_random_bands_experiment, train, write_eval_csvs, CubeSource, EvalCubes,
    EvalInput, ExperimentConfig, ExtrapolationMode, MlsrPredictor, Precision, Predictor, SceneSet, Stage1Predictor,
    RANDOM_BAND_TABLE,
};
use mlsr_core::metrics::{error_map, ERROR_MAP_SCALE};
use mlsr_core::net::end_to_end_grad_check;
use mlsr_core::spectral::{generate_synthetic_scene, read_cube, upsample_spatial, wavelength_grid, write_cube};

#[derive(Parser)]
#[command(name = "mlsr", version, about = "Band-flexible hyperspectral super-resolution")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON); the desk-scale default when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "runs")]
    out_dir: PathBuf,
    #[arg(long, global = true)]
    deterministic: bool,
    #[arg(long, global = true, value_enum)]
    precision: Option<Prec>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Prec {
    F32,
    F64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Linear,
    Cubic,
}

impl From<Method> for InterpMethod {
    fn from(m: Method) -> Self {
        match m {
            Method::Linear => InterpMethod::Linear,
            Method::Cubic => InterpMethod::Cubic,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Extrap {
    Tail,
    Center,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write the configured train and eval scenes as .hsc cubes and print a
    /// config pointing at them.
    Synth,
    /// Train, evaluate, and write checkpoint, manifest and metric CSVs.
    Train,
    /// Evaluate a checkpoint on every band setting of the config.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Reconstruct withheld bands at the ends or on both sides of the spectrum.
    Extrapolate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum, default_value = "tail")]
        mode: Extrap,
    },
    /// One checkpoint over many input band lists.
    Randombands {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Semicolon-separated lists such as "2,5,11,20,28;7,19,21,25,29";
        /// the built-in table when omitted.
        #[arg(long)]
        lists: Option<String>,
    },
    /// Train and evaluate the four ablation variants.
    Ablation,
    /// Finite-difference check of the full loss on the tiny model.
    Gradcheck {
        #[arg(long, default_value_t = 1e-6)]
        eps: f64,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
        #[arg(long, default_value_t = 32)]
        coords_per_param: usize,
    },
    /// Stage-1 baseline only: spectral interpolation onto a full grid, then
    /// optional bicubic spatial upsampling.
    Interp {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, value_enum, default_value = "cubic")]
        method: Method,
        #[arg(long, default_value_t = 31)]
        n_bands: usize,
        #[arg(long, default_value_t = 400.0)]
        min_nm: f64,
        #[arg(long, default_value_t = 700.0)]
        max_nm: f64,
        #[arg(long, default_value_t = 1)]
        scale: usize,
    },
}

fn load_config(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(p) => serde_json::from_str(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)
            .with_context(|| format!("parsing {}", p.display()))?,
        None => ExperimentConfig::desk(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if c.deterministic {
        cfg.deterministic = true;
    }
    match c.precision {
        Some(Prec::F32) => cfg.precision = Precision::F32,
        Some(Prec::F64) => cfg.precision = Precision::F64,
        None => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn synth(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let mut resolved = cfg.clone();
    for (name, src) in [("train", &mut resolved.dataset.train), ("eval", &mut resolved.dataset.eval)] {
        let CubeSource::Synthetic { count, template } = src.clone() else {
            bail!("{name} dataset is not synthetic");
        };
        let dir = out.join(name);
        fs::create_dir_all(&dir)?;
        let mut paths = Vec::with_capacity(count);
        for i in 0..count {
            let mut spec = template.clone();
            spec.seed = template.seed + i as u64;
            let path = dir.join(format!("scene_{i:03}.hsc"));
            write_cube(&generate_synthetic_scene(&spec)?, &path)?;
            paths.push(path);
        }
        println!("{name}: {count} cubes in {}", dir.display());
        *src = CubeSource::Files { paths };
    }
    write(&out.join("config.json"), &serde_json::to_string_pretty(&resolved)?)
}

fn eval_run<T: Real>(cfg: &ExperimentConfig, checkpoint: &Path, out: &Path) -> Result<()> {
    let model = load_model::<T>(&cfg.model, checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
    let scenes = SceneSet::load(&cfg.dataset.eval)?;
    if scenes.is_empty() {
        bail!("evaluation dataset is empty");
    }
    let pred = MlsrPredictor(&model);
    let entries = evaluate_predictor(&pred, &scenes, cfg)?;
    fs::create_dir_all(out)?;
    let grid = scenes.hsi[0].bands().clone();
    for p in write_eval_csvs(&entries, &grid, out, "eval")? {
        println!("wrote {}", out.join(p).display());
    }
    let cubic = Stage1Predictor(InterpMethod::Cubic);
    let cubes = EvalCubes::new(&scenes, cfg.scale)?;
    for e in &entries {
        let base = cubes.evaluate(&cubic, &e.setting, &cfg.tiling)?;
        let plot = emit_bandwise_plot_data(
            &[("mlsr", &e.report), ("cubic", &base)],
            &e.setting.output,
            &e.setting.input,
        )?;
        write(&out.join(format!("bandwise_{}.csv", e.setting.label)), &plot)?;

        let lr = cubes.lr_hsi[0].select_bands(&e.setting.input)?;
        let target = scenes.hsi[0].select_bands(&e.setting.output)?;
        let input = EvalInput {
            lr_hsi: &lr,
            lr_rgb: &cubes.lr_rgb[0],
            hr_rgb: &scenes.rgb[0],
            out_bands: target.bands(),
            scale: cfg.scale,
        };
        let cube = pred.predict_cube(&input, &cfg.tiling)?;
        let mid = target.n_bands() / 2;
        let pgm = out.join(format!("error_{}_band{}.pgm", e.setting.label, e.setting.output[mid]));
        error_map(&cube.band_plane_f64(mid), &target.band_plane_f64(mid), target.width(), target.height(), ERROR_MAP_SCALE, &pgm)?;
        println!("wrote {}", pgm.display());
        println!(
            "{:<14} psnr {:>7.3} dB  ssim {:.4}  flatness {:.3} dB",
            e.setting.label, e.report.mean_psnr_db, e.report.mean_ssim, e.report.flatness_std_db
        );
    }
    write(&out.join("eval.json"), &serde_json::to_string_pretty(&entries)?)
}

fn extrapolate_run<T: Real>(cfg: &ExperimentConfig, checkpoint: &Path, mode: Extrap, out: &Path) -> Result<()> {
    let model = load_model::<T>(&cfg.model, checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
    let scenes = SceneSet::load(&cfg.dataset.eval)?;
    let mode = match mode {
        Extrap::Tail => ExtrapolationMode::Tail,
        Extrap::Center => ExtrapolationMode::Center,
    };
    let report = run_extrapolation_experiment(&model, &scenes, mode, &Stage1Predictor(InterpMethod::Cubic), &cfg.tiling)?;
    let wl = scenes.hsi[0].bands().wavelengths();
    write(&out.join(format!("extrapolate_{}.csv", report.setting.label)), &report.to_csv(&wl))?;
    write(&out.join(format!("extrapolate_{}.json", report.setting.label)), &serde_json::to_string_pretty(&report)?)?;
    println!(
        "mlsr {:.3} dB, {} {:.3} dB, delta {:+.3} dB over bands {:?}",
        report.mlsr.mean_psnr_db, report.baseline_name, report.baseline.mean_psnr_db, report.delta_mean_psnr_db, report.setting.output
    );
    Ok(())
}

fn parse_lists(s: &str) -> Result<Vec<Vec<usize>>> {
    s.split(';')
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split(',').map(|v| v.trim().parse::<usize>().with_context(|| format!("bad band index {v:?}"))).collect())
        .collect()
}

fn randombands_run<T: Real>(cfg: &ExperimentConfig, checkpoint: &Path, lists: &[Vec<usize>], out: &Path) -> Result<()> {
    let model = load_model::<T>(&cfg.model, checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
    let scenes = SceneSet::load(&cfg.dataset.eval)?;
    let rows = run_random_bands_experiment(&model, &scenes, lists, &Stage1Predictor(InterpMethod::Cubic), &cfg.tiling)?;
    write(&out.join("randombands.csv"), &comparison_table_csv(&rows))?;
    for r in &rows {
        println!("{:<24} mlsr {:.3} dB / {:.4}   cubic {:.3} dB / {:.4}", r.setting.label, r.mlsr.mean_psnr_db, r.mlsr.mean_ssim, r.baseline.mean_psnr_db, r.baseline.mean_ssim);
    }
    Ok(())
}

fn interp_run(input: &Path, output: &Path, method: Method, n: usize, lo: f64, hi: f64, scale: usize) -> Result<()> {
    let cube = read_cube(input)?;
    let grid = wavelength_grid(n, lo, hi)?;
    let mut res = spectral_resample_cube(&cube, &grid, method.into())?;
    if scale > 1 {
        res = upsample_spatial(&res, scale)?;
    }
    write_cube(&res, output)?;
    println!("wrote {} ({}x{}x{})", output.display(), res.height(), res.width(), res.n_bands());
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let out = cli.common.out_dir.clone();
    match cli.cmd {
        Cmd::Synth => synth(&load_config(&cli.common)?, &out),
        Cmd::Train => {
            let cfg = load_config(&cli.common)?;
            let m = train(&cfg, &out)?;
            let n = m.epoch_losses.len();
            println!("trained {n} epochs, final loss {:.6}", m.epoch_losses.last().copied().unwrap_or(f64::NAN));
            for e in &m.eval {
                println!("{:<14} psnr {:>7.3} dB  ssim {:.4}", e.setting.label, e.report.mean_psnr_db, e.report.mean_ssim);
            }
            println!("wrote {}", out.join(&m.artifacts.manifest).display());
            Ok(())
        }
        Cmd::Eval { checkpoint } => {
            let cfg = load_config(&cli.common)?;
            // fail early on an unusable band mode
            eval_settings(&cfg.band_mode, &cfg.out_bands, SceneSet::load(&cfg.dataset.eval)?.n_bands())?;
            match cfg.precision {
                Precision::F32 => eval_run::<f32>(&cfg, &checkpoint, &out),
                Precision::F64 => eval_run::<f64>(&cfg, &checkpoint, &out),
            }
        }
        Cmd::Extrapolate { checkpoint, mode } => {
            let cfg = load_config(&cli.common)?;
            match cfg.precision {
                Precision::F32 => extrapolate_run::<f32>(&cfg, &checkpoint, mode, &out),
                Precision::F64 => extrapolate_run::<f64>(&cfg, &checkpoint, mode, &out),
            }
        }
        Cmd::Randombands { checkpoint, lists } => {
            let cfg = load_config(&cli.common)?;
            let lists = match lists {
                Some(s) => parse_lists(&s)?,
                None => RANDOM_BAND_TABLE.iter().map(|l| l.to_vec()).collect(),
            };
            match cfg.precision {
                Precision::F32 => randombands_run::<f32>(&cfg, &checkpoint, &lists, &out),
                Precision::F64 => randombands_run::<f64>(&cfg, &checkpoint, &lists, &out),
            }
        }
        Cmd::Ablation => {
            let rows = run_ablation_suite(&load_config(&cli.common)?, &out)?;
            for r in &rows {
                println!(
                    "{:<14} params {:>8} (phi {:>6})  psnr {:.3} dB  ssim {:.4}  finite {}",
                    r.name, r.parameter_counts.total, r.parameter_counts.phi, r.mean_psnr_db, r.mean_ssim, r.losses_finite
                );
            }
            println!("wrote {}", out.join("ablation.csv").display());
            Ok(())
        }
        Cmd::Gradcheck { eps, tol, coords_per_param } => {
            let seed = cli.common.seed.unwrap_or(0);
            let gc = GradCheckConfig { eps, tol, coords_per_param, seed, ..GradCheckConfig::default() };
            let check = end_to_end_grad_check(seed, &gc)?;
            let r = &check.report;
            println!(
                "checked {} theta and {} phi coordinates ({} skipped near kinks), max relative error {:.3e}{}",
                check.theta_coords,
                check.phi_coords,
                r.skipped_nonsmooth,
                r.max_rel_error,
                r.worst.as_ref().map(|(n, i)| format!(" at {n}[{i}]")).unwrap_or_default()
            );
            if !r.passed {
                bail!("gradient check failed (tolerance {tol:e})");
            }
            println!("ok");
            Ok(())
        }
        Cmd::Interp { input, output, method, n_bands, min_nm, max_nm, scale } => {
            interp_run(&input, &output, method, n_bands, min_nm, max_nm, scale)
        }
    }
}
