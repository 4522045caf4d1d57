use mlsr_autodiff::{grad_check, AutodiffError, GradCheckConfig, GradCheckReport, Graph, Tensor};
use rand::Rng;

use crate::error::Result;
use crate::net::{build_variant, forward_graph, ModelConfig, NetInputs};
use crate::rng_from_seed;
use crate::spectral::{sample_bands_equidistant, wavelength_grid, BandDescriptor};

#[derive(Debug, Clone)]
pub struct EndToEndCheck {
    pub report: GradCheckReport,
    /// Smooth coordinates checked in theta and in phi.
    pub theta_coords: usize,
    pub phi_coords: usize,
}

/// Finite-difference check of the full L1 training loss on the tiny model
/// (G = 4, one block per stage, 6x6 HR patch at x2, 3 input and 4 output
/// bands) in 64-bit, over every theta and phi tensor.
pub fn end_to_end_grad_check(seed: u64, cfg: &GradCheckConfig) -> Result<EndToEndCheck> {
    let model_cfg = ModelConfig::tiny();
    let mut model = build_variant::<f64>(&model_cfg, seed)?;
    let mut rng = rng_from_seed(seed ^ 0x5eed);
    let mut rand_t = |shape: &[usize]| {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen::<f64>()).collect()).unwrap()
    };
    let grid = wavelength_grid(31, 400.0, 700.0)?;
    let idx = sample_bands_equidistant(31, 3)?;
    let mut in_bands: Vec<BandDescriptor> = idx.iter().map(|&i| grid.bands()[i]).collect();
    in_bands.extend([460.0, 550.0, 620.0].map(BandDescriptor::wide));
    let out_bands = [420.0, 515.0, 600.0, 690.0].map(BandDescriptor::narrow).to_vec();
    let inputs = NetInputs {
        lr_hsi: rand_t(&[1, 3, 3, 3]),
        lr_rgb: rand_t(&[1, 3, 3, 3]),
        hr_rgb: rand_t(&[1, 3, 6, 6]),
        in_bands,
        out_bands,
    };
    let target = rand_t(&[1, 4, 6, 6]);
    let report = grad_check(
        &mut model.params,
        &["theta.", "phi."],
        |g: &mut Graph<f64>, store| {
            let o = forward_graph(g, store, &model_cfg, &inputs).map_err(|e| AutodiffError::InvalidArgument(e.to_string()))?;
            let t = g.input(target.clone());
            g.l1_loss(o.out, t)
        },
        cfg,
    )?;
    let count = |prefix: &str| {
        report.coords.iter().filter(|c| !c.nonsmooth && model.params.name(c.param).starts_with(prefix)).count()
    };
    let (theta_coords, phi_coords) = (count("theta."), count("phi."));
    Ok(EndToEndCheck { report, theta_coords, phi_coords })
}
