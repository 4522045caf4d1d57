use rand::seq::index::sample;
use rand::SeedableRng;
use rand_xoshiro::Xoshiro256StarStar;

use crate::error::{invalid, Result};
use crate::graph::{Graph, Var};
use crate::params::{ParamId, ParameterStore};

#[derive(Debug, Clone)]
pub struct GradCheckConfig {
    /// Central-difference step.
    pub eps: f64,
    /// Pass threshold on the maximum relative error.
    pub tol: f64,
    /// Coordinates sampled per parameter tensor (all of them if the tensor is smaller).
    pub coords_per_param: usize,
    /// Gradients below this magnitude are compared absolutely.
    pub abs_floor: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig { eps: 1e-6, tol: 1e-5, coords_per_param: 32, abs_floor: 1e-8, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoordCheck {
    pub param: ParamId,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
    /// One-sided differences disagree: a relu/l1 kink sits inside the step.
    pub nonsmooth: bool,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub coords: Vec<CoordCheck>,
    pub max_rel_error: f64,
    pub worst: Option<(String, usize)>,
    pub skipped_nonsmooth: usize,
    pub passed: bool,
}

impl GradCheckReport {
    pub fn checked(&self) -> usize {
        self.coords.len() - self.skipped_nonsmooth
    }
}

fn eval<F>(store: &ParameterStore<f64>, loss_fn: &mut F) -> Result<f64>
where
    F: FnMut(&mut Graph<f64>, &ParameterStore<f64>) -> Result<Var>,
{
    let mut g = Graph::new();
    let loss = loss_fn(&mut g, store)?;
    Ok(g.value(loss).item())
}

/// Compares backward gradients of `loss_fn` against central finite
/// differences on a seeded random subset of coordinates of every parameter
/// whose name starts with one of `prefixes` (all parameters if empty).
pub fn grad_check<F>(
    store: &mut ParameterStore<f64>,
    prefixes: &[&str],
    mut loss_fn: F,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport>
where
    F: FnMut(&mut Graph<f64>, &ParameterStore<f64>) -> Result<Var>,
{
    if cfg.eps <= 0.0 {
        return invalid("grad_check eps must be positive");
    }
    store.zero_grads();
    let mut g = Graph::new();
    let loss = loss_fn(&mut g, store)?;
    g.backward(loss)?;
    g.accumulate_param_grads(store);
    let f0 = g.value(loss).item();
    drop(g);

    let mut rng = Xoshiro256StarStar::seed_from_u64(cfg.seed);
    let ids: Vec<ParamId> = store
        .ids()
        .filter(|&id| prefixes.is_empty() || prefixes.iter().any(|p| store.name(id).starts_with(p)))
        .collect();
    let mut coords = Vec::new();
    for id in ids {
        let n = store.value(id).len();
        let mut picks: Vec<usize> = sample(&mut rng, n, cfg.coords_per_param.min(n)).into_vec();
        picks.sort_unstable();
        for index in picks {
            let x0 = store.value(id).data()[index];
            store.value_mut(id).data_mut()[index] = x0 + cfg.eps;
            let fp = eval(store, &mut loss_fn)?;
            store.value_mut(id).data_mut()[index] = x0 - cfg.eps;
            let fm = eval(store, &mut loss_fn)?;
            store.value_mut(id).data_mut()[index] = x0;

            let numeric = (fp - fm) / (2.0 * cfg.eps);
            let analytic = store.grad(id)[index];
            let denom = analytic.abs().max(numeric.abs()).max(cfg.abs_floor);
            let rel_error = (analytic - numeric).abs() / denom;
            let fwd = (fp - f0) / cfg.eps;
            let bwd = (f0 - fm) / cfg.eps;
            let spread = fwd.abs().max(bwd.abs()).max(cfg.abs_floor);
            let nonsmooth = (fwd - bwd).abs() / spread > 1e-2;
            coords.push(CoordCheck { param: id, index, analytic, numeric, rel_error, nonsmooth });
        }
    }
    let skipped_nonsmooth = coords.iter().filter(|c| c.nonsmooth).count();
    let worst = coords
        .iter()
        .filter(|c| !c.nonsmooth)
        .max_by(|a, b| a.rel_error.total_cmp(&b.rel_error));
    let max_rel_error = worst.map_or(0.0, |c| c.rel_error);
    let worst = worst.map(|c| (store.name(c.param).to_string(), c.index));
    Ok(GradCheckReport { passed: max_rel_error < cfg.tol, coords, max_rel_error, worst, skipped_nonsmooth })
}
