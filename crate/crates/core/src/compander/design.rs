//! Alternating expander/compressor optimization with noisy-channel relaxation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, QuantError, Result};
use crate::grid::ScalarGrid;
use crate::source::SourceModel;

use super::cost::{CostModel, Evaluation, RateMode};
use super::map::{Expander, MonotoneMap};

/// Step size of every randomized design. Rate is set through `T` or
/// `lambda`; the compressor's output scale absorbs the step.
pub const DESIGN_DELTA: f64 = 1.0;

/// Consecutive small-decrease iterations that count as convergence.
pub const PATIENCE: usize = 10;

/// Backtracking halvings tried before a step is declared stalled.
pub const MAX_HALVINGS: u32 = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignConfig {
    pub step_size: f64,
    /// Iteration budget per relaxation stage.
    pub max_iters: usize,
    /// Relative cost decrease below which an iteration counts as stalled.
    pub cost_tol: f64,
    /// Nodes of the Gauss-Legendre rule over the dither interval used by the
    /// tensor-product quadrature check.
    pub quad_nodes_n: usize,
    /// Descending `lambda` values (variable rate) or ascending rates in bits
    /// (fixed rate) walked before the target.
    pub relaxation_schedule: Vec<f64>,
    pub seed: u64,
}

impl Default for DesignConfig {
    fn default() -> Self {
        Self {
            step_size: 1.0,
            max_iters: 5000,
            cost_tol: 1e-7,
            quad_nodes_n: 16,
            relaxation_schedule: vec![1.0, 0.5, 0.25, 0.125, 0.0625, 0.03125],
            seed: 1,
        }
    }
}

impl DesignConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0) {
            return Err(invalid("step_size must be positive"));
        }
        if self.max_iters == 0 {
            return Err(invalid("max_iters must be at least 1"));
        }
        if !(self.cost_tol > 0.0) {
            return Err(invalid("cost_tol must be positive"));
        }
        if self.quad_nodes_n < 8 {
            return Err(invalid("quad_nodes_n must be at least 8"));
        }
        if self.relaxation_schedule.is_empty() {
            return Err(invalid("relaxation_schedule must not be empty"));
        }
        Ok(())
    }

    /// Same solver knobs with the schedule used for fixed-rate designs.
    pub fn fixed_rate_default() -> Self {
        Self {
            relaxation_schedule: [3u32, 5, 7, 9].iter().map(|&m| (m as f64).log2()).collect(),
            ..Self::default()
        }
    }
}

/// A compressor/expander pair with its achieved operating point.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomizedDesign {
    pub compressor: MonotoneMap,
    pub expander: Expander,
    pub delta: f64,
    pub mode: RateMode,
    pub distortion: f64,
    pub rate: f64,
    pub lagrangian_cost: f64,
    pub converged: bool,
    pub iterations: usize,
    pub seed: u64,
}

impl RandomizedDesign {
    /// Assembles a design from its maps and fills in D, R and J.
    pub fn from_maps(
        source: &SourceModel,
        compressor: MonotoneMap,
        expander: Expander,
        delta: f64,
        mode: RateMode,
    ) -> Result<Self> {
        let eval = CostModel::new(source, delta, mode)?.evaluate(&compressor, &expander)?;
        Ok(Self {
            compressor,
            expander,
            delta,
            mode,
            distortion: eval.distortion,
            rate: eval.rate,
            lagrangian_cost: eval.cost,
            converged: true,
            iterations: 0,
            seed: 0,
        })
    }

    pub fn model<'a>(&self, source: &'a SourceModel) -> Result<CostModel<'a>> {
        CostModel::new(source, self.delta, self.mode)
    }

    pub fn evaluate(&self, source: &SourceModel) -> Result<Evaluation> {
        self.model(source)?.evaluate(&self.compressor, &self.expander)
    }

    /// Reconstruction for source value `x` and dither `z`.
    pub fn reconstruct(&self, x: f64, z: f64) -> f64 {
        let y = self.compressor.eval(x) + z;
        let mut i = (y / self.delta - 0.5).ceil() as i64;
        if let RateMode::Fixed { levels } = self.mode {
            i = i.clamp(-(levels as i64), levels as i64);
        }
        self.expander.eval(i as f64 * self.delta - z)
    }
}

/// Outcome of one backtracking descent step.
#[derive(Debug, Clone)]
pub struct DescentStep {
    pub compressor: MonotoneMap,
    pub evaluation: Evaluation,
    /// Step size that was accepted, or zero if none was.
    pub step_size: f64,
    pub accepted: bool,
}

/// One steepest-descent step on the compressor along `-∇J/ω` (the functional
/// gradient), projected back onto monotone maps, halving the step until the
/// cost does not increase.
pub fn descend(
    model: &CostModel<'_>,
    g: &MonotoneMap,
    w: &Expander,
    current: &Evaluation,
    gradient: &[f64],
    step_size: f64,
) -> Result<DescentStep> {
    let unchanged = || DescentStep {
        compressor: g.clone(),
        evaluation: *current,
        step_size: 0.0,
        accepted: false,
    };
    if step_size == 0.0 {
        return Ok(unchanged());
    }
    let domain = g.grid();
    let floor = MonotoneMap::monotone_floor(domain);
    let dir: Vec<f64> = gradient.iter().enumerate().map(|(k, d)| -d / domain.weight(k)).collect();
    let mut mu = step_size;
    let mut degenerate = None;
    for _ in 0..=MAX_HALVINGS {
        let trial: Vec<f64> = g.values().iter().zip(&dir).map(|(v, d)| v + mu * d).collect();
        match MonotoneMap::project(domain, &trial, floor).and_then(|c| {
            let mut v = c.values().to_vec();
            model.pack_overload(&mut v, floor);
            MonotoneMap::new(domain.with_values(v)?)
        }) {
            Ok(cand) => {
                let eval = model.evaluate(&cand, w)?;
                if eval.cost <= current.cost {
                    return Ok(DescentStep { compressor: cand, evaluation: eval, step_size: mu, accepted: true });
                }
            }
            Err(e @ QuantError::DegenerateMapping(_)) => degenerate = Some(e),
            Err(e) => return Err(e),
        }
        mu *= 0.5;
    }
    match degenerate {
        Some(e) => Err(e),
        None => Ok(unchanged()),
    }
}

/// Result of optimizing one relaxation stage.
#[derive(Debug, Clone)]
pub struct StageOutcome {
    pub compressor: MonotoneMap,
    pub expander: Expander,
    pub evaluation: Evaluation,
    pub iterations: usize,
    pub converged: bool,
    /// Cost after every iteration, starting with the initial pair.
    pub history: Vec<f64>,
}

/// Called after every iteration with `(iteration, g, w)`.
pub type Observer<'o> = dyn FnMut(usize, &MonotoneMap, &Expander) + 'o;

/// Alternates the optimal expander with compressor descent until the
/// relative cost decrease stays below `cost_tol` for [`PATIENCE`] iterations.
pub fn optimize_stage(
    model: &CostModel<'_>,
    init: MonotoneMap,
    config: &DesignConfig,
    observer: &mut Observer<'_>,
) -> Result<StageOutcome> {
    let mut g = init;
    let mut w = model.expander(&g)?;
    let mut eval = model.evaluate(&g, &w)?;
    let mut history = vec![eval.cost];
    let mut mu = config.step_size;
    let mut quiet = 0;
    let mut converged = false;
    let mut iterations = 0;
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
    while iterations < config.max_iters {
        iterations += 1;
        let mut grad = model.gradient(&g, &w)?;
        model.overload_pull(&g, &w, &mut grad);
        // Barzilai-Borwein trial step from the last two iterates. The
        // variable-rate cost has creases at lattice crossings, so the
        // doubling rule is kept there.
        if let (RateMode::Fixed { .. }, Some((g_prev, grad_prev))) = (model.mode, prev.as_ref()) {
            let dom = g.grid();
            let (mut ss, mut sy) = (0.0, 0.0);
            for k in 0..grad.len() {
                let sk = g.values()[k] - g_prev[k];
                ss += dom.weight(k) * sk * sk;
                sy += sk * (grad[k] - grad_prev[k]);
            }
            if sy > 0.0 && ss > 0.0 {
                mu = (ss / sy).min(1e6 * config.step_size);
            }
        }
        let step = descend(model, &g, &w, &eval, &grad, mu)?;
        let before = eval.cost;
        prev = Some((g.values().to_vec(), grad.clone()));
        if step.accepted {
            g = step.compressor;
            eval = step.evaluation;
            mu = (2.0 * step.step_size).min(1e6 * config.step_size);
        }
        let w_new = model.expander(&g)?;
        let eval_new = model.evaluate(&g, &w_new)?;
        if eval_new.cost <= eval.cost {
            w = w_new;
            eval = eval_new;
        }
        history.push(eval.cost);
        observer(iterations, &g, &w);
        let rel = (before - eval.cost) / before.abs().max(f64::MIN_POSITIVE);
        if rel < config.cost_tol {
            quiet += 1;
            if quiet >= PATIENCE {
                converged = true;
                break;
            }
        } else {
            quiet = 0;
        }
    }
    Ok(StageOutcome { compressor: g, expander: w, evaluation: eval, iterations, converged, history })
}

/// Stages walked for a target mode: schedule entries on the low-rate side of
/// the target, then the target itself.
pub fn relaxation_stages(mode: RateMode, schedule: &[f64]) -> Vec<RateMode> {
    let mut stages = Vec::new();
    match mode {
        RateMode::Variable { lambda } => {
            let mut ls: Vec<f64> = schedule.iter().copied().filter(|&l| l > lambda).collect();
            ls.sort_by(|a, b| b.total_cmp(a));
            ls.dedup();
            stages.extend(ls.into_iter().map(|lambda| RateMode::Variable { lambda }));
        }
        RateMode::Fixed { levels } => {
            let mut ts: Vec<u32> = schedule
                .iter()
                .map(|&r| ((2f64.powf(r) - 1.0) / 2.0).round().max(1.0) as u32)
                .filter(|&t| t < levels)
                .collect();
            ts.sort_unstable();
            ts.dedup();
            stages.extend(ts.into_iter().map(|levels| RateMode::Fixed { levels }));
        }
    }
    stages.push(mode);
    stages
}

/// Linear start `g(x) = slope·x` with small seeded noise and one pass of
/// three-point averaging.
pub fn initial_compressor(domain: &ScalarGrid, slope: f64, seed: u64) -> Result<MonotoneMap> {
    if !(slope > 0.0 && slope.is_finite()) {
        return Err(invalid(format!("initial slope must be positive, got {slope}")));
    }
    let h = domain.spacing();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.1 * h * slope).expect("positive spread");
    let raw: Vec<f64> = domain.abscissae().map(|x| slope * x + noise.sample(&mut rng)).collect();
    let n = raw.len();
    let smooth: Vec<f64> = (0..n)
        .map(|k| {
            if k == 0 || k + 1 == n {
                raw[k]
            } else {
                (raw[k - 1] + raw[k] + raw[k + 1]) / 3.0
            }
        })
        .collect();
    MonotoneMap::project(domain, &smooth, MonotoneMap::monotone_floor(domain))
}

/// Slope of the linear start. Fixed-rate starts map the support onto
/// `[-TΔ, TΔ]`; variable-rate starts use the linear compander of least cost
/// at the given `λ`.
pub fn initial_slope(source: &SourceModel, mode: RateMode) -> Result<f64> {
    initial_slope_penalized(source, mode, 0.0)
}

fn initial_slope_penalized(source: &SourceModel, mode: RateMode, penalty: f64) -> Result<f64> {
    let domain = source.pdf();
    if let Some(r) = mode.reach(DESIGN_DELTA) {
        return Ok(r / domain.x_max().abs().max(domain.x_min().abs()));
    }
    let model = CostModel::new(source, DESIGN_DELTA, mode)?.with_penalty(penalty);
    let cost = |u: f64| -> f64 {
        let vals = domain.abscissae().map(|x| u.exp() * x).collect();
        let g = match domain.with_values(vals).and_then(MonotoneMap::new) {
            Ok(g) => g,
            Err(_) => return f64::INFINITY,
        };
        model.expander(&g).and_then(|w| model.evaluate(&g, &w)).map_or(f64::INFINITY, |e| e.cost)
    };
    let (u, _) = crate::search::golden_min(cost, MIN_SLOPE.ln(), MAX_SLOPE.ln(), 1e-3);
    Ok(u.exp())
}

const MIN_SLOPE: f64 = 0.02;
const MAX_SLOPE: f64 = 4.0;

/// Rescales a fixed-rate compressor when the level count changes.
fn rescale_for_levels(g: &MonotoneMap, from: u32, to: u32) -> Result<MonotoneMap> {
    let s = to as f64 / from as f64;
    let vals = g.values().iter().map(|v| v * s).collect();
    MonotoneMap::new(g.grid().with_values(vals)?)
}

/// Unconstrained randomized quantizer design from a seeded start.
pub fn design_unconstrained(source: &SourceModel, mode: RateMode, config: &DesignConfig) -> Result<RandomizedDesign> {
    design_with_observer(source, mode, config, 0.0, &mut |_, _, _| {})
}

/// With the orthogonality penalty the cost is `gain²` times an unpenalized
/// cost at `λ/gain²`, `gain = 1 + penalty/2`, up to a constant. Step and
/// schedule are expressed in that unpenalized scale.
fn penalized_config(config: &DesignConfig, mode: RateMode, penalty: f64) -> DesignConfig {
    let mut config = config.clone();
    if penalty != 0.0 {
        let gain2 = (1.0 + 0.5 * penalty).powi(2);
        config.step_size /= gain2;
        if !mode.is_fixed() {
            config.relaxation_schedule.iter_mut().for_each(|l| *l *= gain2);
        }
    }
    config
}

/// Design continued from an existing compressor (no relaxation schedule).
pub fn design_from(
    source: &SourceModel,
    init: MonotoneMap,
    mode: RateMode,
    config: &DesignConfig,
    penalty: f64,
) -> Result<RandomizedDesign> {
    config.validate()?;
    let config = &penalized_config(config, mode, penalty);
    let model = CostModel::new(source, DESIGN_DELTA, mode)?.with_penalty(penalty);
    let out = optimize_stage(&model, init, config, &mut |_, _, _| {})?;
    finish(source, mode, out, config.seed, penalty)
}

pub fn design_with_observer(
    source: &SourceModel,
    mode: RateMode,
    config: &DesignConfig,
    penalty: f64,
    observer: &mut Observer<'_>,
) -> Result<RandomizedDesign> {
    config.validate()?;
    let config = &penalized_config(config, mode, penalty);
    let stages = relaxation_stages(mode, &config.relaxation_schedule);
    let sized_for = if matches!(mode, RateMode::Variable { .. }) { mode } else { stages[0] };
    let slope = initial_slope_penalized(source, sized_for, penalty)?;
    let mut g = initial_compressor(source.pdf(), slope, config.seed)?;
    let mut outcome = None;
    let mut total_iters = 0;
    let mut prev_levels = None;
    for stage in stages {
        if let (RateMode::Fixed { levels }, Some(prev)) = (stage, prev_levels) {
            if levels != prev {
                g = rescale_for_levels(&g, prev, levels)?;
            }
        }
        if let RateMode::Fixed { levels } = stage {
            prev_levels = Some(levels);
        }
        let model = CostModel::new(source, DESIGN_DELTA, stage)?.with_penalty(penalty);
        let out = optimize_stage(&model, g, config, observer)?;
        total_iters += out.iterations;
        g = out.compressor.clone();
        outcome = Some(out);
    }
    let out = outcome.expect("at least one stage");
    let mut design = finish(source, mode, out, config.seed, penalty)?;
    design.iterations = total_iters;
    Ok(design)
}

fn finish(
    source: &SourceModel,
    mode: RateMode,
    out: StageOutcome,
    seed: u64,
    penalty: f64,
) -> Result<RandomizedDesign> {
    let iterations = out.iterations;
    let converged = out.converged;
    let mut design = RandomizedDesign::from_maps(source, out.compressor, out.expander, DESIGN_DELTA, mode)?;
    if penalty != 0.0 {
        design.lagrangian_cost = out.evaluation.cost;
    }
    design.converged = converged;
    design.iterations = iterations;
    design.seed = seed;
    Ok(design)
}
