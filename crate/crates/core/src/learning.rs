//! Fitting energy and planner weights.
//!
//! The objective per scene is `L_plan + alpha * L_pred`:
//!
//! * `L_pred` is the mean cross-entropy of each actor's marginal against the
//!   sample closest to its ground-truth future. Marginals come from a fixed
//!   number of synchronous BP rounds, and the gradient is taken through those
//!   rounds by reverse-mode differentiation of the log-domain updates.
//! * `L_plan` is the max-margin hinge `max_k relu(C(expert) - C(k) + d_k + pen_k)`
//!   over the ego candidates, with `d_k` the mean distance to the expert and
//!   `pen_k` a constant charged to candidates that hit a ground-truth future
//!   or leave the route lane.
//!
//! By default the planning term treats the marginals as constants, so energy
//! weights are driven only by the prediction term.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::{CollisionEdges, CollisionMatrix, FeatureTable, UnaryTable, NUM_FEATURES};
use crate::error::{Error, Result};
use crate::geometry::{lane_violation, trajectories_collide};
use crate::inference::{beliefs, bp_round, directed, log_sum_exp, raw_message, uniform_messages, Layout, Marginals};
use crate::pipeline::{sample_sets, PipelineConfig, SceneTables};
use crate::planner::{plan_features, PlanContext, PlannerWeights, NUM_PLAN_FEATURES};
use crate::sampler::Trajectory;
use crate::scenario::Scene;
use crate::weights::ModelWeights;

/// Index of the sample whose waypoints are closest (summed L2) to `gt`;
/// ties go to the lowest index.
pub fn prediction_target(gt: &Trajectory, samples: &[Trajectory]) -> Result<usize> {
    if samples.is_empty() {
        return Err(Error::contract("prediction target needs at least one sample"));
    }
    let mut best = (f64::INFINITY, 0);
    for (k, s) in samples.iter().enumerate() {
        crate::geometry::ensure_same_grid(gt, s)?;
        let d: f64 = s.positions().zip(gt.positions()).map(|(p, q)| p.distance(q)).sum();
        if d < best.0 {
            best = (d, k);
        }
    }
    Ok(best.1)
}

/// Mean over actors of `-log p_i(target_i)`.
pub fn prediction_loss(marginals: &Marginals, targets: &[usize]) -> Result<f64> {
    if targets.len() != marginals.num_actors {
        return Err(Error::contract(format!(
            "{} targets for {} actors",
            targets.len(),
            marginals.num_actors
        )));
    }
    if targets.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (i, &t) in targets.iter().enumerate() {
        if t >= marginals.num_samples {
            return Err(Error::contract(format!("target {t} out of range")));
        }
        total -= marginals.get(i, t).ln();
    }
    let loss = total / targets.len() as f64;
    if !loss.is_finite() {
        return Err(Error::NonFinite("prediction loss".into()));
    }
    Ok(loss)
}

/// `max_k relu(gt_cost - costs[k] + distances[k] + penalties[k])`.
pub fn planning_loss(costs: &[f64], gt_cost: f64, distances: &[f64], penalties: &[f64]) -> Result<f64> {
    if costs.len() != distances.len() || costs.len() != penalties.len() {
        return Err(Error::contract("planning loss inputs differ in length"));
    }
    Ok(costs
        .iter()
        .zip(distances)
        .zip(penalties)
        .map(|((c, d), p)| gt_cost - c + d + p)
        .fold(0.0, f64::max))
}

/// Planning cost of the expert: route features plus expected collision cost
/// under `marginals`.
pub fn gt_cost(
    scene: &Scene,
    weights: &PlannerWeights,
    marginals: &Marginals,
    actor_sets: &[Vec<Trajectory>],
) -> Result<f64> {
    if scene.expert.waypoints.is_empty() {
        return Err(Error::contract(format!("scene {} has no expert trajectory", scene.id)));
    }
    let ctx = PlanContext::build(scene, vec![scene.expert.clone()], actor_sets)?;
    Ok(weights.traj_cost(&ctx.features[0]) + weights.lambda * ctx.expected_collisions(0, marginals))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Weight of the prediction loss.
    pub alpha: f64,
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    /// Scenes per update; 0 means the whole dataset.
    pub batch_size: usize,
    /// Samples per actor and ego candidates during training.
    pub k_train: usize,
    pub seed: u64,
    /// BP rounds unrolled in the objective.
    pub bp_iterations: usize,
    pub learn_gamma: bool,
    /// Let the planning loss differentiate through the marginals.
    pub planning_through_marginals: bool,
    /// Margin added for candidates that collide with a ground-truth future
    /// or violate the route lane.
    pub unsafe_penalty: f64,
    /// Compare analytic and finite-difference gradients on a few scenes
    /// before training.
    pub gradient_check: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            alpha: 1.0,
            learning_rate: 0.01,
            momentum: 0.0,
            epochs: 20,
            batch_size: 0,
            k_train: 100,
            seed: 0,
            bp_iterations: 5,
            learn_gamma: false,
            planning_through_marginals: false,
            unsafe_penalty: 2.0,
            gradient_check: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::config("alpha must be finite and >= 0"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("momentum must lie in [0, 1)"));
        }
        if self.k_train == 0 || self.bp_iterations == 0 {
            return Err(Error::config("k_train and bp_iterations must be at least 1"));
        }
        if !(self.unsafe_penalty >= 0.0) {
            return Err(Error::config("unsafe_penalty must be >= 0"));
        }
        Ok(())
    }
}

/// One scene reduced to the tables the objective needs.
#[derive(Debug, Clone)]
pub struct Example {
    pub features: FeatureTable,
    pub edges: CollisionEdges,
    pub targets: Vec<usize>,
    pub plan_features: Vec<[f64; NUM_PLAN_FEATURES]>,
    /// Per actor; rows index ego candidates.
    pub plan_collisions: Vec<CollisionMatrix>,
    pub expert_features: [f64; NUM_PLAN_FEATURES],
    /// Per actor, samples colliding with the expert.
    pub expert_collisions: Vec<Vec<u32>>,
    /// `d_k + pen_k` per candidate.
    pub margins: Vec<f64>,
}

impl Example {
    pub fn from_scene(scene: &Scene, pipeline: &PipelineConfig, cfg: &TrainConfig) -> Result<Self> {
        let sampler = pipeline.sampler.with_samples(cfg.k_train);
        let sets = sample_sets(scene, &sampler)?;
        let tables = SceneTables::build(scene, &sets, pipeline.interaction_radius)?;
        let targets = scene
            .actors
            .iter()
            .zip(&sets.actors)
            .map(|(a, s)| prediction_target(&a.gt_future, s))
            .collect::<Result<Vec<_>>>()?;
        let ctx = PlanContext::build(scene, sets.ego, &sets.actors)?;
        let expert = PlanContext::build(scene, vec![scene.expert.clone()], &sets.actors)?;
        let route_lanes = scene.route_lanes();
        let margins = ctx
            .candidates
            .iter()
            .map(|c| {
                let d = c
                    .positions()
                    .zip(scene.expert.positions())
                    .map(|(p, q)| p.distance(q))
                    .sum::<f64>()
                    / c.waypoints.len() as f64;
                let mut unsafe_ = lane_violation(c, &scene.ego.footprint, &route_lanes)?;
                for a in &scene.actors {
                    unsafe_ = unsafe_ || trajectories_collide(c, &scene.ego.footprint, &a.gt_future, &a.footprint)?;
                }
                Ok(d + if unsafe_ { cfg.unsafe_penalty } else { 0.0 })
            })
            .collect::<Result<Vec<_>>>()?;
        let expert_features = plan_features(
            &scene.expert,
            &scene.ego.footprint,
            &scene.route_centerline()?,
            &route_lanes,
        )?;
        Ok(Example {
            features: tables.features,
            edges: tables.edges,
            targets,
            plan_features: ctx.features,
            plan_collisions: ctx.collisions,
            expert_features,
            expert_collisions: expert.collisions.iter().map(|m| m.row(0).to_vec()).collect(),
            margins,
        })
    }
}

pub fn prepare_examples(scenes: &[Scene], pipeline: &PipelineConfig, cfg: &TrainConfig) -> Result<Vec<Example>> {
    scenes
        .par_iter()
        .map(|s| Example::from_scene(s, pipeline, cfg))
        .collect()
}

/// Flat parameter vector: unary weights, gamma, planner feature weights.
pub const NUM_PARAMS: usize = NUM_FEATURES + 1 + NUM_PLAN_FEATURES;
const GAMMA: usize = NUM_FEATURES;
const PLAN: usize = NUM_FEATURES + 1;

pub fn to_params(w: &ModelWeights) -> [f64; NUM_PARAMS] {
    let mut p = [0.0; NUM_PARAMS];
    p[..NUM_FEATURES].copy_from_slice(&w.energy.unary);
    p[GAMMA] = w.energy.gamma;
    p[PLAN..].copy_from_slice(&w.planner.traj);
    p
}

pub fn from_params(p: &[f64; NUM_PARAMS], lambda: f64) -> ModelWeights {
    let mut w = ModelWeights::zero();
    w.energy.unary.copy_from_slice(&p[..NUM_FEATURES]);
    w.energy.gamma = p[GAMMA];
    w.planner.traj.copy_from_slice(&p[PLAN..]);
    w.planner.lambda = lambda;
    w
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossParts {
    pub total: f64,
    pub prediction: f64,
    pub planning: f64,
}

/// Options of the objective that are not weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objective {
    pub alpha: f64,
    pub lambda: f64,
    pub bp_iterations: usize,
    pub planning_through_marginals: bool,
}

impl Objective {
    pub fn from_config(cfg: &TrainConfig, lambda: f64) -> Self {
        Objective {
            alpha: cfg.alpha,
            lambda,
            bp_iterations: cfg.bp_iterations,
            planning_through_marginals: cfg.planning_through_marginals,
        }
    }
}

struct Forward {
    unary: UnaryTable,
    layout: Layout,
    /// Messages before round 1 through after the last round.
    history: Vec<Vec<Vec<f64>>>,
    probs: Vec<Vec<f64>>,
}

fn forward(ex: &Example, params: &[f64; NUM_PARAMS], rounds: usize) -> Forward {
    let mut w = [0.0; NUM_FEATURES];
    w.copy_from_slice(&params[..NUM_FEATURES]);
    let unary = ex.features.unary(&w);
    let layout = Layout::new(&ex.edges);
    let mut history = vec![uniform_messages(&ex.edges, unary.num_samples)];
    for _ in 0..rounds {
        let next = bp_round(
            &unary,
            &ex.edges,
            &layout,
            params[GAMMA],
            history.last().expect("non-empty"),
        );
        history.push(next);
    }
    let b = beliefs(&unary, &layout, history.last().expect("non-empty"));
    let probs = b
        .iter()
        .map(|row| {
            let z = log_sum_exp(row);
            row.iter().map(|x| (x - z).exp()).collect()
        })
        .collect();
    Forward {
        unary,
        layout,
        history,
        probs,
    }
}

/// Loss of one example and, if requested, its gradient.
pub fn example_loss(
    ex: &Example,
    params: &[f64; NUM_PARAMS],
    obj: &Objective,
    want_grad: bool,
) -> Result<(LossParts, Option<[f64; NUM_PARAMS]>)> {
    let fw = forward(ex, params, obj.bp_iterations);
    let n = ex.targets.len();
    let prediction = if n == 0 {
        0.0
    } else {
        -ex.targets
            .iter()
            .enumerate()
            .map(|(i, &t)| fw.probs[i][t].ln())
            .sum::<f64>()
            / n as f64
    };

    let expected = |rows: &dyn Fn(usize) -> Vec<u32>| -> f64 {
        (0..n)
            .map(|i| rows(i).iter().map(|&k| fw.probs[i][k as usize]).sum::<f64>())
            .sum()
    };
    let wp = &params[PLAN..];
    let dot = |f: &[f64; NUM_PLAN_FEATURES]| f.iter().zip(wp).map(|(a, b)| a * b).sum::<f64>();
    let gt = dot(&ex.expert_features) + obj.lambda * expected(&|i| ex.expert_collisions[i].clone());
    let mut planning = 0.0;
    let mut worst: Option<usize> = None;
    for (e, f) in ex.plan_features.iter().enumerate() {
        let c = dot(f) + obj.lambda * expected(&|i| ex.plan_collisions[i].row(e).to_vec());
        let hinge = gt - c + ex.margins[e];
        if hinge > planning {
            planning = hinge;
            worst = Some(e);
        }
    }
    let parts = LossParts {
        total: planning + obj.alpha * prediction,
        prediction,
        planning,
    };
    if !parts.total.is_finite() {
        return Err(Error::NonFinite("training loss".into()));
    }
    if !want_grad {
        return Ok((parts, None));
    }

    let mut grad = [0.0; NUM_PARAMS];
    if let Some(e) = worst {
        for f in 0..NUM_PLAN_FEATURES {
            grad[PLAN + f] = ex.expert_features[f] - ex.plan_features[e][f];
        }
    }
    // Gradient with respect to the final log beliefs.
    let mut db: Vec<Vec<f64>> = fw.probs.iter().map(|p| vec![0.0; p.len()]).collect();
    if obj.alpha != 0.0 && n > 0 {
        let scale = obj.alpha / n as f64;
        for (i, &t) in ex.targets.iter().enumerate() {
            for (s, d) in db[i].iter_mut().enumerate() {
                *d += scale * (fw.probs[i][s] - if s == t { 1.0 } else { 0.0 });
            }
        }
    }
    if obj.planning_through_marginals && obj.lambda != 0.0 {
        if let Some(e) = worst {
            for (i, row) in db.iter_mut().enumerate() {
                let k = fw.probs[i].len();
                let mut g = vec![0.0; k];
                for &s in &ex.expert_collisions[i] {
                    g[s as usize] += obj.lambda;
                }
                for &s in ex.plan_collisions[i].row(e) {
                    g[s as usize] -= obj.lambda;
                }
                let mean: f64 = g.iter().zip(&fw.probs[i]).map(|(a, p)| a * p).sum();
                for s in 0..k {
                    row[s] += fw.probs[i][s] * (g[s] - mean);
                }
            }
        }
    }
    if db.iter().flatten().any(|&d| d != 0.0) {
        let (du, dgamma) = backward(ex, &fw, params[GAMMA], db);
        for (i, row) in du.iter().enumerate() {
            for (s, d) in row.iter().enumerate() {
                let f = ex.features.get(i, s);
                for (g, x) in grad[..NUM_FEATURES].iter_mut().zip(f) {
                    *g += d * x;
                }
            }
        }
        grad[GAMMA] = dgamma;
    }
    Ok((parts, Some(grad)))
}

/// Reverse pass through the unrolled rounds; returns dL/dU and dL/dgamma
/// given dL/d(final log beliefs).
fn backward(ex: &Example, fw: &Forward, gamma: f64, db: Vec<Vec<f64>>) -> (Vec<Vec<f64>>, f64) {
    let k = fw.unary.num_samples;
    let decay = (-2.0 * gamma).exp();
    let mut du: Vec<Vec<f64>> = db.iter().map(|row| row.iter().map(|d| -d).collect()).collect();
    let mut dgamma = 0.0;
    // dL/d(messages) after the current round.
    let mut dm: Vec<Vec<f64>> = vec![vec![0.0; k]; fw.history[0].len()];
    for (i, row) in db.iter().enumerate() {
        for &m in &fw.layout.incoming[i] {
            for (a, b) in dm[m].iter_mut().zip(row) {
                *a += b;
            }
        }
    }
    for t in (1..fw.history.len()).rev() {
        let prev = &fw.history[t - 1];
        let out = &fw.history[t];
        let b = beliefs(&fw.unary, &fw.layout, prev);
        let mut dprev: Vec<Vec<f64>> = vec![vec![0.0; k]; prev.len()];
        for d in directed(&ex.edges) {
            let g = &dm[d.out];
            if d.matrix.is_empty() || g.iter().all(|&x| x == 0.0) {
                continue;
            }
            let h: Vec<f64> = (0..k).map(|s| b[d.from][s] - prev[d.back][s]).collect();
            let (raw, mx, w) = raw_message(&d, &h, decay);
            // Through the normalization m = raw - lse(raw).
            let gsum: f64 = g.iter().sum();
            let q: Vec<f64> = (0..k)
                .map(|l| (g[l] - out[d.out][l].exp() * gsum) * (mx - raw[l]).exp())
                .collect();
            let qsum: f64 = q.iter().sum();
            let mut dh = vec![0.0; k];
            for s in 0..k {
                let hit: f64 = d.receivers(s).iter().map(|&l| q[l as usize]).sum();
                dh[s] = w[s] * (qsum - (1.0 - decay) * hit);
                dgamma -= 2.0 * decay * w[s] * hit;
            }
            for s in 0..k {
                du[d.from][s] -= dh[s];
            }
            for &m in &fw.layout.incoming[d.from] {
                if m != d.back {
                    for (a, x) in dprev[m].iter_mut().zip(&dh) {
                        *a += x;
                    }
                }
            }
        }
        dm = dprev;
    }
    (du, dgamma)
}

/// Mean loss and gradient over `batch`. Per-example work runs in parallel;
/// the reduction is sequential so results do not depend on scheduling.
pub fn batch_loss(
    examples: &[&Example],
    params: &[f64; NUM_PARAMS],
    obj: &Objective,
    want_grad: bool,
) -> Result<(LossParts, [f64; NUM_PARAMS])> {
    let results = examples
        .par_iter()
        .map(|ex| example_loss(ex, params, obj, want_grad))
        .collect::<Result<Vec<_>>>()?;
    let mut parts = LossParts::default();
    let mut grad = [0.0; NUM_PARAMS];
    let n = examples.len().max(1) as f64;
    for (p, g) in results {
        parts.total += p.total / n;
        parts.prediction += p.prediction / n;
        parts.planning += p.planning / n;
        if let Some(g) = g {
            for (a, b) in grad.iter_mut().zip(g) {
                *a += b / n;
            }
        }
    }
    Ok((parts, grad))
}

/// Largest relative error between the analytic gradient and central finite
/// differences with step `h`. Relative error is
/// `|a - n| / max(|a|, |n|, floor * max(1, |loss|))`; the floor keeps
/// finite-difference roundoff on near-zero components from counting as error.
///
/// With frozen marginals the energy parameters only see the prediction
/// term, so their finite differences are taken on `alpha * L_pred`.
pub fn gradient_check(ex: &Example, params: &[f64; NUM_PARAMS], obj: &Objective, h: f64, floor: f64) -> Result<f64> {
    let (loss, g) = example_loss(ex, params, obj, true)?;
    let g = g.expect("gradient requested");
    let floor = floor * loss.total.abs().max(1.0);
    let mut worst = 0.0f64;
    for p in 0..NUM_PARAMS {
        let mut up = *params;
        let mut down = *params;
        up[p] += h;
        down[p] -= h;
        let (lu, _) = example_loss(ex, &up, obj, false)?;
        let (ld, _) = example_loss(ex, &down, obj, false)?;
        let numeric = if p < PLAN && !obj.planning_through_marginals {
            obj.alpha * (lu.prediction - ld.prediction) / (2.0 * h)
        } else {
            (lu.total - ld.total) / (2.0 * h)
        };
        let err = (g[p] - numeric).abs() / g[p].abs().max(numeric.abs()).max(floor);
        worst = worst.max(err);
    }
    Ok(worst)
}

pub const GRADIENT_CHECK_STEP: f64 = 1e-5;
pub const GRADIENT_CHECK_FLOOR: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Dataset loss with the initial weights.
    pub initial: LossParts,
    /// Dataset loss after each epoch.
    pub total: Vec<f64>,
    pub prediction: Vec<f64>,
    pub planning: Vec<f64>,
    pub weights: ModelWeights,
    pub gradient_check_max_rel_error: Option<f64>,
}

pub fn train(examples: &[Example], init: &ModelWeights, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    init.validate()?;
    if examples.is_empty() {
        return Err(Error::config("training needs at least one scene"));
    }
    let obj = Objective::from_config(cfg, init.planner.lambda);
    let mut params = to_params(init);
    let all: Vec<&Example> = examples.iter().collect();

    let gradient_check_max_rel_error = if cfg.gradient_check {
        let mut worst = 0.0f64;
        for ex in examples.iter().take(3) {
            worst = worst.max(gradient_check(
                ex,
                &params,
                &obj,
                GRADIENT_CHECK_STEP,
                GRADIENT_CHECK_FLOOR,
            )?);
        }
        Some(worst)
    } else {
        None
    };

    let (initial, _) = batch_loss(&all, &params, &obj, false)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let batch = if cfg.batch_size == 0 {
        examples.len()
    } else {
        cfg.batch_size
    };
    let mut velocity = [0.0; NUM_PARAMS];
    let mut report = TrainReport {
        initial,
        total: Vec::with_capacity(cfg.epochs),
        prediction: Vec::with_capacity(cfg.epochs),
        planning: Vec::with_capacity(cfg.epochs),
        weights: init.clone(),
        gradient_check_max_rel_error,
    };
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            let items: Vec<&Example> = chunk.iter().map(|&i| &examples[i]).collect();
            let (_, mut grad) = batch_loss(&items, &params, &obj, true).map_err(|e| divergence(epoch, e))?;
            if !cfg.learn_gamma {
                grad[GAMMA] = 0.0;
            }
            for p in 0..NUM_PARAMS {
                velocity[p] = cfg.momentum * velocity[p] - cfg.learning_rate * grad[p];
                params[p] += velocity[p];
            }
            params[GAMMA] = params[GAMMA].max(0.0);
            if params.iter().any(|p| !p.is_finite()) {
                return Err(Error::Divergence {
                    epoch,
                    reason: "weights became non-finite".into(),
                });
            }
        }
        let (parts, _) = batch_loss(&all, &params, &obj, false).map_err(|e| divergence(epoch, e))?;
        report.total.push(parts.total);
        report.prediction.push(parts.prediction);
        report.planning.push(parts.planning);
    }
    report.weights = from_params(&params, init.planner.lambda);
    Ok(report)
}

fn divergence(epoch: usize, e: Error) -> Error {
    match e {
        Error::NonFinite(what) => Error::Divergence {
            epoch,
            reason: format!("{what} is non-finite"),
        },
        other => other,
    }
}

/// Fraction of actors whose most probable sample is their target.
pub fn top1_accuracy(examples: &[Example], weights: &ModelWeights, bp_iterations: usize) -> f64 {
    let params = to_params(weights);
    let (mut hit, mut total) = (0usize, 0usize);
    for ex in examples {
        let fw = forward(ex, &params, bp_iterations);
        for (i, &t) in ex.targets.iter().enumerate() {
            total += 1;
            if crate::inference::argmax(&fw.probs[i]) == t {
                hit += 1;
            }
        }
    }
    if total == 0 {
        1.0
    } else {
        hit as f64 / total as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hinge_arithmetic() {
        assert!((planning_loss(&[1.2], 1.0, &[0.5], &[0.0]).unwrap() - 0.3).abs() < 1e-12);
        assert_eq!(planning_loss(&[5.0, 6.0], 1.0, &[0.5, 0.5], &[1.0, 1.0]).unwrap(), 0.0);
        assert!(planning_loss(&[1.0], 1.0, &[], &[]).is_err());
    }

    #[test]
    fn cross_entropy_of_uniform() {
        let m = Marginals::from_rows(vec![vec![0.25; 4]]).unwrap();
        assert!((prediction_loss(&m, &[2]).unwrap() - 4f64.ln()).abs() < 1e-15);
        let m = Marginals::from_rows(vec![vec![1.0 - 1e-9, 1e-9]]).unwrap();
        assert!((prediction_loss(&m, &[0]).unwrap() - 1e-9).abs() < 1e-15);
    }
}
