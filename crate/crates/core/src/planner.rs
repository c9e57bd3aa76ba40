//! Sampling-based ego planning: every candidate from the shared sampler is
//! scored by a feature-linear route cost plus the collision cost expected
//! under the predicted per-actor marginals, and the cheapest one wins.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::{cross_collisions, lane_alignment, mean_abs_accel, mean_abs_curvature, CollisionMatrix};
use crate::error::{Error, Result};
use crate::geometry::{lane_violation, Footprint, LaneGeometry};
use crate::inference::Marginals;
use crate::sampler::{sample_trajectories, KinematicState, SamplerConfig, TimeGrid, Trajectory, TrajectorySet};
use crate::scenario::Scene;

pub const NUM_PLAN_FEATURES: usize = 6;

pub const PLAN_FEATURE_NAMES: [&str; NUM_PLAN_FEATURES] = [
    "lateral_offset",
    "heading_misalignment",
    "progress_shortfall",
    "acceleration",
    "curvature",
    "lane_violation",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerWeights {
    /// One weight per entry of [`PLAN_FEATURE_NAMES`].
    pub traj: [f64; NUM_PLAN_FEATURES],
    /// Cost of colliding with one actor sample.
    pub lambda: f64,
}

impl Default for PlannerWeights {
    fn default() -> Self {
        PlannerWeights {
            traj: [1.0, 2.0, 0.1, 0.3, 2.0, 5.0],
            lambda: 20.0,
        }
    }
}

impl PlannerWeights {
    pub fn zero() -> Self {
        PlannerWeights {
            traj: [0.0; NUM_PLAN_FEATURES],
            lambda: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.traj.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("planner weight".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::config(format!(
                "lambda must be finite and >= 0, got {}",
                self.lambda
            )));
        }
        Ok(())
    }

    pub fn traj_cost(&self, f: &[f64; NUM_PLAN_FEATURES]) -> f64 {
        f.iter().zip(&self.traj).map(|(a, b)| a * b).sum()
    }
}

/// Candidate ego plans; the same sampler and contract as actor futures.
pub fn ego_trajectory_set(ego: &KinematicState, cfg: &SamplerConfig, grid: &TimeGrid) -> Result<TrajectorySet> {
    sample_trajectories(ego, cfg, grid)
}

/// Route-relative features of one ego trajectory.
pub fn plan_features(
    traj: &Trajectory,
    footprint: &Footprint,
    route: &LaneGeometry,
    route_lanes: &[LaneGeometry],
) -> Result<[f64; NUM_PLAN_FEATURES]> {
    let (lateral, heading) = lane_alignment(traj, route);
    let shortfall = (route.length() - route.project(traj.end()).station).max(0.0);
    let violation = if lane_violation(traj, footprint, route_lanes)? {
        1.0
    } else {
        0.0
    };
    let f = [
        lateral,
        heading,
        shortfall,
        mean_abs_accel(traj),
        mean_abs_curvature(traj),
        violation,
    ];
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("plan features {f:?}")));
    }
    Ok(f)
}

/// `sum_i lambda * sum_k p_i(k) * collides(tau, s_i^k)`.
pub fn expected_collision_cost(
    tau: &Trajectory,
    ego_footprint: &Footprint,
    marginals: &Marginals,
    actor_sets: &[TrajectorySet],
    footprints: &[Footprint],
    lambda: f64,
) -> Result<f64> {
    check_dims(marginals, actor_sets, footprints)?;
    let mut cost = 0.0;
    for (i, (set, fp)) in actor_sets.iter().zip(footprints).enumerate() {
        let m = cross_collisions(std::slice::from_ref(tau), ego_footprint, set, fp)?;
        cost += m.row(0).iter().map(|&k| marginals.get(i, k as usize)).sum::<f64>();
    }
    Ok(lambda * cost)
}

fn check_dims(marginals: &Marginals, actor_sets: &[TrajectorySet], footprints: &[Footprint]) -> Result<()> {
    if marginals.num_actors != actor_sets.len() || footprints.len() != actor_sets.len() {
        return Err(Error::contract(format!(
            "{} marginal rows, {} trajectory sets, {} footprints",
            marginals.num_actors,
            actor_sets.len(),
            footprints.len()
        )));
    }
    if actor_sets.iter().any(|s| s.len() != marginals.num_samples) {
        return Err(Error::contract("trajectory set size differs from marginal width"));
    }
    Ok(())
}

/// Everything about the ego candidates that does not depend on weights or
/// marginals.
#[derive(Debug, Clone)]
pub struct PlanContext {
    pub candidates: TrajectorySet,
    pub features: Vec<[f64; NUM_PLAN_FEATURES]>,
    /// Per actor, rows index candidates and columns index actor samples.
    pub collisions: Vec<CollisionMatrix>,
}

impl PlanContext {
    pub fn build(scene: &Scene, candidates: TrajectorySet, actor_sets: &[TrajectorySet]) -> Result<Self> {
        if actor_sets.len() != scene.actors.len() {
            return Err(Error::contract(format!(
                "{} trajectory sets for {} actors",
                actor_sets.len(),
                scene.actors.len()
            )));
        }
        let route = scene.route_centerline()?;
        let route_lanes = scene.route_lanes();
        let fp = scene.ego.footprint;
        let features = candidates
            .par_iter()
            .map(|t| {
                t.validate(&scene.grid)?;
                plan_features(t, &fp, &route, &route_lanes)
            })
            .collect::<Result<Vec<_>>>()?;
        let collisions = actor_sets
            .par_iter()
            .zip(&scene.actors)
            .map(|(set, a)| cross_collisions(&candidates, &fp, set, &a.footprint))
            .collect::<Result<Vec<_>>>()?;
        Ok(PlanContext {
            candidates,
            features,
            collisions,
        })
    }

    /// Expected number of colliding actor samples for candidate `e`
    /// (the expected collision cost divided by lambda).
    pub fn expected_collisions(&self, e: usize, marginals: &Marginals) -> f64 {
        self.collisions
            .iter()
            .enumerate()
            .map(|(i, m)| m.row(e).iter().map(|&k| marginals.get(i, k as usize)).sum::<f64>())
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleCost {
    pub traj_cost: f64,
    pub collision_cost: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    pub chosen_index: usize,
    pub chosen: Trajectory,
    pub costs: Vec<SampleCost>,
}

/// How actor uncertainty enters the collision cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollisionMode {
    /// Expectation under the full marginals.
    #[default]
    Marginals,
    /// Point mass on each actor's most likely sample.
    MostLikely,
    /// Collision cost dropped (lambda = 0).
    Ignore,
}

/// Exact minimisation over the candidates; ties go to the lowest index.
pub fn plan_in_context(
    ctx: &PlanContext,
    marginals: &Marginals,
    weights: &PlannerWeights,
    mode: CollisionMode,
) -> Result<PlanResult> {
    if ctx.candidates.is_empty() {
        return Err(Error::contract("empty ego trajectory set"));
    }
    if ctx.collisions.len() != marginals.num_actors
        || ctx.collisions.iter().any(|m| m.shape().1 != marginals.num_samples)
    {
        return Err(Error::contract("marginals do not match the planning context"));
    }
    weights.validate()?;
    let point;
    let (probs, lambda) = match mode {
        CollisionMode::Marginals => (marginals, weights.lambda),
        CollisionMode::MostLikely => {
            point = marginals.point_mass();
            (&point, weights.lambda)
        }
        CollisionMode::Ignore => (marginals, 0.0),
    };
    let costs: Vec<SampleCost> = (0..ctx.candidates.len())
        .map(|e| {
            let traj_cost = weights.traj_cost(&ctx.features[e]);
            let collision_cost = if lambda == 0.0 {
                0.0
            } else {
                lambda * ctx.expected_collisions(e, probs)
            };
            SampleCost {
                traj_cost,
                collision_cost,
                total: traj_cost + collision_cost,
            }
        })
        .collect();
    let mut best = 0;
    for (e, c) in costs.iter().enumerate() {
        if c.total < costs[best].total {
            best = e;
        }
    }
    Ok(PlanResult {
        chosen_index: best,
        chosen: ctx.candidates[best].clone(),
        costs,
    })
}

pub fn plan(
    scene: &Scene,
    marginals: &Marginals,
    actor_sets: &[TrajectorySet],
    weights: &PlannerWeights,
    ego_set: TrajectorySet,
) -> Result<PlanResult> {
    check_dims(marginals, actor_sets, &scene.actor_footprints())?;
    let ctx = PlanContext::build(scene, ego_set, actor_sets)?;
    plan_in_context(&ctx, marginals, weights, CollisionMode::Marginals)
}
