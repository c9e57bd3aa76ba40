//! Prediction and planning metrics over scene suites.
//!
//! Every per-timestamp series covers the future waypoints of the scene grid
//! (t > 0). Collision rates are cumulative: an actor or plan counts at time
//! `t` once it has collided at any check instant up to `t`.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{first_collision_time, lane_violation};
use crate::inference::Marginals;
use crate::sampler::{Trajectory, TrajectorySet};
use crate::scenario::Scene;

pub const MIN_MSD_TOP: usize = 12;

/// Whose trajectories an actor's most likely prediction is checked against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollisionPairing {
    /// Other actors' most likely predictions.
    #[default]
    MostLikely,
    /// Other actors' ground-truth futures.
    GroundTruth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionMetrics {
    pub scenes: usize,
    pub actors: usize,
    /// Seconds of each horizon entry.
    pub horizons: Vec<f64>,
    /// m, mean L2 error of the most likely sample at each horizon.
    pub l2: Vec<f64>,
    /// ‰ of actors whose most likely sample has collided by each horizon.
    pub collision_rate_permille: Vec<f64>,
    /// m², mean over actors of the best mean squared displacement among the
    /// most probable samples.
    pub min_msd: f64,
    /// Fewer than twelve samples were available, so all were used.
    pub min_msd_all_samples: bool,
    pub pairing: CollisionPairing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanningMetrics {
    pub scenes: usize,
    pub horizons: Vec<f64>,
    /// % of plans that have hit an actor's ground-truth future by each horizon.
    pub collision_rate_pct: Vec<f64>,
    /// % of plans touching or crossing a route lane boundary.
    pub lane_violation_pct: f64,
    /// m, mean distance to the expert at each horizon.
    pub l2_to_expert: Vec<f64>,
}

fn horizons(scenes: &[Scene]) -> Result<Vec<f64>> {
    let Some(first) = scenes.first() else {
        return Ok(Vec::new());
    };
    if scenes.iter().any(|s| s.grid != first.grid) {
        return Err(Error::contract("scenes in one suite must share a time grid"));
    }
    Ok(first.grid.times().skip(1).collect())
}

/// Index of the first horizon at or after `t`.
fn bucket(horizons: &[f64], t: f64) -> usize {
    horizons.partition_point(|&h| h < t - 1e-9)
}

fn mean_sq_displacement(a: &Trajectory, b: &Trajectory) -> f64 {
    let n = a.waypoints.len() - 1;
    a.positions()
        .zip(b.positions())
        .skip(1)
        .map(|(p, q)| (p - q).norm_sq())
        .sum::<f64>()
        / n as f64
}

#[derive(Default)]
struct PredictionTally {
    actors: usize,
    l2: Vec<f64>,
    collided: Vec<f64>,
    msd: f64,
}

pub fn eval_prediction(
    scenes: &[Scene],
    marginals: &[Marginals],
    actor_sets: &[Vec<TrajectorySet>],
    pairing: CollisionPairing,
) -> Result<PredictionMetrics> {
    if marginals.len() != scenes.len() || actor_sets.len() != scenes.len() {
        return Err(Error::contract(format!(
            "{} scenes, {} marginal sets, {} trajectory-set lists",
            scenes.len(),
            marginals.len(),
            actor_sets.len()
        )));
    }
    let hz = horizons(scenes)?;
    let nh = hz.len();
    let tallies = (0..scenes.len())
        .into_par_iter()
        .map(|s| {
            let (scene, m, sets) = (&scenes[s], &marginals[s], &actor_sets[s]);
            if m.num_actors != scene.actors.len()
                || sets.len() != scene.actors.len()
                || sets.iter().any(|set| set.len() != m.num_samples)
            {
                return Err(Error::contract(format!("scene {}: inputs do not line up", scene.id)));
            }
            let ml: Vec<&Trajectory> = (0..scene.actors.len()).map(|i| &sets[i][m.argmax(i)]).collect();
            let mut t = PredictionTally {
                actors: scene.actors.len(),
                l2: vec![0.0; nh],
                collided: vec![0.0; nh],
                msd: 0.0,
            };
            for (i, actor) in scene.actors.iter().enumerate() {
                let gt = &actor.gt_future;
                for (h, (p, q)) in ml[i].positions().zip(gt.positions()).skip(1).enumerate() {
                    t.l2[h] += p.distance(q);
                }
                let mut first: Option<f64> = None;
                for (j, other) in scene.actors.iter().enumerate() {
                    if j == i {
                        continue;
                    }
                    let against = match pairing {
                        CollisionPairing::MostLikely => ml[j],
                        CollisionPairing::GroundTruth => &other.gt_future,
                    };
                    if let Some(tc) = first_collision_time(ml[i], &actor.footprint, against, &other.footprint)? {
                        first = Some(first.map_or(tc, |f: f64| f.min(tc)));
                    }
                }
                if let Some(tc) = first {
                    for c in &mut t.collided[bucket(&hz, tc).min(nh)..] {
                        *c += 1.0;
                    }
                }
                let top = m.ranked(i).into_iter().take(MIN_MSD_TOP);
                t.msd += top
                    .map(|k| mean_sq_displacement(&sets[i][k], gt))
                    .fold(f64::INFINITY, f64::min);
            }
            Ok(t)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = PredictionTally {
        l2: vec![0.0; nh],
        collided: vec![0.0; nh],
        ..Default::default()
    };
    for t in tallies {
        total.actors += t.actors;
        total.msd += t.msd;
        for h in 0..nh {
            total.l2[h] += t.l2[h];
            total.collided[h] += t.collided[h];
        }
    }
    let denom = total.actors.max(1) as f64;
    Ok(PredictionMetrics {
        scenes: scenes.len(),
        actors: total.actors,
        horizons: hz,
        l2: total.l2.iter().map(|x| x / denom).collect(),
        collision_rate_permille: total.collided.iter().map(|x| 1000.0 * x / denom).collect(),
        min_msd: total.msd / denom,
        min_msd_all_samples: marginals
            .iter()
            .any(|m| m.num_actors > 0 && m.num_samples < MIN_MSD_TOP),
        pairing,
    })
}

/// Per-scene planning outcome, exposed for recounts.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanOutcome {
    pub first_collision: Option<f64>,
    pub lane_violation: bool,
    pub l2_to_expert: Vec<f64>,
}

pub fn plan_outcome(scene: &Scene, plan: &Trajectory) -> Result<PlanOutcome> {
    plan.validate(&scene.grid)?;
    let mut first: Option<f64> = None;
    for a in &scene.actors {
        if let Some(t) = first_collision_time(plan, &scene.ego.footprint, &a.gt_future, &a.footprint)? {
            first = Some(first.map_or(t, |f: f64| f.min(t)));
        }
    }
    Ok(PlanOutcome {
        first_collision: first,
        lane_violation: lane_violation(plan, &scene.ego.footprint, &scene.route_lanes())?,
        l2_to_expert: plan
            .positions()
            .zip(scene.expert.positions())
            .skip(1)
            .map(|(p, q)| p.distance(q))
            .collect(),
    })
}

pub fn eval_planning(scenes: &[Scene], plans: &[Trajectory]) -> Result<PlanningMetrics> {
    if plans.len() != scenes.len() {
        return Err(Error::contract(format!(
            "{} plans for {} scenes",
            plans.len(),
            scenes.len()
        )));
    }
    let hz = horizons(scenes)?;
    let nh = hz.len();
    let outcomes = scenes
        .par_iter()
        .zip(plans)
        .map(|(s, p)| plan_outcome(s, p))
        .collect::<Result<Vec<_>>>()?;
    let mut collided = vec![0.0; nh];
    let mut l2 = vec![0.0; nh];
    let mut violations = 0.0;
    for o in &outcomes {
        if let Some(t) = o.first_collision {
            for c in &mut collided[bucket(&hz, t).min(nh)..] {
                *c += 1.0;
            }
        }
        if o.lane_violation {
            violations += 1.0;
        }
        for (acc, d) in l2.iter_mut().zip(&o.l2_to_expert) {
            *acc += d;
        }
    }
    let n = scenes.len().max(1) as f64;
    Ok(PlanningMetrics {
        scenes: scenes.len(),
        horizons: hz,
        collision_rate_pct: collided.iter().map(|c| 100.0 * c / n).collect(),
        lane_violation_pct: 100.0 * violations / n,
        l2_to_expert: l2.iter().map(|x| x / n).collect(),
    })
}

/// One row per horizon.
pub fn write_prediction_csv(m: &PredictionMetrics, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["t", "l2_m", "collision_rate_permille", "min_msd_m2"])?;
    for h in 0..m.horizons.len() {
        w.write_record([
            m.horizons[h].to_string(),
            m.l2[h].to_string(),
            m.collision_rate_permille[h].to_string(),
            m.min_msd.to_string(),
        ])?;
    }
    finish_csv(w, path)
}

/// One row per horizon.
pub fn write_planning_csv(m: &PlanningMetrics, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["t", "collision_rate_pct", "lane_violation_pct", "l2_to_expert_m"])?;
    for h in 0..m.horizons.len() {
        w.write_record([
            m.horizons[h].to_string(),
            m.collision_rate_pct[h].to_string(),
            m.lane_violation_pct.to_string(),
            m.l2_to_expert[h].to_string(),
        ])?;
    }
    finish_csv(w, path)
}

pub(crate) fn finish_csv(w: csv::Writer<Vec<u8>>, path: &Path) -> Result<()> {
    let bytes = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    crate::io::write_atomic(path, &bytes)
}
