//! Per-scene prediction and planning with consistent seeding, shared by the
//! command-line tools, training and evaluation.

use serde::{Deserialize, Serialize};

use crate::energy::{build_collision_edges, CollisionEdges, EnergyWeights, FeatureTable, UnaryTable};
use crate::error::Result;
use crate::inference::{run_bp, BpConfig, BpReport, Marginals};
use crate::planner::{plan_in_context, CollisionMode, PlanContext, PlanResult, PlannerWeights};
use crate::sampler::{sample_trajectories, SamplerConfig, TrajectorySet};
use crate::scenario::Scene;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub sampler: SamplerConfig,
    pub bp: BpConfig,
    /// m, extra separation beyond reach under which actor pairs interact.
    pub interaction_radius: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            sampler: SamplerConfig::default(),
            bp: BpConfig::default(),
            interaction_radius: 0.0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.sampler.validate()?;
        self.bp.validate()?;
        if !(self.interaction_radius >= 0.0 && self.interaction_radius.is_finite()) {
            return Err(crate::Error::config("interaction_radius must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Candidate futures for every actor and for the ego.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSets {
    pub actors: Vec<TrajectorySet>,
    pub ego: TrajectorySet,
}

/// Stream 0 of the scene seeds the ego; stream `i + 1` seeds actor `i`.
pub fn sample_sets(scene: &Scene, sampler: &SamplerConfig) -> Result<SampleSets> {
    let base = sampler.with_stream(scene.seed);
    let actors = scene
        .actors
        .iter()
        .enumerate()
        .map(|(i, a)| sample_trajectories(&a.state, &base.with_stream(i as u64 + 1), &scene.grid))
        .collect::<Result<Vec<_>>>()?;
    let ego = sample_trajectories(&scene.ego.state, &base.with_stream(0), &scene.grid)?;
    Ok(SampleSets { actors, ego })
}

/// Weight-independent tables for one scene.
#[derive(Debug, Clone)]
pub struct SceneTables {
    pub features: FeatureTable,
    pub edges: CollisionEdges,
}

impl SceneTables {
    pub fn build(scene: &Scene, sets: &SampleSets, interaction_radius: f64) -> Result<Self> {
        Ok(SceneTables {
            features: FeatureTable::build(scene, &sets.actors)?,
            edges: build_collision_edges(&sets.actors, &scene.actor_footprints(), interaction_radius)?,
        })
    }

    pub fn unary(&self, weights: &EnergyWeights) -> UnaryTable {
        self.features.unary(&weights.unary)
    }
}

pub fn predict(tables: &SceneTables, weights: &EnergyWeights, bp: &BpConfig) -> Result<(Marginals, BpReport)> {
    weights.validate()?;
    run_bp(&tables.unary(weights), &tables.edges, weights.gamma, bp)
}

pub fn plan_scene(
    scene: &Scene,
    sets: &SampleSets,
    marginals: &Marginals,
    weights: &PlannerWeights,
    mode: CollisionMode,
) -> Result<PlanResult> {
    let ctx = PlanContext::build(scene, sets.ego.clone(), &sets.actors)?;
    plan_in_context(&ctx, marginals, weights, mode)
}
