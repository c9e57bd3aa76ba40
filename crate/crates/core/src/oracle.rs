//! Random small instances and brute-force cross-checks of the inference,
//! planning and learning code.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::energy::{CollisionEdges, CollisionMatrix, Edge, FeatureTable, UnaryTable, NUM_FEATURES};
use crate::error::Result;
use crate::geometry::trajectories_collide;
use crate::inference::{exact_marginals, run_bp, softmax_neg, BpConfig, DEFAULT_ENUMERATION_BUDGET};
use crate::learning::{gradient_check, Example, Objective, GRADIENT_CHECK_FLOOR, GRADIENT_CHECK_STEP, NUM_PARAMS};
use crate::pipeline::{predict, sample_sets, PipelineConfig, SceneTables};
use crate::planner::{plan_in_context, CollisionMode, PlanContext, NUM_PLAN_FEATURES};
use crate::scenario::{generate, ScenarioTemplate, TemplateKind};
use crate::weights::ModelWeights;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Topology {
    /// Random spanning forest.
    Tree,
    /// Connected graph with at least one cycle (needs three or more actors).
    Cyclic,
}

fn random_matrix(rng: &mut impl Rng, k: usize, density: f64) -> CollisionMatrix {
    loop {
        let m = CollisionMatrix::from_fn(k, k, |_, _| rng.random_bool(density));
        if !m.is_empty() {
            return m;
        }
    }
}

/// Random unaries in `[0, 2]` and random collision patterns on the chosen
/// topology.
pub fn random_instance(rng: &mut impl Rng, n: usize, k: usize, topology: Topology) -> (UnaryTable, CollisionEdges) {
    let rows = (0..n)
        .map(|_| (0..k).map(|_| rng.random_range(0.0..2.0)).collect())
        .collect();
    let unary = UnaryTable::from_rows(rows).expect("well-formed rows");
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    match topology {
        Topology::Tree => {
            for j in 1..n {
                if rng.random_bool(0.85) {
                    pairs.push((rng.random_range(0..j), j));
                }
            }
        }
        Topology::Cyclic => {
            assert!(n >= 3, "a cycle needs three actors");
            for j in 1..n {
                pairs.push((j - 1, j));
            }
            pairs.push((0, n - 1));
            for i in 0..n {
                for j in i + 2..n {
                    if (i, j) != (0, n - 1) && rng.random_bool(0.5) {
                        pairs.push((i, j));
                    }
                }
            }
        }
    }
    let edges = pairs
        .into_iter()
        .map(|(i, j)| {
            let density = rng.random_range(0.15..0.6);
            Edge {
                i,
                j,
                matrix: random_matrix(rng, k, density),
            }
        })
        .collect();
    (unary, CollisionEdges::new(n, k, edges).expect("valid edges"))
}

/// Random training example with `n` actors, `k` samples each and `k` ego
/// candidates; any pair of actors may interact.
pub fn random_example(rng: &mut impl Rng, n: usize, k: usize) -> Example {
    let values = (0..n * k)
        .map(|_| std::array::from_fn(|_| rng.random_range(0.0..2.0)))
        .collect();
    let features = FeatureTable {
        num_actors: n,
        num_samples: k,
        values,
        off_lane: vec![false; n],
    };
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(0.7) {
                edges.push(Edge {
                    i,
                    j,
                    matrix: random_matrix(rng, k, 0.4),
                });
            }
        }
    }
    let plan_features: Vec<[f64; NUM_PLAN_FEATURES]> = (0..k)
        .map(|_| std::array::from_fn(|_| rng.random_range(0.0..2.0)))
        .collect();
    Example {
        features,
        edges: CollisionEdges::new(n, k, edges).expect("valid edges"),
        targets: (0..n).map(|_| rng.random_range(0..k)).collect(),
        plan_collisions: (0..n)
            .map(|_| CollisionMatrix::from_fn(k, k, |_, _| rng.random_bool(0.3)))
            .collect(),
        expert_features: std::array::from_fn(|_| rng.random_range(0.0..2.0)),
        expert_collisions: (0..n)
            .map(|_| (0..k as u32).filter(|_| rng.random_bool(0.3)).collect())
            .collect(),
        margins: (0..k).map(|_| rng.random_range(0.0..3.0)).collect(),
        plan_features,
    }
}

/// Random parameters and objective for gradient checks, with every gradient
/// path (prediction, planning through marginals, gamma) active.
pub fn random_objective(rng: &mut impl Rng, bp_iterations: usize) -> ([f64; NUM_PARAMS], Objective) {
    let mut p: [f64; NUM_PARAMS] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
    p[NUM_FEATURES] = rng.random_range(0.2..3.0);
    let obj = Objective {
        alpha: rng.random_range(0.5..2.0),
        lambda: rng.random_range(0.5..3.0),
        bp_iterations,
        planning_through_marginals: true,
    };
    (p, obj)
}

pub fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub checks: Vec<CheckResult>,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Small-instance cross-checks: BP against enumeration on trees, the
/// factorized case, planner choices against per-sample recomputation, and
/// analytic against numeric gradients.
pub fn run_oracle_suite(seed: u64, instances: usize) -> Result<OracleReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = Vec::new();
    let bp = BpConfig {
        iterations: 50,
        tolerance: 1e-12,
        damping: 0.0,
    };

    let mut worst = 0.0f64;
    for _ in 0..instances {
        let n = rng.random_range(1..=5);
        let k = rng.random_range(2..=6);
        let gamma = rng.random_range(0.0..10.0);
        let (u, e) = random_instance(&mut rng, n, k, Topology::Tree);
        let (m, _) = run_bp(&u, &e, gamma, &bp)?;
        let x = exact_marginals(&u, &e, gamma, DEFAULT_ENUMERATION_BUDGET)?;
        worst = worst.max(linf(&m.probs, &x.probs));
    }
    checks.push(CheckResult {
        name: "bp_tree_exact".into(),
        passed: worst <= 1e-6,
        detail: format!("max L-inf error {worst:.3e} over {instances} trees"),
    });

    let mut worst = 0.0f64;
    for _ in 0..instances {
        let n = rng.random_range(3..=4);
        let k = rng.random_range(2..=6);
        let (u, e) = random_instance(&mut rng, n, k, Topology::Cyclic);
        let (m, _) = run_bp(&u, &e, 0.0, &BpConfig::default())?;
        for i in 0..n {
            worst = worst.max(linf(m.row(i), &softmax_neg(u.row(i))));
        }
    }
    checks.push(CheckResult {
        name: "bp_factorized".into(),
        passed: worst <= 1e-9,
        detail: format!("max L-inf error {worst:.3e} at gamma = 0"),
    });

    let template = ScenarioTemplate::new(TemplateKind::IntersectionCross);
    let scenes = generate(&template, instances.clamp(1, 10), seed)?;
    let pipeline = PipelineConfig {
        sampler: PipelineConfig::default().sampler.with_samples(12),
        ..Default::default()
    };
    let weights = ModelWeights::default();
    let mut mismatches = 0;
    for scene in &scenes {
        let sets = sample_sets(scene, &pipeline.sampler)?;
        let tables = SceneTables::build(scene, &sets, pipeline.interaction_radius)?;
        let (m, _) = predict(&tables, &weights.energy, &pipeline.bp)?;
        let ctx = PlanContext::build(scene, sets.ego.clone(), &sets.actors)?;
        let result = plan_in_context(&ctx, &m, &weights.planner, CollisionMode::Marginals)?;
        let mut best = (f64::INFINITY, 0);
        for (e, cand) in sets.ego.iter().enumerate() {
            let mut expected = 0.0;
            for (i, actor) in scene.actors.iter().enumerate() {
                for (s, sample) in sets.actors[i].iter().enumerate() {
                    if trajectories_collide(cand, &scene.ego.footprint, sample, &actor.footprint)? {
                        expected += m.get(i, s);
                    }
                }
            }
            let total = weights.planner.traj_cost(&ctx.features[e]) + weights.planner.lambda * expected;
            if total < best.0 {
                best = (total, e);
            }
        }
        if best.1 != result.chosen_index {
            mismatches += 1;
        }
    }
    checks.push(CheckResult {
        name: "plan_recomputation".into(),
        passed: mismatches == 0,
        detail: format!("{mismatches} of {} scenes disagree", scenes.len()),
    });

    let mut worst = 0.0f64;
    for _ in 0..instances.min(20) {
        let n = rng.random_range(1..=3);
        let k = rng.random_range(2..=5);
        let ex = random_example(&mut rng, n, k);
        let (p, obj) = random_objective(&mut rng, 2);
        worst = worst.max(gradient_check(
            &ex,
            &p,
            &obj,
            GRADIENT_CHECK_STEP,
            GRADIENT_CHECK_FLOOR,
        )?);
    }
    checks.push(CheckResult {
        name: "gradient".into(),
        passed: worst <= 1e-4,
        detail: format!("max relative error {worst:.3e}"),
    });
    Ok(OracleReport { checks })
}
