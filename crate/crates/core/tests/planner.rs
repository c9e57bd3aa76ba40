mod common;

use std::sync::OnceLock;

use common::{corridor_scene, grid, state};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use structdrive::geometry::{trajectories_collide, Footprint};
use structdrive::inference::Marginals;
use structdrive::pipeline::{sample_sets, SampleSets};
use structdrive::planner::{
    ego_trajectory_set, expected_collision_cost, plan, plan_features, plan_in_context, CollisionMode, PlanContext,
    PlannerWeights, NUM_PLAN_FEATURES,
};
use structdrive::sampler::{straight_rollout, SamplerConfig, Trajectory};
use structdrive::scenario::{generate, ScenarioTemplate, Scene, TemplateKind};

fn random_marginals(rng: &mut impl Rng, n: usize, k: usize) -> Marginals {
    let rows = (0..n)
        .map(|_| {
            let w: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..1.0f64).powi(3)).collect();
            let z: f64 = w.iter().sum();
            w.into_iter().map(|v| v / z).collect()
        })
        .collect();
    Marginals::from_rows(rows).unwrap()
}

#[test]
fn ego_at_rest_keeps_the_stationary_plan() {
    let ego = state(3.0, -1.0, 0.4, 0.0);
    let set = ego_trajectory_set(&ego, &SamplerConfig::default(), &grid()).unwrap();
    assert!(set
        .iter()
        .any(|t| t.waypoints.iter().all(|w| w.x == 3.0 && w.y == -1.0)));
}

#[test]
fn ego_set_is_sized_and_deterministic() {
    let ego = state(0.0, 0.0, 0.0, 12.0);
    let cfg = SamplerConfig::default().with_samples(77);
    let a = ego_trajectory_set(&ego, &cfg, &grid()).unwrap();
    assert_eq!(a.len(), 77);
    assert_eq!(a, ego_trajectory_set(&ego, &cfg, &grid()).unwrap());
}

fn far(t: &Trajectory) -> Trajectory {
    common::moved(t, 0.0, 60.0)
}

#[test]
fn expected_cost_of_a_half_likely_collision() {
    let tau = straight_rollout(&state(0.0, 0.0, 0.0, 10.0), 0.0, &grid());
    let car = Footprint::car();
    let set = vec![far(&tau), tau.clone()];
    let m = Marginals::from_rows(vec![vec![0.5, 0.5]]).unwrap();
    let c = expected_collision_cost(&tau, &car, &m, std::slice::from_ref(&set), &[car], 1.0).unwrap();
    assert_eq!(c, 0.5);
    let none = expected_collision_cost(&tau, &car, &m, &[vec![far(&tau), far(&tau)]], &[car], 1.0).unwrap();
    assert_eq!(none, 0.0);
    let bad = Marginals::from_rows(vec![vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
    assert!(expected_collision_cost(&tau, &car, &bad, &[set], &[car], 1.0).is_err());
}

fn scenes(kind: TemplateKind, count: usize, seed: u64, k: usize) -> Vec<(Scene, SampleSets)> {
    generate(&ScenarioTemplate::new(kind), count, seed)
        .unwrap()
        .into_iter()
        .map(|s| {
            let sets = sample_sets(&s, &SamplerConfig::default().with_samples(k)).unwrap();
            (s, sets)
        })
        .collect()
}

#[test]
fn expected_cost_equals_direct_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let t = ScenarioTemplate::new(TemplateKind::CutIn).with_actor_count(3, 3);
    let scene = generate(&t, 1, 4).unwrap().remove(0);
    let sets = sample_sets(&scene, &SamplerConfig::default().with_samples(25)).unwrap();
    let fps = scene.actor_footprints();
    let m = random_marginals(&mut rng, 3, 25);
    let lambda = 3.5;
    let mut hits = 0;
    for tau in &sets.ego {
        let mut direct = 0.0;
        for (i, fp) in fps.iter().enumerate() {
            for k in 0..25 {
                if trajectories_collide(tau, &scene.ego.footprint, &sets.actors[i][k], fp).unwrap() {
                    direct += lambda * m.get(i, k);
                    hits += 1;
                }
            }
        }
        let got = expected_collision_cost(tau, &scene.ego.footprint, &m, &sets.actors, &fps, lambda).unwrap();
        assert!((got - direct).abs() < 1e-12);
    }
    assert!(hits > 0);
}

#[test]
fn huge_lambda_picks_the_only_safe_plan() {
    let ego = state(0.0, 0.0, 0.0, 10.0);
    let blocker = state(25.0, 0.0, 0.0, 0.0);
    let scene = corridor_scene(vec![(blocker, straight_rollout(&blocker, 0.0, &grid()))]);
    let candidates: Vec<_> = [0.0, 1.0, -1.0, -4.0]
        .iter()
        .map(|&a| straight_rollout(&ego, a, &grid()))
        .collect();
    let car = Footprint::car();
    let actor = vec![straight_rollout(&blocker, 0.0, &grid())];
    let safe: Vec<bool> = candidates
        .iter()
        .map(|c| !trajectories_collide(c, &car, &actor[0], &car).unwrap())
        .collect();
    assert_eq!(safe, [false, false, false, true]);
    let m = Marginals::from_rows(vec![vec![1.0]]).unwrap();
    let w = PlannerWeights {
        lambda: 1e9,
        ..Default::default()
    };
    assert_eq!(
        plan(&scene, &m, std::slice::from_ref(&actor), &w, candidates.clone())
            .unwrap()
            .chosen_index,
        3
    );
    let w0 = PlannerWeights { lambda: 0.0, ..w };
    assert_ne!(plan(&scene, &m, &[actor], &w0, candidates).unwrap().chosen_index, 3);
}

#[test]
fn zero_lambda_minimizes_the_single_feature() {
    let ego = state(0.0, 0.0, 0.0, 10.0);
    let scene = corridor_scene(vec![]);
    let accels = [2.0, -1.0, 0.5, 3.0];
    // None of these stop within the horizon, so the mean |accel| is |a|.
    let candidates: Vec<_> = accels.iter().map(|&a| straight_rollout(&ego, a, &grid())).collect();
    let mut w = PlannerWeights::zero();
    w.traj[3] = 1.0;
    let m = Marginals::from_rows(vec![]).unwrap();
    let r = plan(&scene, &m, &[], &w, candidates.clone()).unwrap();
    assert_eq!(r.chosen_index, 2);
    for (c, a) in r.costs.iter().zip(accels) {
        assert!((c.traj_cost - a.abs()).abs() < 1e-9);
    }
    assert!(plan(&scene, &m, &[], &w, vec![]).is_err());
}

#[test]
fn plans_match_per_sample_recomputation() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for (scene, sets) in scenes(TemplateKind::IntersectionCross, 4, 5, 30)
        .into_iter()
        .chain(scenes(TemplateKind::CutIn, 4, 6, 30))
    {
        let n = scene.actors.len();
        let fps = scene.actor_footprints();
        let route = scene.route_centerline().unwrap();
        let lanes = scene.route_lanes();
        let m = random_marginals(&mut rng, n, 30);
        let w = PlannerWeights {
            traj: std::array::from_fn(|_| rng.random_range(0.0..3.0)),
            lambda: rng.random_range(0.0..50.0),
        };
        let r = plan(&scene, &m, &sets.actors, &w, sets.ego.clone()).unwrap();
        let totals: Vec<f64> = sets
            .ego
            .iter()
            .map(|tau| {
                let f = plan_features(tau, &scene.ego.footprint, &route, &lanes).unwrap();
                let traj: f64 = (0..NUM_PLAN_FEATURES).map(|d| f[d] * w.traj[d]).sum();
                let mut coll = 0.0;
                for (i, fp) in fps.iter().enumerate().take(n) {
                    for k in 0..30 {
                        if trajectories_collide(tau, &scene.ego.footprint, &sets.actors[i][k], fp).unwrap() {
                            coll += m.get(i, k);
                        }
                    }
                }
                traj + w.lambda * coll
            })
            .collect();
        let best = (0..totals.len()).fold(0, |b, e| if totals[e] < totals[b] { e } else { b });
        assert_eq!(r.chosen_index, best, "scene {}", scene.id);
        assert_eq!(r.chosen, sets.ego[best]);
        for (c, t) in r.costs.iter().zip(&totals) {
            assert!((c.total - t).abs() < 1e-9);
            assert!((c.traj_cost + c.collision_cost - c.total).abs() < 1e-12);
        }
    }
}

#[test]
fn most_likely_mode_is_planning_on_a_point_mass() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for (scene, sets) in scenes(TemplateKind::CutIn, 3, 9, 20) {
        let ctx = PlanContext::build(&scene, sets.ego.clone(), &sets.actors).unwrap();
        let m = random_marginals(&mut rng, scene.actors.len(), 20);
        let mut rows = vec![vec![0.0; 20]; scene.actors.len()];
        for (i, row) in rows.iter_mut().enumerate() {
            row[m.argmax(i)] = 1.0;
        }
        let point = Marginals::from_rows(rows).unwrap();
        let w = PlannerWeights::default();
        let a = plan_in_context(&ctx, &m, &w, CollisionMode::MostLikely).unwrap();
        let b = plan_in_context(&ctx, &point, &w, CollisionMode::Marginals).unwrap();
        assert_eq!(a, b);
        let ignore = plan_in_context(&ctx, &m, &w, CollisionMode::Ignore).unwrap();
        assert!(ignore.costs.iter().all(|c| c.collision_cost == 0.0));
    }
}

#[test]
fn zeroing_colliding_mass_zeroes_the_expected_cost() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for (scene, sets) in scenes(TemplateKind::IntersectionCross, 3, 12, 25) {
        let fps = scene.actor_footprints();
        let n = scene.actors.len();
        let m = random_marginals(&mut rng, n, 25);
        for tau in sets.ego.iter().step_by(10) {
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|i| {
                    let row: Vec<f64> = (0..25)
                        .map(|k| {
                            let hit =
                                trajectories_collide(tau, &scene.ego.footprint, &sets.actors[i][k], &fps[i]).unwrap();
                            if hit {
                                0.0
                            } else {
                                m.get(i, k)
                            }
                        })
                        .collect();
                    let z: f64 = row.iter().sum();
                    if z > 0.0 {
                        row.into_iter().map(|v| v / z).collect()
                    } else {
                        row
                    }
                })
                .collect();
            let zeroed = Marginals {
                num_actors: n,
                num_samples: 25,
                probs: rows.concat(),
            };
            let c = expected_collision_cost(tau, &scene.ego.footprint, &zeroed, &sets.actors, &fps, 7.0).unwrap();
            assert_eq!(c, 0.0);
        }
    }
}

struct Fixture {
    ctxs: Vec<PlanContext>,
    marginals: Vec<Marginals>,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let mut ctxs = Vec::new();
        let mut marginals = Vec::new();
        for (scene, sets) in
            scenes(TemplateKind::CutIn, 3, 41, 40)
                .into_iter()
                .chain(scenes(TemplateKind::IntersectionCross, 3, 42, 40))
        {
            marginals.push(random_marginals(&mut rng, scene.actors.len(), 40));
            ctxs.push(PlanContext::build(&scene, sets.ego, &sets.actors).unwrap());
        }
        Fixture { ctxs, marginals }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn raising_lambda_never_adds_expected_collisions(
        which in 0usize..6,
        traj in proptest::array::uniform6(0.0..3.0f64),
        lo in 0.0..30.0f64,
        extra in 0.0..100.0f64,
    ) {
        let f = fixture();
        let (ctx, m) = (&f.ctxs[which], &f.marginals[which]);
        let chosen = |lambda: f64| {
            let w = PlannerWeights { traj, lambda };
            plan_in_context(ctx, m, &w, CollisionMode::Marginals).unwrap().chosen_index
        };
        let (a, b) = (chosen(lo), chosen(lo + extra));
        prop_assert!(ctx.expected_collisions(b, m) <= ctx.expected_collisions(a, m) + 1e-12);
    }
}
