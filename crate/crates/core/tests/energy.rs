mod common;

use common::{corridor_scene, grid, state};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use structdrive::energy::{
    build_collision_edges, compute_features, joint_energy, mean_abs_curvature, CollisionEdges, CollisionMatrix, Edge,
    FeatureTable, UnaryTable, NUM_FEATURES,
};
use structdrive::geometry::{trajectories_collide, wrap_angle, Footprint};
use structdrive::pipeline::{sample_sets, PipelineConfig};
use structdrive::sampler::{arc_rollout, sample_trajectories, straight_rollout, SamplerConfig};
use structdrive::scenario::{generate, ScenarioTemplate, TemplateKind};

#[test]
fn centerline_constant_velocity_has_zero_lane_and_cv_features() {
    let s = state(30.0, 0.0, 0.0, 9.0);
    let gt = straight_rollout(&s, 0.0, &grid());
    let scene = corridor_scene(vec![(s, gt.clone())]);
    let f = compute_features(&scene, 0, &gt).unwrap();
    assert_eq!(f.lateral_offset, 0.0);
    assert_eq!(f.heading_misalignment, 0.0);
    assert!(f.cv_deviation < 1e-12);
    assert_eq!(f.curvature, 0.0);
    assert!((f.progress - 27.0).abs() < 1e-9);
    assert!(!f.off_lane);
}

#[test]
fn arc_curvature_matches_finite_differences() {
    let t = arc_rollout(&state(0.0, 0.0, 0.3, 6.0), 10.0, 0.0, &grid(), 6.0).unwrap();
    // Heading change over travelled chord, step by step.
    let w = &t.waypoints;
    let fd: f64 = w
        .windows(2)
        .map(|p| wrap_angle(p[1].heading - p[0].heading).abs() / p[0].position().distance(p[1].position()))
        .sum::<f64>()
        / (w.len() - 1) as f64;
    assert!((fd - 0.1).abs() < 1e-3, "finite differences give {fd}");
    assert!((mean_abs_curvature(&t) - 0.1).abs() < 1e-9);
    let straight = straight_rollout(&state(0.0, 0.0, 0.3, 6.0), 1.0, &grid());
    assert!(mean_abs_curvature(&straight) < 1e-12);
}

fn small_table(seed: u64) -> (FeatureTable, structdrive::scenario::Scene) {
    let scenes = generate(&ScenarioTemplate::new(TemplateKind::CutIn), 1, seed).unwrap();
    let scene = scenes.into_iter().next().unwrap();
    let sets = sample_sets(&scene, &SamplerConfig::default().with_samples(3)).unwrap();
    (FeatureTable::build(&scene, &sets.actors).unwrap(), scene)
}

#[test]
fn unary_tables_from_weights() {
    let (table, _) = small_table(4);
    let zero = table.unary(&[0.0; NUM_FEATURES]);
    assert!(zero.data.iter().all(|&v| v == 0.0));
    for f in 0..NUM_FEATURES {
        let mut w = [0.0; NUM_FEATURES];
        w[f] = 1.0;
        let u = table.unary(&w);
        for i in 0..table.num_actors {
            for k in 0..table.num_samples {
                assert_eq!(u.get(i, k), table.get(i, k)[f]);
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let w: [f64; NUM_FEATURES] = std::array::from_fn(|_| rng.random_range(-2.0..2.0));
    let u = table.unary(&w);
    for i in 0..2 {
        for k in 0..3 {
            let f = table.get(i, k);
            let mut dot = 0.0;
            for d in 0..NUM_FEATURES {
                dot += w[d] * f[d];
            }
            assert!((u.get(i, k) - dot).abs() < 1e-12);
        }
    }
}

#[test]
fn distant_actors_are_not_paired() {
    let a = state(0.0, 0.0, 0.0, 15.0);
    let b = state(500.0, 0.0, std::f64::consts::PI, 15.0);
    let cfg = SamplerConfig::default().with_samples(50);
    let sa = sample_trajectories(&a, &cfg, &grid()).unwrap();
    let sb = sample_trajectories(&b, &cfg.with_stream(1), &grid()).unwrap();
    let car = Footprint::car();
    let edges = build_collision_edges(&[sa.clone(), sb.clone()], &[car, car], 0.0).unwrap();
    assert!(edges.is_empty());
    for x in &sa {
        for y in &sb {
            assert!(!trajectories_collide(x, &car, y, &car).unwrap());
        }
    }
}

#[test]
fn head_on_matrix_equals_direct_predicates() {
    let a = state(0.0, 0.0, 0.0, 8.0);
    let b = state(40.0, 0.5, std::f64::consts::PI, 8.0);
    let g = grid();
    let sa: Vec<_> = [-4.0, 0.0, 2.0, 3.0]
        .iter()
        .map(|&acc| straight_rollout(&a, acc, &g))
        .collect();
    let sb: Vec<_> = [-4.0, -1.0, 0.0, 3.0]
        .iter()
        .map(|&acc| straight_rollout(&b, acc, &g))
        .collect();
    let car = Footprint::car();
    let edges = build_collision_edges(&[sa.clone(), sb.clone()], &[car, car], 0.0).unwrap();
    let m = edges.matrix(0, 1).expect("head-on pair interacts");
    let mut any = false;
    for (k, x) in sa.iter().enumerate() {
        for (l, y) in sb.iter().enumerate() {
            let direct = trajectories_collide(x, &car, y, &car).unwrap();
            any |= direct;
            assert_eq!(m.get(k, l), direct, "({k}, {l})");
            assert_eq!(edges.collide(1, l, 0, k), direct);
        }
    }
    assert!(any);
    assert_eq!(edges.matrix(1, 0).unwrap(), m.transpose());
}

#[test]
fn self_pairs_are_rejected() {
    let m = CollisionMatrix::from_fn(2, 2, |_, _| true);
    assert!(CollisionEdges::new(2, 2, vec![Edge { i: 1, j: 1, matrix: m }]).is_err());
}

#[test]
fn pruning_is_sound_on_generated_scenes() {
    let t = ScenarioTemplate::new(TemplateKind::LaneFollow).with_actor_count(8, 12);
    for scene in generate(&t, 3, 21).unwrap() {
        let sets = sample_sets(&scene, &SamplerConfig::default().with_samples(20)).unwrap();
        let fps = scene.actor_footprints();
        let edges = build_collision_edges(&sets.actors, &fps, 0.0).unwrap();
        let n = scene.actors.len();
        for i in 0..n {
            for j in i + 1..n {
                let m = edges.matrix(i, j);
                for k in 0..20 {
                    for l in 0..20 {
                        let direct =
                            trajectories_collide(&sets.actors[i][k], &fps[i], &sets.actors[j][l], &fps[j]).unwrap();
                        let stored = m.as_ref().is_some_and(|m| m.get(k, l));
                        assert_eq!(stored, direct, "scene {} pair ({i}, {j}) samples ({k}, {l})", scene.id);
                    }
                }
                if let Some(m) = &m {
                    assert_eq!(edges.matrix(j, i).unwrap(), m.transpose());
                }
            }
        }
    }
}

#[test]
fn pair_of_colliding_samples_costs_two_gamma() {
    let u = UnaryTable::from_rows(vec![vec![0.0], vec![0.0]]).unwrap();
    let e = CollisionEdges::new(
        2,
        1,
        vec![Edge {
            i: 0,
            j: 1,
            matrix: CollisionMatrix::from_fn(1, 1, |_, _| true),
        }],
    )
    .unwrap();
    assert_eq!(joint_energy(&[0, 0], &u, &e, 1.0).unwrap(), 2.0);
    assert_eq!(joint_energy(&[0, 0], &u, &e, 0.0).unwrap(), 0.0);
}

#[test]
fn joint_energy_matches_recomputation_from_trajectories() {
    let scene = generate(&ScenarioTemplate::new(TemplateKind::IntersectionCross), 1, 8)
        .unwrap()
        .remove(0);
    let sets = sample_sets(&scene, &SamplerConfig::default().with_samples(30)).unwrap();
    let fps = scene.actor_footprints();
    let table = FeatureTable::build(&scene, &sets.actors).unwrap();
    let w = [0.3, 1.1, 0.4, 2.0, 0.2, -0.1];
    let u = table.unary(&w);
    let edges = build_collision_edges(&sets.actors, &fps, 0.0).unwrap();
    let gamma = 1.7;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = scene.actors.len();
    for _ in 0..50 {
        let cfg: Vec<usize> = (0..n).map(|_| rng.random_range(0..30)).collect();
        let mut e = 0.0;
        for i in 0..n {
            let f = compute_features(&scene, i, &sets.actors[i][cfg[i]]).unwrap().values();
            e += f.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
            for j in 0..n {
                if j != i
                    && trajectories_collide(&sets.actors[i][cfg[i]], &fps[i], &sets.actors[j][cfg[j]], &fps[j]).unwrap()
                {
                    e += gamma;
                }
            }
        }
        let got = joint_energy(&cfg, &u, &edges, gamma).unwrap();
        assert!((got - e).abs() < 1e-9, "{got} vs {e}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn unary_table_is_linear_in_weights(
        a in proptest::array::uniform6(-3.0..3.0f64),
        b in proptest::array::uniform6(-3.0..3.0f64),
        seed in 0u64..20,
    ) {
        let (table, _) = small_table(seed);
        let sum: [f64; NUM_FEATURES] = std::array::from_fn(|d| a[d] + b[d]);
        let (ua, ub, us) = (table.unary(&a), table.unary(&b), table.unary(&sum));
        for ((x, y), z) in ua.data.iter().zip(&ub.data).zip(&us.data) {
            prop_assert!((x + y - z).abs() < 1e-9);
        }
    }
}

#[test]
fn default_pipeline_config_is_valid() {
    PipelineConfig::default().validate().unwrap();
}
