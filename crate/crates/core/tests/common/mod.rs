//! Builders and independent oracles shared by the integration tests.

#![allow(dead_code)]

use structdrive::energy::{CollisionEdges, UnaryTable};
use structdrive::geometry::{Footprint, LaneGeometry, OrientedBox, Vec2};
use structdrive::sampler::{straight_rollout, KinematicState, TimeGrid, Trajectory, TrajectoryMode, Waypoint};
use structdrive::scenario::{Actor, Ego, Lane, Scene, TemplateKind};

pub fn grid() -> TimeGrid {
    TimeGrid::default()
}

pub fn state(x: f64, y: f64, heading: f64, speed: f64) -> KinematicState {
    KinematicState::new(Vec2::new(x, y), heading, speed).unwrap()
}

/// Trajectory through explicit `(x, y, heading)` waypoints on the default grid.
pub fn path(points: &[(f64, f64, f64)]) -> Trajectory {
    let g = grid();
    assert_eq!(points.len(), g.num_waypoints);
    Trajectory {
        waypoints: points
            .iter()
            .zip(g.times())
            .map(|(&(x, y, heading), t)| Waypoint { x, y, heading, t })
            .collect(),
        mode: TrajectoryMode::External,
    }
}

pub fn moved(traj: &Trajectory, dx: f64, dy: f64) -> Trajectory {
    let mut t = traj.clone();
    for w in &mut t.waypoints {
        w.x += dx;
        w.y += dy;
    }
    t
}

/// One eastbound lane along y = 0 from x = -100 to 400, the ego at the
/// origin driving 10 m/s, and the given actors with their futures.
pub fn corridor_scene(actors: Vec<(KinematicState, Trajectory)>) -> Scene {
    corridor_scene_with_width(actors, 3.7)
}

pub fn corridor_scene_with_width(actors: Vec<(KinematicState, Trajectory)>, width: f64) -> Scene {
    let lane = LaneGeometry::straight(Vec2::new(-100.0, 0.0), Vec2::new(400.0, 0.0), width).unwrap();
    let ego = state(0.0, 0.0, 0.0, 10.0);
    Scene {
        id: "corridor".into(),
        seed: 11,
        template: TemplateKind::LaneFollow,
        grid: grid(),
        lanes: vec![Lane { id: 0, geometry: lane }],
        actors: actors
            .into_iter()
            .enumerate()
            .map(|(i, (s, gt))| Actor {
                id: i as u32,
                state: s,
                footprint: Footprint::car(),
                gt_future: gt,
            })
            .collect(),
        ego: Ego {
            state: ego,
            footprint: Footprint::car(),
        },
        route: vec![0],
        expert: straight_rollout(&ego, 0.0, &grid()),
    }
}

/// Point containment written directly from the box definition.
pub fn inside(center: Vec2, heading: f64, fp: &Footprint, p: Vec2) -> bool {
    let d = Vec2::new(p.x - center.x, p.y - center.y);
    let (s, c) = heading.sin_cos();
    let along = d.x * c + d.y * s;
    let across = -d.x * s + d.y * c;
    along.abs() <= 0.5 * fp.length && across.abs() <= 0.5 * fp.width
}

/// Corners and boundary points every `step` meters.
pub fn boundary_points(center: Vec2, heading: f64, fp: &Footprint, step: f64) -> Vec<Vec2> {
    let (s, c) = heading.sin_cos();
    let (hl, hw) = (0.5 * fp.length, 0.5 * fp.width);
    let local = [(hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw)];
    let world = |(x, y): (f64, f64)| Vec2::new(center.x + x * c - y * s, center.y + x * s + y * c);
    let mut out = Vec::new();
    for e in 0..4 {
        let a = local[e];
        let b = local[(e + 1) % 4];
        let len = ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt();
        let n = (len / step).ceil() as usize;
        for i in 0..n {
            let f = i as f64 / n as f64;
            out.push(world((a.0 + f * (b.0 - a.0), a.1 + f * (b.1 - a.1))));
        }
    }
    out
}

/// Dense sampling oracle for the overlap of two closed rectangles: some
/// boundary sample of either box lies in the other.
pub fn sampled_overlap(a: (Vec2, f64, Footprint), b: (Vec2, f64, Footprint), step: f64) -> bool {
    let reach = a.2.half_diagonal() + b.2.half_diagonal();
    if a.0.distance(b.0) > reach + 1e-9 {
        return false;
    }
    boundary_points(a.0, a.1, &a.2, step)
        .into_iter()
        .any(|p| inside(b.0, b.1, &b.2, p))
        || boundary_points(b.0, b.1, &b.2, step)
            .into_iter()
            .any(|p| inside(a.0, a.1, &a.2, p))
}

pub fn obox(center: Vec2, heading: f64, fp: Footprint) -> OrientedBox {
    OrientedBox::new(center, heading, fp)
}

/// Brute-force marginals: walks every joint configuration with an odometer
/// and weights it by `exp(-E)`, computed with plain products rather than
/// the library's log-domain code.
pub fn brute_marginals(unary: &UnaryTable, edges: &CollisionEdges, gamma: f64) -> Vec<Vec<f64>> {
    let n = unary.num_actors;
    let k = unary.num_samples;
    let mut acc = vec![vec![0.0; k]; n];
    let mut cfg = vec![0usize; n];
    let shift: f64 = (0..n)
        .map(|i| unary.row(i).iter().copied().fold(f64::INFINITY, f64::min))
        .sum();
    loop {
        let mut e = -shift;
        for (i, &ki) in cfg.iter().enumerate() {
            e += unary.get(i, ki);
        }
        for edge in edges.edges() {
            if edge.matrix.get(cfg[edge.i], cfg[edge.j]) {
                e += 2.0 * gamma;
            }
        }
        let w = (-e).exp();
        for (i, &ki) in cfg.iter().enumerate() {
            acc[i][ki] += w;
        }
        let mut pos = 0;
        loop {
            if pos == n {
                return acc
                    .into_iter()
                    .map(|row| {
                        let z: f64 = row.iter().sum();
                        row.into_iter().map(|v| v / z).collect()
                    })
                    .collect();
            }
            cfg[pos] += 1;
            if cfg[pos] < k {
                break;
            }
            cfg[pos] = 0;
            pos += 1;
        }
    }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
