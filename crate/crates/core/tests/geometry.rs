mod common;

use common::{inside, obox, path, sampled_overlap, state};
use proptest::prelude::*;
use structdrive::geometry::{
    check_poses, lane_violation, oriented_box_overlap, trajectories_collide, Footprint, LaneGeometry, Vec2,
};
use structdrive::sampler::{straight_rollout, Trajectory, Waypoint};

fn fp(l: f64, w: f64) -> Footprint {
    Footprint::new(l, w).unwrap()
}

#[test]
fn shared_edge_agrees_with_point_sampling() {
    let sq = fp(2.0, 2.0);
    let a = (Vec2::new(0.0, 0.0), 0.0, sq);
    let b = (Vec2::new(2.0, 0.0), 0.0, sq);
    assert!(sampled_overlap(a, b, 1e-3));
    assert!(oriented_box_overlap(&obox(a.0, a.1, a.2), &obox(b.0, b.1, b.2)));
    let c = (Vec2::new(2.002, 0.0), 0.0, sq);
    assert!(!sampled_overlap(a, c, 1e-3));
    assert!(!oriented_box_overlap(&obox(a.0, a.1, a.2), &obox(c.0, c.1, c.2)));
}

/// Linear interpolation of a trajectory at time `t`.
fn pose_at(traj: &Trajectory, t: f64) -> (Vec2, f64) {
    let w = &traj.waypoints;
    let i = w.iter().rposition(|p| p.t <= t + 1e-12).unwrap().min(w.len() - 2);
    let f = ((t - w[i].t) / (w[i + 1].t - w[i].t)).clamp(0.0, 1.0);
    let p = w[i].position() + (w[i + 1].position() - w[i].position()) * f;
    (p, w[i].heading + f * (w[i + 1].heading - w[i].heading))
}

fn fine_collide(a: &Trajectory, b: &Trajectory, f: Footprint) -> bool {
    (0..=60).any(|s| {
        let t = 0.05 * s as f64;
        let (pa, ha) = pose_at(a, t);
        let (pb, hb) = pose_at(b, t);
        sampled_overlap((pa, ha, f), (pb, hb, f), 5e-3)
    })
}

#[test]
fn crossing_trajectories_collide_only_when_simultaneous() {
    let g = common::grid();
    let car = Footprint::car();
    let east = straight_rollout(&state(-20.0, 0.0, 0.0, 10.0), 0.0, &g);
    let north = straight_rollout(&state(0.0, -20.0, std::f64::consts::FRAC_PI_2, 10.0), 0.0, &g);
    assert!(fine_collide(&east, &north, car));
    assert!(trajectories_collide(&east, &car, &north, &car).unwrap());
    let late = straight_rollout(&state(0.0, -35.0, std::f64::consts::FRAC_PI_2, 10.0), 0.0, &g);
    assert!(!fine_collide(&east, &late, car));
    assert!(!trajectories_collide(&east, &car, &late, &car).unwrap());
}

#[test]
fn parallel_trajectories_ten_meters_apart() {
    let g = common::grid();
    let b = fp(4.5, 2.0);
    let a = straight_rollout(&state(0.0, 0.0, 0.0, 10.0), 0.0, &g);
    let c = straight_rollout(&state(0.0, 10.0, 0.0, 10.0), 0.0, &g);
    assert!(!trajectories_collide(&a, &b, &c, &b).unwrap());
}

fn boundary_hit(traj: &Trajectory, f: &Footprint, lane: &LaneGeometry) -> bool {
    let pts: Vec<Vec2> = [lane.left_boundary(), lane.right_boundary()]
        .into_iter()
        .flat_map(|line| {
            line.windows(2).flat_map(|s| {
                let n = (s[0].distance(s[1]) / 1e-3).ceil() as usize;
                (0..=n).map(move |i| s[0] + (s[1] - s[0]) * (i as f64 / n as f64))
            })
        })
        .collect();
    check_poses(traj)
        .iter()
        .any(|p| pts.iter().any(|&q| inside(p.center, p.heading, f, q)))
}

#[test]
fn lane_violation_cases_and_lane_change_oracle() {
    let lane = LaneGeometry::straight(Vec2::new(-10.0, 0.0), Vec2::new(60.0, 0.0), 4.0).unwrap();
    let lanes = [lane.clone()];
    let f = fp(4.5, 1.8);
    let g = common::grid();
    let centered = straight_rollout(&state(0.0, 0.0, 0.0, 8.0), 0.0, &g);
    assert!(!lane_violation(&centered, &f, &lanes).unwrap());
    let offset = straight_rollout(&state(0.0, 2.0, 0.0, 8.0), 0.0, &g);
    assert!(lane_violation(&offset, &f, &lanes).unwrap());

    // Smooth lateral drifts of increasing size; the predicate must flip
    // exactly where the dense segment sampling first finds contact.
    let mut saw = [false, false];
    for step in 0..40 {
        let shift = 0.05 * step as f64;
        let traj = Trajectory {
            waypoints: g
                .times()
                .map(|t| {
                    let u = t / g.horizon_s;
                    let y = shift * (3.0 * u * u - 2.0 * u * u * u);
                    let dy = shift * (6.0 * u - 6.0 * u * u) / g.horizon_s;
                    Waypoint {
                        x: 8.0 * t,
                        y,
                        heading: dy.atan2(8.0),
                        t,
                    }
                })
                .collect(),
            mode: structdrive::sampler::TrajectoryMode::External,
        };
        let expect = boundary_hit(&traj, &f, &lane);
        saw[expect as usize] = true;
        assert_eq!(lane_violation(&traj, &f, &lanes).unwrap(), expect, "shift {shift}");
    }
    assert_eq!(saw, [true, true]);
}

#[test]
fn identical_trajectories_collide() {
    let t = path(&[
        (0.0, 0.0, 0.0),
        (1.0, 0.0, 0.0),
        (2.0, 0.0, 0.0),
        (3.0, 0.0, 0.0),
        (4.0, 0.0, 0.0),
        (5.0, 0.0, 0.0),
        (6.0, 0.0, 0.0),
    ]);
    let c = Footprint::car();
    assert!(trajectories_collide(&t, &c, &t, &c).unwrap());
}

fn arb_box() -> impl Strategy<Value = (Vec2, f64, Footprint)> {
    (-6.0..6.0f64, -6.0..6.0f64, -3.2..3.2f64, 0.5..6.0f64, 0.5..3.0f64)
        .prop_map(|(x, y, h, l, w)| (Vec2::new(x, y), h, fp(l, w)))
}

fn overlap(a: &(Vec2, f64, Footprint), b: &(Vec2, f64, Footprint)) -> bool {
    oriented_box_overlap(&obox(a.0, a.1, a.2), &obox(b.0, b.1, b.2))
}

fn moved(b: &(Vec2, f64, Footprint), rot: f64, shift: Vec2) -> (Vec2, f64, Footprint) {
    (b.0.rotate(rot) + shift, b.1 + rot, b.2)
}

fn arb_traj() -> impl Strategy<Value = Trajectory> {
    (-20.0..20.0f64, -20.0..20.0f64, -3.1..3.1f64, 0.0..15.0f64, -4.0..3.0f64)
        .prop_map(|(x, y, h, v, a)| straight_rollout(&state(x, y, h, v), a, &common::grid()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn overlap_is_symmetric(a in arb_box(), b in arb_box()) {
        prop_assert_eq!(overlap(&a, &b), overlap(&b, &a));
    }

    #[test]
    fn overlap_is_invariant_under_rigid_motion(
        a in arb_box(), b in arb_box(), rot in -3.2..3.2f64, dx in -100.0..100.0f64, dy in -100.0..100.0f64,
    ) {
        let shift = Vec2::new(dx, dy);
        prop_assert_eq!(overlap(&a, &b), overlap(&moved(&a, rot, shift), &moved(&b, rot, shift)));
    }

    #[test]
    fn inflating_never_removes_contact(a in arb_box(), b in arb_box(), m in 0.0..1.0f64) {
        if overlap(&a, &b) {
            let ia = (a.0, a.1, a.2.inflated(m).unwrap());
            let ib = (b.0, b.1, b.2.inflated(m).unwrap());
            prop_assert!(overlap(&ia, &ib));
        }
    }

    #[test]
    fn trajectory_predicate_is_symmetric_and_rigid(
        a in arb_traj(), b in arb_traj(), rot in -3.2..3.2f64, dx in -50.0..50.0f64,
    ) {
        let c = Footprint::car();
        let ab = trajectories_collide(&a, &c, &b, &c).unwrap();
        prop_assert_eq!(ab, trajectories_collide(&b, &c, &a, &c).unwrap());
        let tf = |t: &Trajectory| {
            let mut t = t.clone();
            for w in &mut t.waypoints {
                let p = w.position().rotate(rot) + Vec2::new(dx, 0.0);
                w.x = p.x;
                w.y = p.y;
                w.heading = structdrive::geometry::wrap_angle(w.heading + rot);
            }
            t
        };
        prop_assert_eq!(ab, trajectories_collide(&tf(&a), &c, &tf(&b), &c).unwrap());
    }
}
