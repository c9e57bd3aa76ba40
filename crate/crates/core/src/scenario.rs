//! Synthetic driving scenes: lane geometry, actors with ground-truth futures,
//! the ego vehicle with its route and an expert trajectory.
//!
//! Ground-truth futures and expert maneuvers are rollouts of the same
//! straight/arc/clothoid primitives the sampler uses, chosen by small
//! scripted policies per template. Every generated scene is checked so that
//! ground-truth futures never collide with each other and the expert never
//! collides with any ground-truth future.

use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{oriented_box_overlap, trajectories_collide, Footprint, LaneGeometry, OrientedBox, Vec2};
use crate::io;
use crate::sampler::{
    clothoid_rollout, straight_rollout, stream_seed, travelled_distance, ClothoidParams, KinematicState, TimeGrid,
    Trajectory,
};

pub const SCENARIO_FORMAT: &str = "structdrive.scenarios";
pub const SCENARIO_VERSION: u32 = 1;

pub const LANE_WIDTH: f64 = 3.7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lane {
    pub id: u32,
    #[serde(flatten)]
    pub geometry: LaneGeometry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Actor {
    pub id: u32,
    pub state: KinematicState,
    pub footprint: Footprint,
    pub gt_future: Trajectory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ego {
    pub state: KinematicState,
    pub footprint: Footprint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateKind {
    LaneFollow,
    IntersectionCross,
    CutIn,
    Merge,
    StationaryBlocker,
}

impl TemplateKind {
    pub const ALL: [TemplateKind; 5] = [
        TemplateKind::LaneFollow,
        TemplateKind::IntersectionCross,
        TemplateKind::CutIn,
        TemplateKind::Merge,
        TemplateKind::StationaryBlocker,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            TemplateKind::LaneFollow => "lane_follow",
            TemplateKind::IntersectionCross => "intersection_cross",
            TemplateKind::CutIn => "cut_in",
            TemplateKind::Merge => "merge",
            TemplateKind::StationaryBlocker => "stationary_blocker",
        }
    }
}

impl fmt::Display for TemplateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for TemplateKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        TemplateKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::config(format!("unknown template `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub id: String,
    pub seed: u64,
    pub template: TemplateKind,
    pub grid: TimeGrid,
    pub lanes: Vec<Lane>,
    pub actors: Vec<Actor>,
    pub ego: Ego,
    /// Lane ids the ego follows, in order.
    pub route: Vec<u32>,
    pub expert: Trajectory,
}

/// Lane an actor is attributed to for lane-relative features.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaneAssignment {
    pub lane_index: usize,
    /// False when the position lies outside every heading-aligned lane and
    /// the nearest lane was used instead.
    pub on_lane: bool,
}

impl Scene {
    pub fn lane(&self, id: u32) -> Option<&LaneGeometry> {
        self.lanes.iter().find(|l| l.id == id).map(|l| &l.geometry)
    }

    pub fn route_lanes(&self) -> Vec<LaneGeometry> {
        self.route.iter().filter_map(|id| self.lane(*id).cloned()).collect()
    }

    /// The route as one polyline (consecutive lanes joined end to start).
    pub fn route_centerline(&self) -> Result<LaneGeometry> {
        let lanes = self.route_lanes();
        let first = lanes
            .first()
            .ok_or_else(|| Error::contract(format!("scene {} has an empty route", self.id)))?;
        let mut pts: Vec<Vec2> = Vec::new();
        for lane in &lanes {
            for &p in lane.centerline() {
                if pts.last() != Some(&p) {
                    pts.push(p);
                }
            }
        }
        LaneGeometry::new(pts, first.width())
    }

    pub fn actor_footprints(&self) -> Vec<Footprint> {
        self.actors.iter().map(|a| a.footprint).collect()
    }

    /// Picks the closest heading-aligned lane containing `pos`, falling back
    /// to the closest lane of any kind.
    pub fn assign_lane(&self, pos: Vec2, heading: f64) -> Result<LaneAssignment> {
        if self.lanes.is_empty() {
            return Err(Error::contract(format!("scene {} has no lanes", self.id)));
        }
        let mut aligned: Option<(f64, usize)> = None;
        let mut nearest: Option<(f64, usize)> = None;
        for (i, lane) in self.lanes.iter().enumerate() {
            let g = &lane.geometry;
            let p = g.project(pos);
            let d = p.lateral.abs();
            let inside = d <= 0.5 * g.width() && p.station >= 0.0 && p.station <= g.length();
            if inside && (heading - p.heading).cos() > 0.0 && aligned.is_none_or(|(b, _)| d < b) {
                aligned = Some((d, i));
            }
            if nearest.is_none_or(|(b, _)| d < b) {
                nearest = Some((d, i));
            }
        }
        Ok(match (aligned, nearest) {
            (Some((_, i)), _) => LaneAssignment {
                lane_index: i,
                on_lane: true,
            },
            (None, Some((_, i))) => LaneAssignment {
                lane_index: i,
                on_lane: false,
            },
            (None, None) => unreachable!("lanes is non-empty"),
        })
    }

    /// Checks every scene invariant.
    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Error::InvalidScene {
            scene: self.id.clone(),
            reason,
        };
        if self.route.is_empty() {
            return Err(bad("route is empty".into()));
        }
        for id in &self.route {
            if self.lane(*id).is_none() {
                return Err(bad(format!("route references unknown lane {id}")));
            }
        }
        let mut lane_ids: Vec<u32> = self.lanes.iter().map(|l| l.id).collect();
        lane_ids.sort_unstable();
        if lane_ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(bad("duplicate lane ids".into()));
        }
        let mut actor_ids: Vec<u32> = self.actors.iter().map(|a| a.id).collect();
        actor_ids.sort_unstable();
        if actor_ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(bad("duplicate actor ids".into()));
        }
        self.expert
            .validate(&self.grid)
            .map_err(|e| bad(format!("expert: {e}")))?;
        let start = &self.expert.waypoints[0];
        if start.position() != self.ego.state.position || start.heading != self.ego.state.heading {
            return Err(bad("expert does not start at the ego state".into()));
        }
        let ego_box = OrientedBox::new(self.ego.state.position, self.ego.state.heading, self.ego.footprint);
        for a in &self.actors {
            a.gt_future
                .validate(&self.grid)
                .map_err(|e| bad(format!("actor {} future: {e}", a.id)))?;
            let w0 = &a.gt_future.waypoints[0];
            if w0.position() != a.state.position {
                return Err(bad(format!("actor {} future does not start at its state", a.id)));
            }
            let b = OrientedBox::new(a.state.position, a.state.heading, a.footprint);
            if oriented_box_overlap(&ego_box, &b) {
                return Err(bad(format!("ego initially collides with actor {}", a.id)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioTemplate {
    pub kind: TemplateKind,
    /// Inclusive range of actor counts.
    pub actor_count: [usize; 2],
    /// m/s, initial speeds of actors.
    pub speed_range: [f64; 2],
    /// m/s, initial speed of the ego.
    pub ego_speed_range: [f64; 2],
    /// m/s², lane-following ground truth accelerates uniformly in ±noise.
    pub accel_noise: f64,
    /// m, longitudinal offset of the template's key actor from the ego
    /// (cut-in distance, blocker distance) or minimum spacing (lane follow).
    pub gap_range: [f64; 2],
    pub lane_count: usize,
}

impl Default for ScenarioTemplate {
    fn default() -> Self {
        ScenarioTemplate::new(TemplateKind::LaneFollow)
    }
}

impl ScenarioTemplate {
    pub fn new(kind: TemplateKind) -> Self {
        let base = ScenarioTemplate {
            kind,
            actor_count: [1, 6],
            speed_range: [6.0, 14.0],
            ego_speed_range: [6.0, 14.0],
            accel_noise: 0.5,
            gap_range: [10.0, 40.0],
            lane_count: 3,
        };
        match kind {
            TemplateKind::LaneFollow => base,
            TemplateKind::IntersectionCross => ScenarioTemplate {
                actor_count: [2, 4],
                gap_range: [18.0, 32.0],
                lane_count: 4,
                ..base
            },
            TemplateKind::CutIn => ScenarioTemplate {
                actor_count: [2, 3],
                gap_range: [6.0, 16.0],
                lane_count: 2,
                ..base
            },
            TemplateKind::Merge => ScenarioTemplate {
                actor_count: [1, 3],
                gap_range: [30.0, 60.0],
                lane_count: 2,
                ..base
            },
            TemplateKind::StationaryBlocker => ScenarioTemplate {
                actor_count: [1, 4],
                gap_range: [22.0, 45.0],
                lane_count: 2,
                ..base
            },
        }
    }

    pub fn with_actor_count(mut self, lo: usize, hi: usize) -> Self {
        self.actor_count = [lo, hi];
        self
    }

    pub fn with_accel_noise(mut self, noise: f64) -> Self {
        self.accel_noise = noise;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.actor_count;
        if lo > hi {
            return Err(Error::config(format!("actor_count [{lo}, {hi}] is empty")));
        }
        let min_actors = match self.kind {
            TemplateKind::IntersectionCross => 2,
            TemplateKind::CutIn | TemplateKind::Merge | TemplateKind::StationaryBlocker => 1,
            TemplateKind::LaneFollow => 0,
        };
        if lo < min_actors {
            return Err(Error::config(format!(
                "{} scenes need at least {min_actors} actors",
                self.kind
            )));
        }
        for (name, r) in [
            ("speed_range", self.speed_range),
            ("ego_speed_range", self.ego_speed_range),
            ("gap_range", self.gap_range),
        ] {
            if !(r[0].is_finite() && r[1].is_finite()) || r[0] > r[1] || r[0] < 0.0 {
                return Err(Error::config(format!("{name} [{}, {}] is invalid", r[0], r[1])));
            }
        }
        if !(self.accel_noise >= 0.0) {
            return Err(Error::config("accel_noise must be non-negative"));
        }
        if self.kind == TemplateKind::LaneFollow && self.lane_count == 0 {
            return Err(Error::config("lane_follow needs at least one lane"));
        }
        Ok(())
    }
}

const MAX_SCENE_ATTEMPTS: usize = 200;
const MAX_PLACEMENT_ATTEMPTS: usize = 200;
/// Clearance kept between vehicles at t = 0 and around the expert maneuver.
const CLEARANCE: f64 = 0.5;

/// Generates `count` scenes. Scene `i` draws from its own seed stream, so the
/// output depends only on (`template`, `count`, `seed`).
pub fn generate(template: &ScenarioTemplate, count: usize, seed: u64) -> Result<Vec<Scene>> {
    if count == 0 {
        return Err(Error::config("scene count must be at least 1"));
    }
    template.validate()?;
    (0..count)
        .into_par_iter()
        .map(|i| generate_one(template, i, stream_seed(seed, i as u64)))
        .collect()
}

fn generate_one(template: &ScenarioTemplate, index: usize, seed: u64) -> Result<Scene> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_actors = rng.random_range(template.actor_count[0]..=template.actor_count[1]);
    let mut last_failure = String::new();
    for _ in 0..MAX_SCENE_ATTEMPTS {
        let mut b = Builder::new(template, &mut rng);
        let outcome = match template.kind {
            TemplateKind::LaneFollow => b.lane_follow(n_actors),
            TemplateKind::IntersectionCross => b.intersection(n_actors),
            TemplateKind::CutIn => b.cut_in(n_actors),
            TemplateKind::Merge => b.merge(n_actors),
            TemplateKind::StationaryBlocker => b.blocker(n_actors),
        }
        .and_then(|()| b.finish(index, seed));
        match outcome {
            Ok(scene) => {
                scene.validate()?;
                return Ok(scene);
            }
            Err(why) => last_failure = why,
        }
    }
    Err(Error::Generation(format!(
        "{} scene {index} with {n_actors} actors: {last_failure}",
        template.kind
    )))
}

type Attempt<T = ()> = std::result::Result<T, String>;

struct Builder<'a> {
    t: &'a ScenarioTemplate,
    rng: &'a mut ChaCha8Rng,
    grid: TimeGrid,
    lanes: Vec<Lane>,
    actors: Vec<Actor>,
    ego: Option<Ego>,
    route: Vec<u32>,
}

impl<'a> Builder<'a> {
    fn new(t: &'a ScenarioTemplate, rng: &'a mut ChaCha8Rng) -> Self {
        Builder {
            t,
            rng,
            grid: TimeGrid::default(),
            lanes: Vec::new(),
            actors: Vec::new(),
            ego: None,
            route: Vec::new(),
        }
    }

    fn uniform(&mut self, r: [f64; 2]) -> f64 {
        if r[0] == r[1] {
            r[0]
        } else {
            self.rng.random_range(r[0]..=r[1])
        }
    }

    fn footprint(&mut self) -> Footprint {
        let length = self.uniform([4.2, 5.0]);
        let width = self.uniform([1.8, 2.1]);
        Footprint { length, width }
    }

    fn noise_accel(&mut self) -> f64 {
        let n = self.t.accel_noise;
        self.uniform([-n, n])
    }

    fn add_lane(&mut self, pts: Vec<Vec2>) -> u32 {
        let id = self.lanes.len() as u32;
        let geometry = LaneGeometry::new(pts, LANE_WIDTH).expect("template lanes are well-formed");
        self.lanes.push(Lane { id, geometry });
        id
    }

    fn state_on_lane(&self, lane: u32, station: f64, lateral: f64, speed: f64) -> KinematicState {
        let g = &self.lanes[lane as usize].geometry;
        let (p, h) = g.point_at(station);
        let p = p + Vec2::from_angle(h).perp() * lateral;
        KinematicState::new(p, h, speed).expect("speeds are non-negative")
    }

    fn set_ego(&mut self, lane: u32, station: f64) {
        let v = self.uniform(self.t.ego_speed_range);
        let state = self.state_on_lane(lane, station, 0.0, v);
        self.ego = Some(Ego {
            state,
            footprint: Footprint::car(),
        });
        self.route = vec![lane];
    }

    fn box_of(state: &KinematicState, fp: &Footprint) -> OrientedBox {
        OrientedBox::new(state.position, state.heading, *fp)
    }

    /// Reason the candidate actor is unacceptable, if any.
    fn conflict(&self, state: &KinematicState, fp: &Footprint, gt: &Trajectory) -> Option<String> {
        let inflated = fp.inflated(CLEARANCE).expect("positive");
        let cand = Self::box_of(state, &inflated);
        if let Some(ego) = &self.ego {
            if oriented_box_overlap(&cand, &Self::box_of(&ego.state, &ego.footprint)) {
                return Some("actor overlaps the ego at t=0".into());
            }
        }
        for a in &self.actors {
            if oriented_box_overlap(&cand, &Self::box_of(&a.state, &a.footprint)) {
                return Some(format!("actor overlaps actor {} at t=0", a.id));
            }
            if trajectories_collide(gt, fp, &a.gt_future, &a.footprint).unwrap_or(true) {
                return Some(format!("ground-truth future collides with actor {}", a.id));
            }
        }
        None
    }

    fn try_push(&mut self, state: KinematicState, fp: Footprint, gt: Trajectory) -> Attempt {
        if let Some(why) = self.conflict(&state, &fp, &gt) {
            return Err(why);
        }
        let id = self.actors.len() as u32;
        self.actors.push(Actor {
            id,
            state,
            footprint: fp,
            gt_future: gt,
        });
        Ok(())
    }

    /// Retries `make` until the produced actor fits the scene.
    fn place(&mut self, mut make: impl FnMut(&mut Self) -> (KinematicState, Trajectory)) -> Attempt {
        let mut why = String::new();
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let fp = self.footprint();
            let (state, gt) = make(self);
            match self.try_push(state, fp, gt) {
                Ok(()) => return Ok(()),
                Err(w) => why = w,
            }
        }
        Err(why)
    }

    fn lane_follow_actor(&mut self, lane: u32, station: f64, speed: f64) -> (KinematicState, Trajectory) {
        let state = self.state_on_lane(lane, station, 0.0, speed);
        let a = self.noise_accel();
        let gt = straight_rollout(&state, a, &self.grid);
        (state, gt)
    }

    fn lane_follow(&mut self, n: usize) -> Attempt {
        let n_lanes = self.t.lane_count;
        let per_lane = n.div_ceil(n_lanes) as f64;
        let length = 250.0 + 40.0 * per_lane;
        for i in 0..n_lanes {
            let y = i as f64 * LANE_WIDTH;
            self.add_lane(vec![Vec2::new(-100.0, y), Vec2::new(length, y)]);
        }
        self.set_ego(0, 100.0);
        for _ in 0..n {
            self.place(|b| {
                let lane = b.rng.random_range(0..n_lanes) as u32;
                // Ego-lane traffic only ahead of the ego so the expert can react.
                let lo = if lane == 0 { 112.0 } else { 40.0 };
                let station = b.uniform([lo, length - 20.0]);
                let v = b.uniform(b.t.speed_range);
                b.lane_follow_actor(lane, station, v)
            })?;
        }
        Ok(())
    }

    fn intersection(&mut self, n: usize) -> Attempt {
        let h = 0.5 * LANE_WIDTH;
        let east = self.add_lane(vec![Vec2::new(-150.0, -h), Vec2::new(150.0, -h)]);
        let west = self.add_lane(vec![Vec2::new(150.0, h), Vec2::new(-150.0, h)]);
        let north = self.add_lane(vec![Vec2::new(h, -150.0), Vec2::new(h, 150.0)]);
        let south = self.add_lane(vec![Vec2::new(-h, 150.0), Vec2::new(-h, -150.0)]);
        let ego_gap = self.uniform(self.t.gap_range);
        self.set_ego(east, 150.0 - ego_gap);

        // A northbound and a westbound actor reach their shared conflict point
        // at the same time if both keep their speed; one of them yields.
        let t_conflict = self.uniform([1.0, 2.4]);
        let va = self.uniform(self.t.speed_range);
        let vb = self.uniform(self.t.speed_range);
        let jitter_a = self.uniform([-1.0, 1.0]);
        let jitter_b = self.uniform([-1.0, 1.0]);
        // Conflict point (h, h) sits at station 150 + h on both lanes.
        let a = self.state_on_lane(north, 150.0 + h - va * t_conflict + jitter_a, 0.0, va);
        let b = self.state_on_lane(west, 150.0 + h - vb * t_conflict + jitter_b, 0.0, vb);
        let brake = -self.uniform([3.0, 4.0]);
        let go = self.noise_accel().max(0.0);
        let a_yields = self.rng.random_bool(0.5);
        let (acc_a, acc_b) = if a_yields { (brake, go) } else { (go, brake) };
        let fa = self.footprint();
        let fb = self.footprint();
        let gt_a = straight_rollout(&a, acc_a, &self.grid);
        let gt_b = straight_rollout(&b, acc_b, &self.grid);
        self.try_push(a, fa, gt_a)?;
        self.try_push(b, fb, gt_b)?;

        let approach = [east, west, north, south];
        for _ in 2..n {
            self.place(|b| {
                let lane = approach[b.rng.random_range(0..approach.len())];
                let dist = b.uniform([25.0, 70.0]);
                let v = b.uniform(b.t.speed_range);
                b.lane_follow_actor(lane, 150.0 - dist, v)
            })?;
        }
        Ok(())
    }

    fn cut_in(&mut self, n: usize) -> Attempt {
        let l0 = self.add_lane(vec![Vec2::new(-100.0, 0.0), Vec2::new(400.0, 0.0)]);
        let l1 = self.add_lane(vec![Vec2::new(-100.0, LANE_WIDTH), Vec2::new(400.0, LANE_WIDTH)]);
        self.set_ego(l0, 100.0);
        let ve = self.ego.as_ref().map(|e| e.state.speed).unwrap_or(0.0);

        let gap = self.uniform(self.t.gap_range);
        let vc = (ve + self.uniform([-1.0, 2.0])).max(1.0);
        let cutter = self.state_on_lane(l1, 100.0 + gap, 0.0, vc);
        let shift = LANE_WIDTH * self.uniform([0.7, 1.0]);
        let s = travelled_distance(vc, 0.0, self.grid.horizon_s);
        let params = ClothoidParams {
            initial_curvature: 0.0,
            sharpness: -6.0 * shift / (s * s * s),
        };
        let gt = clothoid_rollout(&cutter, params, 0.0, &self.grid);
        let fp = self.footprint();
        self.try_push(cutter, fp, gt)?;

        if n >= 2 {
            // Closes in on the cutter's lane position and brakes once it leaves.
            let back = self.uniform([8.0, 14.0]);
            let vt = vc + self.uniform([4.0, 7.0]);
            let tail = self.state_on_lane(l1, 100.0 + gap - back, 0.0, vt);
            let brake = -self.uniform([2.5, 4.0]);
            let gt = straight_rollout(&tail, brake, &self.grid);
            let fp = self.footprint();
            self.try_push(tail, fp, gt)?;
        }
        for _ in 2..n {
            self.place(|b| {
                let station = 100.0 + b.uniform([45.0, 80.0]);
                let v = (ve + b.uniform([-1.0, 2.0])).max(0.0);
                b.lane_follow_actor(l0, station, v)
            })?;
        }
        Ok(())
    }

    fn merge(&mut self, n: usize) -> Attempt {
        let main = self.add_lane(vec![Vec2::new(-150.0, 0.0), Vec2::new(400.0, 0.0)]);
        let merge_x = self.uniform(self.t.gap_range);
        let theta = self.uniform([0.15, 0.3]);
        let vm = self.uniform(self.t.speed_range);
        // Heading returns to the main-lane direction at the merge point.
        let s_end = vm * self.grid.horizon_s;
        let k = 2.0 * theta / s_end;
        let params = ClothoidParams {
            initial_curvature: -k,
            sharpness: k / s_end,
        };
        let n_pts = (s_end / 2.0).ceil().max(2.0) as usize + 1;
        let unit = KinematicState::new(Vec2::ZERO, theta, 1.0).expect("valid");
        let curve = clothoid_rollout(&unit, params, 0.0, &TimeGrid::new(s_end, n_pts).expect("valid"));
        let offset = Vec2::new(merge_x, 0.0) - curve.end();
        let start = offset;
        let mut pts = vec![start - Vec2::from_angle(theta) * 60.0];
        pts.extend(curve.positions().map(|p| p + offset));
        pts.pop();
        pts.push(Vec2::new(merge_x, 0.0));
        pts.push(Vec2::new(merge_x + 150.0, 0.0));
        let ramp = self.add_lane(pts);

        let t_merge = s_end / vm;
        let ve = self.uniform(self.t.ego_speed_range);
        let lead = ve * t_merge * self.uniform([0.8, 1.2]);
        let ego_state = self.state_on_lane(main, 150.0 + merge_x - lead, 0.0, ve);
        self.ego = Some(Ego {
            state: ego_state,
            footprint: Footprint::car(),
        });
        self.route = vec![main];

        let merger = KinematicState::new(start, theta, vm).expect("valid");
        let gt = clothoid_rollout(&merger, params, 0.0, &self.grid);
        let fp = self.footprint();
        self.try_push(merger, fp, gt)?;
        let _ = ramp;
        for _ in 1..n {
            self.place(|b| {
                let station = 150.0 + merge_x + b.uniform([10.0, 50.0]);
                let v = b.uniform(b.t.speed_range);
                b.lane_follow_actor(main, station, v)
            })?;
        }
        Ok(())
    }

    fn blocker(&mut self, n: usize) -> Attempt {
        let l0 = self.add_lane(vec![Vec2::new(-100.0, 0.0), Vec2::new(400.0, 0.0)]);
        let l1 = self.add_lane(vec![Vec2::new(-100.0, LANE_WIDTH), Vec2::new(400.0, LANE_WIDTH)]);
        self.set_ego(l0, 100.0);
        let dist = self.uniform(self.t.gap_range);
        let lateral = -self.uniform([0.0, 0.8]);
        let parked = self.state_on_lane(l0, 100.0 + dist, lateral, 0.0);
        let gt = straight_rollout(&parked, 0.0, &self.grid);
        let fp = self.footprint();
        self.try_push(parked, fp, gt)?;
        for _ in 1..n {
            self.place(|b| {
                let station = b.uniform([70.0, 220.0]);
                let v = b.uniform(b.t.speed_range);
                b.lane_follow_actor(l1, station, v)
            })?;
        }
        Ok(())
    }

    /// Expert: the mildest constant-acceleration lane-following maneuver that
    /// keeps clear of every ground-truth future.
    fn expert(&self) -> Attempt<Trajectory> {
        let ego = self.ego.as_ref().ok_or("template did not place the ego")?;
        let inflated = ego.footprint.inflated(CLEARANCE).expect("positive");
        const OPTIONS: [f64; 10] = [0.5, 0.0, -0.5, -1.0, -1.5, -2.0, -2.5, -3.0, -3.5, -4.0];
        for a in OPTIONS {
            let traj = straight_rollout(&ego.state, a, &self.grid);
            let safe = self
                .actors
                .iter()
                .all(|act| !trajectories_collide(&traj, &inflated, &act.gt_future, &act.footprint).unwrap_or(true));
            if safe {
                return Ok(traj);
            }
        }
        Err("no collision-free expert maneuver".into())
    }

    fn finish(self, index: usize, seed: u64) -> Attempt<Scene> {
        let expert = self.expert()?;
        let ego = self.ego.ok_or("template did not place the ego")?;
        Ok(Scene {
            id: format!("{}-{index:05}", self.t.kind),
            seed,
            template: self.t.kind,
            grid: self.grid,
            lanes: self.lanes,
            actors: self.actors,
            ego,
            route: self.route,
            expert,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct ScenarioFile {
    format: String,
    version: u32,
    scenes: Vec<Scene>,
}

#[derive(Deserialize)]
struct Header {
    format: Option<String>,
    version: Option<u32>,
}

pub fn to_json(scenes: &[Scene]) -> Result<String> {
    let file = ScenarioFile {
        format: SCENARIO_FORMAT.into(),
        version: SCENARIO_VERSION,
        scenes: scenes.to_vec(),
    };
    let mut s = serde_json::to_string_pretty(&file)?;
    s.push('\n');
    Ok(s)
}

/// Parses and validates a scenario file body; `path` is used for messages.
pub fn from_json(path: &Path, text: &str) -> Result<Vec<Scene>> {
    let header: Header = io::parse_json(path, text)?;
    if header.format.as_deref() != Some(SCENARIO_FORMAT) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            message: format!("missing or unexpected `format` (expected \"{SCENARIO_FORMAT}\")"),
        });
    }
    match header.version {
        Some(SCENARIO_VERSION) => {}
        Some(found) => {
            return Err(Error::Version {
                path: path.to_path_buf(),
                what: "scenario file",
                found,
                expected: SCENARIO_VERSION,
            })
        }
        None => {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                message: "missing `version`".into(),
            })
        }
    }
    let file: ScenarioFile = io::parse_json(path, text)?;
    for scene in &file.scenes {
        scene.validate()?;
    }
    Ok(file.scenes)
}

/// Writes atomically (temporary file + rename).
pub fn save(scenes: &[Scene], path: &Path) -> Result<()> {
    io::write_atomic(path, to_json(scenes)?.as_bytes())
}

pub fn load(path: &Path) -> Result<Vec<Scene>> {
    from_json(path, &io::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn template_names_round_trip() {
        for k in TemplateKind::ALL {
            assert_eq!(k.name().parse::<TemplateKind>().unwrap(), k);
        }
        assert!("roundabout".parse::<TemplateKind>().is_err());
    }

    #[test]
    fn zero_noise_lane_follow_stays_on_centerline() {
        let t = ScenarioTemplate::new(TemplateKind::LaneFollow)
            .with_actor_count(1, 1)
            .with_accel_noise(0.0);
        for scene in generate(&t, 5, 11).unwrap() {
            assert_eq!(scene.actors.len(), 1);
            let a = &scene.actors[0];
            let lane = &scene.lanes[scene.assign_lane(a.state.position, a.state.heading).unwrap().lane_index];
            for p in a.gt_future.positions() {
                assert!(lane.geometry.project(p).lateral.abs() < 1e-9);
            }
        }
    }

    #[test]
    fn intersection_pairs_are_safe() {
        let t = ScenarioTemplate::new(TemplateKind::IntersectionCross);
        for scene in generate(&t, 10, 3).unwrap() {
            let (a, b) = (&scene.actors[0], &scene.actors[1]);
            assert!(!trajectories_collide(&a.gt_future, &a.footprint, &b.gt_future, &b.footprint).unwrap());
        }
    }

    #[test]
    fn rejects_bad_templates() {
        let t = ScenarioTemplate::new(TemplateKind::IntersectionCross).with_actor_count(1, 3);
        assert!(matches!(generate(&t, 1, 0), Err(Error::Config(_))));
        let t = ScenarioTemplate::new(TemplateKind::CutIn).with_actor_count(3, 2);
        assert!(generate(&t, 1, 0).is_err());
        assert!(generate(&ScenarioTemplate::default(), 0, 0).is_err());
    }

    #[test]
    fn unsatisfiable_density_names_constraint() {
        let t = ScenarioTemplate {
            lane_count: 1,
            ..ScenarioTemplate::new(TemplateKind::StationaryBlocker)
        }
        .with_actor_count(400, 400);
        match generate(&t, 1, 5) {
            Err(Error::Generation(msg)) => assert!(msg.contains("actor"), "{msg}"),
            other => panic!("expected generation error, got {other:?}"),
        }
    }

    #[test]
    fn merge_actor_follows_ramp() {
        let t = ScenarioTemplate::new(TemplateKind::Merge).with_actor_count(1, 1);
        for scene in generate(&t, 3, 8).unwrap() {
            let a = &scene.actors[0];
            let assignment = scene.assign_lane(a.state.position, a.state.heading).unwrap();
            assert!(assignment.on_lane);
            let lane = &scene.lanes[assignment.lane_index].geometry;
            for p in a.gt_future.positions() {
                assert!(lane.project(p).lateral.abs() < 0.05);
            }
        }
    }

    #[test]
    fn version_and_format_errors() {
        let p = Path::new("x.json");
        let wrong_version = format!(r#"{{"format":"{SCENARIO_FORMAT}","version":9,"scenes":[]}}"#);
        assert!(matches!(
            from_json(p, &wrong_version),
            Err(Error::Version { found: 9, .. })
        ));
        assert!(matches!(
            from_json(p, r#"{"version":1,"scenes":[]}"#),
            Err(Error::Parse { .. })
        ));
        let malformed = format!("{{\"format\":\"{SCENARIO_FORMAT}\",\"version\":1,\n\"scenes\":[{{\"id\":3}}]}}");
        match from_json(p, &malformed) {
            Err(Error::Parse { message, .. }) => {
                assert!(message.contains("line 2"), "{message}");
                assert!(message.contains("scenes[0]"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn empty_container() {
        let text = to_json(&[]).unwrap();
        assert!(from_json(Path::new("e.json"), &text).unwrap().is_empty());
    }
}
