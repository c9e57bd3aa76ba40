//! Trajectory hypotheses for actors and the ego vehicle.
//!
//! Every trajectory is a rollout of one of three path primitives (straight
//! line, circular arc, clothoid) driven by a constant acceleration, with the
//! speed clamped at zero so vehicles never reverse. [`sample_trajectories`]
//! draws the primitive with probabilities `mode_weights`, then its shape
//! parameters and acceleration uniformly from the configured ranges.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Vec2};

/// Arc-length step bound for clothoid integration.
pub const CLOTHOID_MAX_STEP: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StateRepr")]
pub struct KinematicState {
    pub position: Vec2,
    /// Radians in (-π, π].
    pub heading: f64,
    /// m/s, never negative.
    pub speed: f64,
}

#[derive(Deserialize)]
struct StateRepr {
    position: Vec2,
    heading: f64,
    speed: f64,
}

impl TryFrom<StateRepr> for KinematicState {
    type Error = Error;
    fn try_from(r: StateRepr) -> Result<Self> {
        let s = KinematicState::new(r.position, r.heading, r.speed)?;
        if s.heading != r.heading {
            return Err(Error::contract(format!(
                "heading {} is not normalized to (-pi, pi]",
                r.heading
            )));
        }
        Ok(s)
    }
}

impl KinematicState {
    pub fn new(position: Vec2, heading: f64, speed: f64) -> Result<Self> {
        if !position.is_finite() || !heading.is_finite() || !speed.is_finite() {
            return Err(Error::contract("kinematic state has non-finite fields"));
        }
        if speed < 0.0 {
            return Err(Error::contract(format!("speed must be non-negative, got {speed}")));
        }
        Ok(KinematicState {
            position,
            heading: wrap_angle(heading),
            speed,
        })
    }

    pub fn direction(&self) -> Vec2 {
        Vec2::from_angle(self.heading)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridRepr")]
pub struct TimeGrid {
    pub horizon_s: f64,
    /// Includes the waypoint at t = 0.
    pub num_waypoints: usize,
    pub dt: f64,
}

#[derive(Deserialize)]
struct GridRepr {
    horizon_s: f64,
    num_waypoints: usize,
    dt: f64,
}

impl TryFrom<GridRepr> for TimeGrid {
    type Error = Error;
    fn try_from(r: GridRepr) -> Result<Self> {
        let g = TimeGrid::new(r.horizon_s, r.num_waypoints)?;
        if (g.dt - r.dt).abs() > 1e-12 {
            return Err(Error::contract(format!(
                "time grid dt {} inconsistent with horizon {} and {} waypoints",
                r.dt, r.horizon_s, r.num_waypoints
            )));
        }
        Ok(g)
    }
}

impl Default for TimeGrid {
    /// 7 waypoints over 3 s.
    fn default() -> Self {
        TimeGrid {
            horizon_s: 3.0,
            num_waypoints: 7,
            dt: 0.5,
        }
    }
}

impl TimeGrid {
    pub fn new(horizon_s: f64, num_waypoints: usize) -> Result<Self> {
        if num_waypoints < 2 {
            return Err(Error::config("time grid needs at least two waypoints"));
        }
        if !(horizon_s > 0.0 && horizon_s.is_finite()) {
            return Err(Error::config(format!("horizon must be positive, got {horizon_s}")));
        }
        Ok(TimeGrid {
            horizon_s,
            num_waypoints,
            dt: horizon_s / (num_waypoints - 1) as f64,
        })
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.dt
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.num_waypoints).map(|i| self.time(i))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub t: f64,
}

impl Waypoint {
    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryMode {
    Straight,
    Arc,
    Clothoid,
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub waypoints: Vec<Waypoint>,
    pub mode: TrajectoryMode,
}

pub type TrajectorySet = Vec<Trajectory>;

impl Trajectory {
    pub fn start(&self) -> Vec2 {
        self.waypoints[0].position()
    }

    pub fn end(&self) -> Vec2 {
        self.waypoints[self.waypoints.len() - 1].position()
    }

    pub fn positions(&self) -> impl Iterator<Item = Vec2> + '_ {
        self.waypoints.iter().map(Waypoint::position)
    }

    /// Largest distance of any waypoint from the first one.
    pub fn reach(&self) -> f64 {
        let s = self.start();
        self.positions().map(|p| p.distance(s)).fold(0.0, f64::max)
    }

    /// Checks waypoint count, timestamps and finiteness against `grid`.
    pub fn validate(&self, grid: &TimeGrid) -> Result<()> {
        if self.waypoints.len() != grid.num_waypoints {
            return Err(Error::contract(format!(
                "trajectory has {} waypoints, grid expects {}",
                self.waypoints.len(),
                grid.num_waypoints
            )));
        }
        for (i, w) in self.waypoints.iter().enumerate() {
            if !(w.x.is_finite() && w.y.is_finite() && w.heading.is_finite()) {
                return Err(Error::NonFinite(format!("waypoint {i}")));
            }
            if (w.t - grid.time(i)).abs() > 1e-9 {
                return Err(Error::contract(format!(
                    "waypoint {i} at t={} does not match grid time {}",
                    w.t,
                    grid.time(i)
                )));
            }
        }
        Ok(())
    }
}

/// Distance travelled after `t` seconds from speed `v0` under constant
/// acceleration `a`, with the vehicle stopping instead of reversing.
pub fn travelled_distance(v0: f64, a: f64, t: f64) -> f64 {
    if a < 0.0 {
        let stop = v0 / -a;
        if t >= stop {
            return v0 * stop + 0.5 * a * stop * stop;
        }
    }
    v0 * t + 0.5 * a * t * t
}

/// Speed after `t` seconds, clamped at zero.
pub fn speed_at(v0: f64, a: f64, t: f64) -> f64 {
    (v0 + a * t).max(0.0)
}

fn rollout(
    init: &KinematicState,
    accel: f64,
    grid: &TimeGrid,
    mode: TrajectoryMode,
    mut path: impl FnMut(f64) -> (Vec2, f64),
) -> Trajectory {
    let waypoints = grid
        .times()
        .enumerate()
        .map(|(i, t)| {
            if i == 0 {
                return Waypoint {
                    x: init.position.x,
                    y: init.position.y,
                    heading: init.heading,
                    t,
                };
            }
            let s = travelled_distance(init.speed, accel, t);
            let (local, dtheta) = path(s);
            let p = init.position + local.rotate(init.heading);
            Waypoint {
                x: p.x,
                y: p.y,
                heading: wrap_angle(init.heading + dtheta),
                t,
            }
        })
        .collect();
    Trajectory { waypoints, mode }
}

/// Constant-acceleration motion along the initial heading.
pub fn straight_rollout(init: &KinematicState, accel: f64, grid: &TimeGrid) -> Trajectory {
    rollout(init, accel, grid, TrajectoryMode::Straight, |s| {
        (Vec2::new(s, 0.0), 0.0)
    })
}

/// Motion along a circle of signed radius (positive turns left).
pub fn arc_rollout(
    init: &KinematicState,
    radius: f64,
    accel: f64,
    grid: &TimeGrid,
    min_turn_radius: f64,
) -> Result<Trajectory> {
    if !radius.is_finite() || radius.abs() < min_turn_radius {
        return Err(Error::Infeasible(format!(
            "arc radius {radius} below minimum turning radius {min_turn_radius}"
        )));
    }
    Ok(rollout(init, accel, grid, TrajectoryMode::Arc, |s| {
        let phi = s / radius;
        let half = (0.5 * phi).sin();
        (Vec2::new(radius * phi.sin(), 2.0 * radius * half * half), phi)
    }))
}

/// Clothoid shape: curvature `initial_curvature + sharpness * s` along arc length `s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClothoidParams {
    /// 1/m
    pub initial_curvature: f64,
    /// 1/m²
    pub sharpness: f64,
}

impl ClothoidParams {
    pub fn heading_change(&self, s: f64) -> f64 {
        self.initial_curvature * s + 0.5 * self.sharpness * s * s
    }

    pub fn curvature(&self, s: f64) -> f64 {
        self.initial_curvature + self.sharpness * s
    }
}

/// Body-frame position after arc length `s1`, continuing from (`s0`, `p0`),
/// by composite Simpson integration with steps of at most `max_step`.
fn integrate_clothoid(params: &ClothoidParams, s0: f64, s1: f64, p0: Vec2, max_step: f64) -> Vec2 {
    let len = s1 - s0;
    if len <= 0.0 {
        return p0;
    }
    let mut n = ((len / max_step).ceil() as usize).max(1);
    loop {
        let h = len / n as f64;
        let worst = (0..n)
            .map(|i| {
                let a = s0 + i as f64 * h;
                (params.heading_change(a + h) - params.heading_change(a)).abs()
            })
            .fold(0.0, f64::max);
        if worst <= std::f64::consts::FRAC_PI_2 {
            break;
        }
        n *= 2;
    }
    let h = len / n as f64;
    let f = |s: f64| Vec2::from_angle(params.heading_change(s));
    let mut acc = Vec2::ZERO;
    for i in 0..n {
        let a = s0 + i as f64 * h;
        acc = acc + (f(a) + f(a + 0.5 * h) * 4.0 + f(a + h)) * (h / 6.0);
    }
    p0 + acc
}

/// Motion along a clothoid with the given integration step bound.
pub fn clothoid_rollout_with_step(
    init: &KinematicState,
    params: ClothoidParams,
    accel: f64,
    grid: &TimeGrid,
    max_step: f64,
) -> Trajectory {
    let mut last_s = 0.0;
    let mut last_p = Vec2::ZERO;
    rollout(init, accel, grid, TrajectoryMode::Clothoid, |s| {
        last_p = integrate_clothoid(&params, last_s, s, last_p, max_step);
        last_s = s;
        (last_p, params.heading_change(s))
    })
}

pub fn clothoid_rollout(init: &KinematicState, params: ClothoidParams, accel: f64, grid: &TimeGrid) -> Trajectory {
    clothoid_rollout_with_step(init, params, accel, grid, CLOTHOID_MAX_STEP)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    /// Probabilities of (straight, arc, clothoid).
    pub mode_weights: [f64; 3],
    /// m/s²
    pub accel_range: [f64; 2],
    /// m, magnitude of the arc radius; the turn direction is a fair coin.
    pub radius_range: [f64; 2],
    /// 1/m, curvature at the start of a clothoid.
    pub clothoid_curvature_range: [f64; 2],
    /// 1/m², rate of change of clothoid curvature.
    pub clothoid_sharpness_range: [f64; 2],
    /// m, no sample turns tighter than this.
    pub min_turn_radius: f64,
    /// m/s², bound on speed² · curvature along a sample.
    pub max_lateral_accel: f64,
    pub num_samples: usize,
    /// Reserve one slot (at a seeded position) for the constant-velocity
    /// continuation of the current state.
    pub include_constant_velocity: bool,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            mode_weights: [0.3, 0.2, 0.5],
            accel_range: [-4.0, 3.0],
            radius_range: [6.0, 200.0],
            clothoid_curvature_range: [-0.05, 0.05],
            clothoid_sharpness_range: [-0.02, 0.02],
            min_turn_radius: 6.0,
            max_lateral_accel: 6.0,
            num_samples: 200,
            include_constant_velocity: true,
            seed: 0,
        }
    }
}

fn check_range(name: &str, r: [f64; 2]) -> Result<()> {
    if !(r[0].is_finite() && r[1].is_finite()) || r[0] > r[1] {
        return Err(Error::config(format!("{name} [{}, {}] is empty", r[0], r[1])));
    }
    Ok(())
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        let w = self.mode_weights;
        if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!(
                "mode weights {w:?} must be non-negative and sum to 1"
            )));
        }
        check_range("accel_range", self.accel_range)?;
        check_range("radius_range", self.radius_range)?;
        check_range("clothoid_curvature_range", self.clothoid_curvature_range)?;
        check_range("clothoid_sharpness_range", self.clothoid_sharpness_range)?;
        if !(self.min_turn_radius > 0.0) {
            return Err(Error::config("min_turn_radius must be positive"));
        }
        if self.radius_range[1] < self.min_turn_radius {
            return Err(Error::config(format!(
                "radius_range upper bound {} is below min_turn_radius {}",
                self.radius_range[1], self.min_turn_radius
            )));
        }
        if !(self.max_lateral_accel > 0.0) {
            return Err(Error::config("max_lateral_accel must be positive"));
        }
        if self.num_samples == 0 {
            return Err(Error::config("num_samples must be at least 1"));
        }
        Ok(())
    }

    /// Same configuration with an independent RNG stream for `stream`.
    pub fn with_stream(&self, stream: u64) -> Self {
        SamplerConfig {
            seed: stream_seed(self.seed, stream),
            ..self.clone()
        }
    }

    pub fn with_samples(&self, k: usize) -> Self {
        SamplerConfig {
            num_samples: k,
            ..self.clone()
        }
    }
}

/// SplitMix64 mix of a base seed and a stream index.
pub fn stream_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform draw from `range` restricted to `[lo, hi]`. Rejection sampling a
/// uniform until it lands in an interval yields exactly this distribution.
/// When the two do not intersect, the point of `range` closest to the
/// feasible interval is returned.
fn uniform_within(rng: &mut impl Rng, range: [f64; 2], lo: f64, hi: f64) -> f64 {
    let a = range[0].max(lo);
    let b = range[1].min(hi);
    if a > b {
        return if range[1] < lo { range[1] } else { range[0] };
    }
    if a == b {
        return a;
    }
    rng.random_range(a..=b)
}

/// Draws `cfg.num_samples` trajectories from `init`. Deterministic in
/// `cfg.seed`.
pub fn sample_trajectories(init: &KinematicState, cfg: &SamplerConfig, grid: &TimeGrid) -> Result<TrajectorySet> {
    cfg.validate()?;
    let k = cfg.num_samples;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let modes = WeightedIndex::new(cfg.mode_weights).map_err(|e| Error::config(format!("mode weights: {e}")))?;
    let cv_slot = cfg.include_constant_velocity.then(|| rng.random_range(0..k));
    let mut out = Vec::with_capacity(k);
    for idx in 0..k {
        if Some(idx) == cv_slot {
            out.push(straight_rollout(init, 0.0, grid));
            continue;
        }
        out.push(draw_sample(init, cfg, grid, &modes, &mut rng)?);
    }
    Ok(out)
}

fn draw_sample(
    init: &KinematicState,
    cfg: &SamplerConfig,
    grid: &TimeGrid,
    modes: &WeightedIndex<f64>,
    rng: &mut ChaCha8Rng,
) -> Result<Trajectory> {
    let mode = modes.sample(rng);
    let accel = uniform_within(rng, cfg.accel_range, f64::NEG_INFINITY, f64::INFINITY);
    let v0 = init.speed;
    let v_peak = v0.max(v0 + accel * grid.horizon_s);
    let kappa_turn = 1.0 / cfg.min_turn_radius;
    let kappa_limit = if v_peak > 0.0 {
        kappa_turn.min(cfg.max_lateral_accel / (v_peak * v_peak))
    } else {
        kappa_turn
    };
    match mode {
        0 => Ok(straight_rollout(init, accel, grid)),
        1 => {
            let r = uniform_within(rng, cfg.radius_range, 1.0 / kappa_limit, f64::INFINITY);
            let r = if rng.random_bool(0.5) { r } else { -r };
            arc_rollout(init, r, accel, grid, cfg.min_turn_radius)
        }
        _ => {
            let k0 = uniform_within(rng, cfg.clothoid_curvature_range, -kappa_limit, kappa_limit);
            let s_max = travelled_distance(v0, accel, grid.horizon_s);
            let slack = (kappa_limit - k0.abs()).max(0.0);
            let bound = if s_max > 0.0 { slack / s_max } else { f64::INFINITY };
            let c = uniform_within(rng, cfg.clothoid_sharpness_range, -bound, bound);
            Ok(clothoid_rollout(
                init,
                ClothoidParams {
                    initial_curvature: k0,
                    sharpness: c,
                },
                accel,
                grid,
            ))
        }
    }
}
