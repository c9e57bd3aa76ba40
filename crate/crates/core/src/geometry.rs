//! Planar geometry: oriented boxes, lane polylines and the collision and
//! lane-boundary predicates used by the energy model, the planner and the
//! metrics.
//!
//! All predicates treat shapes as closed sets, so touching counts as contact.
//! Trajectories are checked at every waypoint and at the midpoint between
//! consecutive waypoints.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn from_angle(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Vec2 { x: c, y: s }
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn distance(self, o: Vec2) -> f64 {
        (self - o).norm()
    }

    /// Counter-clockwise normal.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn rotate(self, theta: f64) -> Vec2 {
        let (s, c) = theta.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Wraps an angle into (-π, π].
pub fn wrap_angle(theta: f64) -> f64 {
    let r = theta.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FootprintRepr")]
pub struct Footprint {
    pub length: f64,
    pub width: f64,
}

#[derive(Deserialize)]
struct FootprintRepr {
    length: f64,
    width: f64,
}

impl TryFrom<FootprintRepr> for Footprint {
    type Error = Error;
    fn try_from(r: FootprintRepr) -> Result<Self> {
        Footprint::new(r.length, r.width)
    }
}

impl Footprint {
    pub fn new(length: f64, width: f64) -> Result<Self> {
        if !(length > 0.0 && width > 0.0 && length.is_finite() && width.is_finite()) {
            return Err(Error::contract(format!(
                "footprint extents must be positive and finite, got {length} x {width}"
            )));
        }
        Ok(Footprint { length, width })
    }

    /// A typical passenger car, 4.5 m x 2.0 m.
    pub fn car() -> Self {
        Footprint {
            length: 4.5,
            width: 2.0,
        }
    }

    pub fn half_diagonal(&self) -> f64 {
        0.5 * self.length.hypot(self.width)
    }

    pub fn inflated(&self, margin: f64) -> Result<Self> {
        Footprint::new(self.length + 2.0 * margin, self.width + 2.0 * margin)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedBox {
    pub center: Vec2,
    pub heading: f64,
    pub footprint: Footprint,
}

impl OrientedBox {
    pub fn new(center: Vec2, heading: f64, footprint: Footprint) -> Self {
        OrientedBox {
            center,
            heading,
            footprint,
        }
    }

    pub fn corners(&self) -> [Vec2; 4] {
        let u = Vec2::from_angle(self.heading) * (0.5 * self.footprint.length);
        let v = Vec2::from_angle(self.heading).perp() * (0.5 * self.footprint.width);
        let c = self.center;
        [c + u + v, c - u + v, c - u - v, c + u - v]
    }

    /// Closed containment test.
    pub fn contains(&self, p: Vec2) -> bool {
        let d = p - self.center;
        let u = Vec2::from_angle(self.heading);
        d.dot(u).abs() <= 0.5 * self.footprint.length && d.dot(u.perp()).abs() <= 0.5 * self.footprint.width
    }

    fn shape(&self) -> BoxShape {
        let (s, c) = self.heading.sin_cos();
        BoxShape {
            center: self.center,
            axis: Vec2::new(c, s),
            half_length: 0.5 * self.footprint.length,
            half_width: 0.5 * self.footprint.width,
        }
    }
}

/// Box with its rotation precomputed; the form every hot predicate works on.
#[derive(Debug, Clone, Copy)]
pub(crate) struct BoxShape {
    pub center: Vec2,
    pub axis: Vec2,
    pub half_length: f64,
    pub half_width: f64,
}

impl BoxShape {
    #[inline]
    fn radius_along(&self, dir: Vec2) -> f64 {
        self.half_length * self.axis.dot(dir).abs() + self.half_width * self.axis.perp().dot(dir).abs()
    }

    #[inline]
    pub(crate) fn overlaps(&self, other: &BoxShape) -> bool {
        let d = other.center - self.center;
        for axis in [self.axis, self.axis.perp(), other.axis, other.axis.perp()] {
            if d.dot(axis).abs() > self.radius_along(axis) + other.radius_along(axis) {
                return false;
            }
        }
        true
    }

    fn touches_segment(&self, p: Vec2, q: Vec2) -> bool {
        let seg = q - p;
        let mut axes = [self.axis, self.axis.perp(), seg.perp()];
        let n_axes = if seg.norm_sq() > 0.0 { 3 } else { 2 };
        for axis in axes.iter_mut().take(n_axes) {
            let c = self.center.dot(*axis);
            let r = self.radius_along(*axis);
            let (a, b) = (p.dot(*axis), q.dot(*axis));
            if a.max(b) < c - r || a.min(b) > c + r {
                return false;
            }
        }
        true
    }
}

/// Separating-axis overlap test for two closed oriented rectangles.
pub fn oriented_box_overlap(a: &OrientedBox, b: &OrientedBox) -> bool {
    a.shape().overlaps(&b.shape())
}

/// True iff the closed box and the closed segment `p`–`q` intersect.
pub fn box_segment_intersect(b: &OrientedBox, p: Vec2, q: Vec2) -> bool {
    b.shape().touches_segment(p, q)
}

/// Pose at one collision-check instant: either a waypoint or the midpoint
/// between two consecutive waypoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckPose {
    pub t: f64,
    pub center: Vec2,
    pub heading: f64,
}

/// Waypoints interleaved with midpoint poses (position averaged, heading
/// interpolated along the shorter arc), `2n - 1` poses for `n` waypoints.
pub fn check_poses(traj: &Trajectory) -> Vec<CheckPose> {
    let wps = &traj.waypoints;
    let mut out = Vec::with_capacity(wps.len().saturating_mul(2).saturating_sub(1));
    for (i, w) in wps.iter().enumerate() {
        if i > 0 {
            let p = &wps[i - 1];
            out.push(CheckPose {
                t: 0.5 * (p.t + w.t),
                center: Vec2::new(0.5 * (p.x + w.x), 0.5 * (p.y + w.y)),
                heading: wrap_angle(p.heading + 0.5 * wrap_angle(w.heading - p.heading)),
            });
        }
        out.push(CheckPose {
            t: w.t,
            center: Vec2::new(w.x, w.y),
            heading: w.heading,
        });
    }
    out
}

pub(crate) fn pose_shapes(traj: &Trajectory, fp: &Footprint) -> Vec<BoxShape> {
    check_poses(traj)
        .into_iter()
        .map(|p| OrientedBox::new(p.center, p.heading, *fp).shape())
        .collect()
}

pub(crate) fn ensure_same_grid(a: &Trajectory, b: &Trajectory) -> Result<()> {
    let same = a.waypoints.len() == b.waypoints.len()
        && a.waypoints
            .iter()
            .zip(&b.waypoints)
            .all(|(p, q)| (p.t - q.t).abs() <= 1e-9);
    if same {
        Ok(())
    } else {
        Err(Error::contract("trajectories are not sampled on the same time grid"))
    }
}

/// True iff the two footprints overlap at any shared timestamp or at any
/// midpoint between consecutive timestamps.
pub fn trajectories_collide(a: &Trajectory, fa: &Footprint, b: &Trajectory, fb: &Footprint) -> Result<bool> {
    Ok(first_collision_time(a, fa, b, fb)?.is_some())
}

/// Earliest check instant at which the two footprints overlap.
pub fn first_collision_time(a: &Trajectory, fa: &Footprint, b: &Trajectory, fb: &Footprint) -> Result<Option<f64>> {
    ensure_same_grid(a, b)?;
    let pa = check_poses(a);
    let pb = check_poses(b);
    Ok(pa.iter().zip(&pb).find_map(|(p, q)| {
        let ba = OrientedBox::new(p.center, p.heading, *fa);
        let bb = OrientedBox::new(q.center, q.heading, *fb);
        oriented_box_overlap(&ba, &bb).then_some(p.t)
    }))
}

/// Result of projecting a point onto a lane centerline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaneProjection {
    /// Arc length along the centerline (extrapolated past either end).
    pub station: f64,
    /// Signed offset, positive to the left of the travel direction.
    pub lateral: f64,
    /// Direction of the centerline segment the point projects onto.
    pub heading: f64,
}

/// Lane described by its centerline (in travel direction) and a constant width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LaneRepr", into = "LaneRepr")]
pub struct LaneGeometry {
    centerline: Vec<Vec2>,
    width: f64,
    left: Vec<Vec2>,
    right: Vec<Vec2>,
    cumulative: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct LaneRepr {
    centerline: Vec<Vec2>,
    width: f64,
}

impl TryFrom<LaneRepr> for LaneGeometry {
    type Error = Error;
    fn try_from(r: LaneRepr) -> Result<Self> {
        LaneGeometry::new(r.centerline, r.width)
    }
}

impl From<LaneGeometry> for LaneRepr {
    fn from(l: LaneGeometry) -> Self {
        LaneRepr {
            centerline: l.centerline,
            width: l.width,
        }
    }
}

impl LaneGeometry {
    pub fn new(centerline: Vec<Vec2>, width: f64) -> Result<Self> {
        if centerline.len() < 2 {
            return Err(Error::contract("lane centerline needs at least two points"));
        }
        if !(width > 0.0 && width.is_finite()) {
            return Err(Error::contract(format!("lane width must be positive, got {width}")));
        }
        if centerline.iter().any(|p| !p.is_finite()) {
            return Err(Error::contract("lane centerline has non-finite points"));
        }
        if centerline.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::contract("lane centerline has repeated consecutive points"));
        }
        let mut cumulative = Vec::with_capacity(centerline.len());
        let mut acc = 0.0;
        cumulative.push(0.0);
        for w in centerline.windows(2) {
            acc += w[0].distance(w[1]);
            cumulative.push(acc);
        }
        let left = offset_polyline(&centerline, 0.5 * width);
        let right = offset_polyline(&centerline, -0.5 * width);
        Ok(LaneGeometry {
            centerline,
            width,
            left,
            right,
            cumulative,
        })
    }

    /// Straight lane from `start` to `end`.
    pub fn straight(start: Vec2, end: Vec2, width: f64) -> Result<Self> {
        LaneGeometry::new(vec![start, end], width)
    }

    pub fn centerline(&self) -> &[Vec2] {
        &self.centerline
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn left_boundary(&self) -> &[Vec2] {
        &self.left
    }

    pub fn right_boundary(&self) -> &[Vec2] {
        &self.right
    }

    pub fn length(&self) -> f64 {
        *self.cumulative.last().unwrap_or(&0.0)
    }

    pub fn project(&self, p: Vec2) -> LaneProjection {
        let n_seg = self.centerline.len() - 1;
        let mut best: Option<(f64, LaneProjection)> = None;
        for i in 0..n_seg {
            let a = self.centerline[i];
            let b = self.centerline[i + 1];
            let seg = b - a;
            let len = seg.norm();
            let dir = seg * (1.0 / len);
            let mut s = (p - a).dot(dir);
            // The end segments extrapolate so points past either end keep a
            // perpendicular offset.
            if i > 0 {
                s = s.max(0.0);
            }
            if i + 1 < n_seg {
                s = s.min(len);
            }
            let foot = a + dir * s;
            let dist = p.distance(foot);
            let proj = LaneProjection {
                station: self.cumulative[i] + s,
                lateral: dir.cross(p - a),
                heading: dir.y.atan2(dir.x),
            };
            if best.as_ref().is_none_or(|(d, _)| dist < *d) {
                best = Some((dist, proj));
            }
        }
        best.map(|(_, p)| p).expect("lane has at least one segment")
    }

    /// Point on the centerline at arc length `station` (clamped to the lane).
    pub fn point_at(&self, station: f64) -> (Vec2, f64) {
        let s = station.clamp(0.0, self.length());
        let i = match self.cumulative.partition_point(|&c| c <= s) {
            0 => 0,
            k => (k - 1).min(self.centerline.len() - 2),
        };
        let a = self.centerline[i];
        let b = self.centerline[i + 1];
        let dir = (b - a) * (1.0 / a.distance(b));
        (a + dir * (s - self.cumulative[i]), dir.y.atan2(dir.x))
    }

    /// Segments of both boundary polylines.
    pub fn boundary_segments(&self) -> impl Iterator<Item = (Vec2, Vec2)> + '_ {
        self.left.windows(2).chain(self.right.windows(2)).map(|w| (w[0], w[1]))
    }
}

fn offset_polyline(pts: &[Vec2], offset: f64) -> Vec<Vec2> {
    let n = pts.len();
    let dir = |i: usize| {
        let d = pts[i + 1] - pts[i];
        d * (1.0 / d.norm())
    };
    (0..n)
        .map(|i| {
            let normal = if i == 0 {
                dir(0).perp()
            } else if i == n - 1 {
                dir(n - 2).perp()
            } else {
                let n_prev = dir(i - 1).perp();
                let n_next = dir(i).perp();
                let bis = n_prev + n_next;
                let len = bis.norm();
                if len < 1e-9 {
                    n_next
                } else {
                    // Miter join: scale so each adjacent edge keeps its offset.
                    let unit = bis * (1.0 / len);
                    unit * (1.0 / unit.dot(n_next))
                }
            };
            pts[i] + normal * offset
        })
        .collect()
}

/// True iff the footprint, at any waypoint or midpoint, touches a boundary of
/// any of the given lanes. Callers pass the route lanes of the ego.
pub fn lane_violation(traj: &Trajectory, fp: &Footprint, lanes: &[LaneGeometry]) -> Result<bool> {
    if lanes.is_empty() {
        return Err(Error::contract("lane violation check needs at least one lane"));
    }
    let shapes = pose_shapes(traj, fp);
    Ok(shapes.iter().any(|shape| {
        lanes
            .iter()
            .flat_map(|l| l.boundary_segments())
            .any(|(p, q)| shape.touches_segment(p, q))
    }))
}
