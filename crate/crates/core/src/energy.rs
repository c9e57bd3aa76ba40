//! Energy tables over sampled futures: a feature-linear unary energy per
//! (actor, sample) and sparse pairwise collision indicators.
//!
//! The joint energy of one sample per actor is
//! `sum_i U[i][k_i] + 2 * gamma * #{i < j : sample k_i of i collides with k_j of j}`,
//! i.e. the collision penalty is charged once per ordered pair.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ensure_same_grid, pose_shapes, wrap_angle, BoxShape, Footprint, LaneGeometry, Vec2};
use crate::sampler::{straight_rollout, Trajectory, TrajectorySet};
use crate::scenario::Scene;

pub const NUM_FEATURES: usize = 6;

pub const FEATURE_NAMES: [&str; NUM_FEATURES] = [
    "lateral_offset",
    "heading_misalignment",
    "cv_deviation",
    "curvature",
    "acceleration",
    "progress",
];

/// Lane-relative and kinematic description of one candidate future.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    /// m, mean |lateral offset| from the reference lane centerline.
    pub lateral_offset: f64,
    /// rad, mean |heading - lane heading|.
    pub heading_misalignment: f64,
    /// m, final-waypoint distance from the constant-velocity extrapolation.
    pub cv_deviation: f64,
    /// 1/m, mean absolute curvature.
    pub curvature: f64,
    /// m/s², mean absolute acceleration.
    pub acceleration: f64,
    /// m, station gained along the reference lane.
    pub progress: f64,
    /// The actor lies outside every heading-aligned lane; lane-relative
    /// entries use the nearest lane.
    pub off_lane: bool,
}

impl FeatureVector {
    pub fn values(&self) -> [f64; NUM_FEATURES] {
        [
            self.lateral_offset,
            self.heading_misalignment,
            self.cv_deviation,
            self.curvature,
            self.acceleration,
            self.progress,
        ]
    }
}

/// Mean Menger curvature over consecutive waypoint triples. Exact `1/R` for
/// points on a circle of radius `R`; coincident points contribute zero.
pub fn mean_abs_curvature(traj: &Trajectory) -> f64 {
    let p: Vec<Vec2> = traj.positions().collect();
    if p.len() < 3 {
        return 0.0;
    }
    let total: f64 = p
        .windows(3)
        .map(|w| {
            let (a, b, c) = (w[1] - w[0], w[2] - w[1], w[2] - w[0]);
            let denom = a.norm() * b.norm() * c.norm();
            if denom < 1e-12 {
                0.0
            } else {
                2.0 * a.cross(c).abs() / denom
            }
        })
        .sum();
    total / (p.len() - 2) as f64
}

/// Mean absolute change of the chord speed per unit time.
pub fn mean_abs_accel(traj: &Trajectory) -> f64 {
    let w = &traj.waypoints;
    if w.len() < 3 {
        return 0.0;
    }
    let speeds: Vec<f64> = w
        .windows(2)
        .map(|s| s[1].position().distance(s[0].position()) / (s[1].t - s[0].t))
        .collect();
    let total: f64 = speeds
        .windows(2)
        .zip(w.windows(3))
        .map(|(v, t)| (v[1] - v[0]).abs() / (0.5 * (t[2].t - t[0].t)))
        .sum();
    total / (speeds.len() - 1) as f64
}

/// Mean |lateral| and mean |heading misalignment| against `lane`.
pub(crate) fn lane_alignment(traj: &Trajectory, lane: &LaneGeometry) -> (f64, f64) {
    let n = traj.waypoints.len() as f64;
    let (mut lat, mut head) = (0.0, 0.0);
    for w in &traj.waypoints {
        let p = lane.project(w.position());
        lat += p.lateral.abs();
        head += wrap_angle(w.heading - p.heading).abs();
    }
    (lat / n, head / n)
}

pub fn compute_features(scene: &Scene, actor_index: usize, traj: &Trajectory) -> Result<FeatureVector> {
    let actor = scene.actors.get(actor_index).ok_or_else(|| {
        Error::contract(format!(
            "actor {actor_index} out of range for scene {} with {} actors",
            scene.id,
            scene.actors.len()
        ))
    })?;
    traj.validate(&scene.grid)?;
    let assignment = scene.assign_lane(actor.state.position, actor.state.heading)?;
    let lane = &scene.lanes[assignment.lane_index].geometry;
    features_against(lane, !assignment.on_lane, &actor.state, traj, &scene.grid)
}

fn features_against(
    lane: &LaneGeometry,
    off_lane: bool,
    state: &crate::sampler::KinematicState,
    traj: &Trajectory,
    grid: &crate::sampler::TimeGrid,
) -> Result<FeatureVector> {
    let (lateral_offset, heading_misalignment) = lane_alignment(traj, lane);
    let cv_end = straight_rollout(state, 0.0, grid).end();
    let fv = FeatureVector {
        lateral_offset,
        heading_misalignment,
        cv_deviation: traj.end().distance(cv_end),
        curvature: mean_abs_curvature(traj),
        acceleration: mean_abs_accel(traj),
        progress: lane.project(traj.end()).station - lane.project(traj.start()).station,
        off_lane,
    };
    if fv.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("features {fv:?}")));
    }
    Ok(fv)
}

/// Per-(actor, sample) features, computed once per scene and reused by
/// every weight setting.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub num_actors: usize,
    pub num_samples: usize,
    /// Row-major `[actor][sample]`.
    pub values: Vec<[f64; NUM_FEATURES]>,
    pub off_lane: Vec<bool>,
}

impl FeatureTable {
    pub fn build(scene: &Scene, sets: &[TrajectorySet]) -> Result<Self> {
        let k = check_sets(scene, sets)?;
        let rows: Vec<(Vec<[f64; NUM_FEATURES]>, bool)> = (0..scene.actors.len())
            .into_par_iter()
            .map(|i| {
                let actor = &scene.actors[i];
                let assignment = scene.assign_lane(actor.state.position, actor.state.heading)?;
                let lane = &scene.lanes[assignment.lane_index].geometry;
                let row = sets[i]
                    .iter()
                    .map(|t| {
                        t.validate(&scene.grid)?;
                        features_against(lane, !assignment.on_lane, &actor.state, t, &scene.grid).map(|f| f.values())
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok((row, !assignment.on_lane))
            })
            .collect::<Result<_>>()?;
        let mut values = Vec::with_capacity(scene.actors.len() * k);
        let mut off_lane = Vec::with_capacity(scene.actors.len());
        for (row, off) in rows {
            values.extend(row);
            off_lane.push(off);
        }
        Ok(FeatureTable {
            num_actors: scene.actors.len(),
            num_samples: k,
            values,
            off_lane,
        })
    }

    pub fn get(&self, actor: usize, sample: usize) -> &[f64; NUM_FEATURES] {
        &self.values[actor * self.num_samples + sample]
    }

    pub fn unary(&self, w: &[f64; NUM_FEATURES]) -> UnaryTable {
        let data = self
            .values
            .iter()
            .map(|f| f.iter().zip(w).map(|(a, b)| a * b).sum())
            .collect();
        UnaryTable {
            num_actors: self.num_actors,
            num_samples: self.num_samples,
            data,
        }
    }
}

fn check_sets(scene: &Scene, sets: &[TrajectorySet]) -> Result<usize> {
    if sets.len() != scene.actors.len() {
        return Err(Error::contract(format!(
            "{} trajectory sets for {} actors",
            sets.len(),
            scene.actors.len()
        )));
    }
    let k = sets.first().map_or(0, Vec::len);
    if sets.iter().any(|s| s.len() != k) || (!sets.is_empty() && k == 0) {
        return Err(Error::contract("every actor needs the same non-zero number of samples"));
    }
    Ok(k)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyWeights {
    /// One weight per entry of [`FEATURE_NAMES`].
    pub unary: [f64; NUM_FEATURES],
    /// Collision energy, charged twice per colliding unordered pair.
    pub gamma: f64,
}

impl Default for EnergyWeights {
    fn default() -> Self {
        EnergyWeights {
            unary: [0.5, 1.0, 0.5, 5.0, 0.5, 0.0],
            gamma: 5.0,
        }
    }
}

impl EnergyWeights {
    pub fn zero() -> Self {
        EnergyWeights {
            unary: [0.0; NUM_FEATURES],
            gamma: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.unary.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("unary energy weight".into()));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::config(format!(
                "gamma must be finite and >= 0, got {}",
                self.gamma
            )));
        }
        Ok(())
    }
}

/// Source of unary energies; the linear feature model is the built-in one.
pub trait EnergyModel: Sync {
    fn unary_row(&self, scene: &Scene, actor_index: usize, samples: &TrajectorySet) -> Result<Vec<f64>>;
}

impl EnergyModel for EnergyWeights {
    fn unary_row(&self, scene: &Scene, actor_index: usize, samples: &TrajectorySet) -> Result<Vec<f64>> {
        samples
            .iter()
            .map(|t| {
                let f = compute_features(scene, actor_index, t)?.values();
                Ok(f.iter().zip(&self.unary).map(|(a, b)| a * b).sum())
            })
            .collect()
    }
}

/// N x K unary energies, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnaryTable {
    pub num_actors: usize,
    pub num_samples: usize,
    pub data: Vec<f64>,
}

impl UnaryTable {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let k = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != k) || (n > 0 && k == 0) {
            return Err(Error::contract("unary rows must share one non-zero length"));
        }
        let data: Vec<f64> = rows.into_iter().flatten().collect();
        if let Some(v) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("unary energy {v}")));
        }
        Ok(UnaryTable {
            num_actors: n,
            num_samples: k,
            data,
        })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.num_samples..(i + 1) * self.num_samples]
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.data[i * self.num_samples + k]
    }
}

pub fn build_unary_table(scene: &Scene, sets: &[TrajectorySet], model: &impl EnergyModel) -> Result<UnaryTable> {
    check_sets(scene, sets)?;
    let rows = (0..sets.len())
        .into_par_iter()
        .map(|i| model.unary_row(scene, i, &sets[i]))
        .collect::<Result<Vec<_>>>()?;
    UnaryTable::from_rows(rows)
}

/// Sparse boolean matrix stored both row- and column-compressed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CollisionMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<u32>,
    col_idx: Vec<u32>,
    col_ptr: Vec<u32>,
    row_idx: Vec<u32>,
}

impl CollisionMatrix {
    /// Builds from `(row, col)` entries; duplicates are merged.
    pub fn from_entries(rows: usize, cols: usize, mut entries: Vec<(u32, u32)>) -> Result<Self> {
        if entries.iter().any(|&(r, c)| r as usize >= rows || c as usize >= cols) {
            return Err(Error::contract("collision entry out of range"));
        }
        entries.sort_unstable();
        entries.dedup();
        let (row_ptr, col_idx) = compress(rows, entries.iter().copied());
        let mut by_col: Vec<(u32, u32)> = entries.iter().map(|&(r, c)| (c, r)).collect();
        by_col.sort_unstable();
        let (col_ptr, row_idx) = compress(cols, by_col.into_iter());
        Ok(CollisionMatrix {
            rows,
            cols,
            row_ptr,
            col_idx,
            col_ptr,
            row_idx,
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut entries = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                if f(r, c) {
                    entries.push((r as u32, c as u32));
                }
            }
        }
        CollisionMatrix::from_entries(rows, cols, entries).expect("entries in range")
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.col_idx.is_empty()
    }

    /// Columns colliding with row `r`, ascending.
    pub fn row(&self, r: usize) -> &[u32] {
        &self.col_idx[self.row_ptr[r] as usize..self.row_ptr[r + 1] as usize]
    }

    /// Rows colliding with column `c`, ascending.
    pub fn col(&self, c: usize) -> &[u32] {
        &self.row_idx[self.col_ptr[c] as usize..self.col_ptr[c + 1] as usize]
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.row(r).binary_search(&(c as u32)).is_ok()
    }

    pub fn transpose(&self) -> Self {
        CollisionMatrix {
            rows: self.cols,
            cols: self.rows,
            row_ptr: self.col_ptr.clone(),
            col_idx: self.row_idx.clone(),
            col_ptr: self.row_ptr.clone(),
            row_idx: self.col_idx.clone(),
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<bool>> {
        (0..self.rows)
            .map(|r| (0..self.cols).map(|c| self.get(r, c)).collect())
            .collect()
    }
}

fn compress(n: usize, sorted: impl Iterator<Item = (u32, u32)>) -> (Vec<u32>, Vec<u32>) {
    let mut ptr = vec![0u32; n + 1];
    let mut idx = Vec::new();
    for (a, b) in sorted {
        ptr[a as usize + 1] += 1;
        idx.push(b);
    }
    for i in 0..n {
        ptr[i + 1] += ptr[i];
    }
    (ptr, idx)
}

/// Pair of interacting actors, `i < j`; matrix rows index samples of `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub matrix: CollisionMatrix,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CollisionEdges {
    pub num_actors: usize,
    pub num_samples: usize,
    edges: Vec<Edge>,
}

impl CollisionEdges {
    pub fn empty(num_actors: usize, num_samples: usize) -> Self {
        CollisionEdges {
            num_actors,
            num_samples,
            edges: Vec::new(),
        }
    }

    /// Accepts edges in either orientation and stores them as `i < j`,
    /// sorted by `(i, j)`.
    pub fn new(num_actors: usize, num_samples: usize, edges: Vec<Edge>) -> Result<Self> {
        let mut out = Vec::with_capacity(edges.len());
        for e in edges {
            if e.i == e.j {
                return Err(Error::contract(format!("self edge on actor {}", e.i)));
            }
            if e.i >= num_actors || e.j >= num_actors {
                return Err(Error::contract(format!("edge ({}, {}) out of range", e.i, e.j)));
            }
            if e.matrix.shape() != (num_samples, num_samples) {
                return Err(Error::contract(
                    "collision matrix shape does not match the sample count",
                ));
            }
            out.push(if e.i < e.j {
                e
            } else {
                Edge {
                    i: e.j,
                    j: e.i,
                    matrix: e.matrix.transpose(),
                }
            });
        }
        out.sort_by_key(|e| (e.i, e.j));
        if out.windows(2).any(|w| (w[0].i, w[0].j) == (w[1].i, w[1].j)) {
            return Err(Error::contract("duplicate edge"));
        }
        Ok(CollisionEdges {
            num_actors,
            num_samples,
            edges: out,
        })
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Collision matrix with rows indexing samples of `i`; `None` if the pair
    /// is not an edge.
    pub fn matrix(&self, i: usize, j: usize) -> Option<CollisionMatrix> {
        let (a, b) = (i.min(j), i.max(j));
        let e = self.find(a, b)?;
        Some(if i < j { e.matrix.clone() } else { e.matrix.transpose() })
    }

    fn find(&self, a: usize, b: usize) -> Option<&Edge> {
        self.edges
            .binary_search_by_key(&(a, b), |e| (e.i, e.j))
            .ok()
            .map(|p| &self.edges[p])
    }

    pub fn collide(&self, i: usize, ki: usize, j: usize, kj: usize) -> bool {
        match self.find(i.min(j), i.max(j)) {
            Some(e) if i < j => e.matrix.get(ki, kj),
            Some(e) => e.matrix.get(kj, ki),
            None => false,
        }
    }

    /// True when the interaction graph has a cycle.
    pub fn has_cycle(&self) -> bool {
        let mut parent: Vec<usize> = (0..self.num_actors).collect();
        fn root(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for e in &self.edges {
            let (a, b) = (root(&mut parent, e.i), root(&mut parent, e.j));
            if a == b {
                return true;
            }
            parent[a] = b;
        }
        false
    }
}

/// Trajectory poses prepared for repeated pairwise tests.
struct PreparedSet {
    /// `[sample][pose]`
    shapes: Vec<Vec<BoxShape>>,
    start: Vec2,
    reach: f64,
    half_diagonal: f64,
    lo: Vec2,
    hi: Vec2,
}

impl PreparedSet {
    fn new(set: &[Trajectory], fp: &Footprint) -> Self {
        let shapes: Vec<Vec<BoxShape>> = set.iter().map(|t| pose_shapes(t, fp)).collect();
        let hd = fp.half_diagonal();
        let (mut lo, mut hi) = (
            Vec2::new(f64::INFINITY, f64::INFINITY),
            Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY),
        );
        for s in shapes.iter().flatten() {
            lo = Vec2::new(lo.x.min(s.center.x - hd), lo.y.min(s.center.y - hd));
            hi = Vec2::new(hi.x.max(s.center.x + hd), hi.y.max(s.center.y + hd));
        }
        PreparedSet {
            start: set[0].start(),
            reach: set.iter().map(Trajectory::reach).fold(0.0, f64::max),
            half_diagonal: hd,
            shapes,
            lo,
            hi,
        }
    }

    fn bounds_overlap(&self, o: &PreparedSet) -> bool {
        self.lo.x <= o.hi.x && o.lo.x <= self.hi.x && self.lo.y <= o.hi.y && o.lo.y <= self.hi.y
    }
}

fn pair_matrix(a: &PreparedSet, b: &PreparedSet) -> CollisionMatrix {
    let (ka, kb) = (a.shapes.len(), b.shapes.len());
    let n_poses = a.shapes.first().map_or(0, Vec::len);
    let reach = a.half_diagonal + b.half_diagonal;
    let mut hit = vec![false; ka * kb];
    let mut order: Vec<(f64, u32)> = Vec::with_capacity(kb);
    for p in 0..n_poses {
        order.clear();
        order.extend(b.shapes.iter().enumerate().map(|(l, s)| (s[p].center.x, l as u32)));
        order.sort_unstable_by(|x, y| x.0.total_cmp(&y.0));
        for (k, sa) in a.shapes.iter().enumerate() {
            let pa = &sa[p];
            let start = order.partition_point(|&(x, _)| x < pa.center.x - reach);
            for &(x, l) in &order[start..] {
                if x > pa.center.x + reach {
                    break;
                }
                let cell = &mut hit[k * kb + l as usize];
                if *cell {
                    continue;
                }
                let pb = &b.shapes[l as usize][p];
                if pa.center.distance(pb.center) <= reach && pa.overlaps(pb) {
                    *cell = true;
                }
            }
        }
    }
    let entries = hit
        .iter()
        .enumerate()
        .filter(|(_, &h)| h)
        .map(|(idx, _)| ((idx / kb) as u32, (idx % kb) as u32))
        .collect();
    CollisionMatrix::from_entries(ka, kb, entries).expect("entries in range")
}

/// Collision matrices for every actor pair that can interact. A pair is
/// skipped when the initial separation exceeds `interaction_radius` plus both
/// actors' largest sample reach; the radius is raised to the sum of the two
/// footprints' half-diagonals if smaller, which keeps the skip exact.
pub fn build_collision_edges(
    sets: &[TrajectorySet],
    footprints: &[Footprint],
    interaction_radius: f64,
) -> Result<CollisionEdges> {
    if sets.len() != footprints.len() {
        return Err(Error::contract(format!(
            "{} trajectory sets for {} footprints",
            sets.len(),
            footprints.len()
        )));
    }
    let n = sets.len();
    let k = sets.first().map_or(0, Vec::len);
    if sets.iter().any(|s| s.len() != k) || (n > 0 && k == 0) {
        return Err(Error::contract("every actor needs the same non-zero number of samples"));
    }
    if n == 0 {
        return Ok(CollisionEdges::empty(0, 0));
    }
    let reference = &sets[0][0];
    for t in sets.iter().flatten() {
        ensure_same_grid(reference, t)?;
    }
    let prepared: Vec<PreparedSet> = sets
        .par_iter()
        .zip(footprints)
        .map(|(s, f)| PreparedSet::new(s, f))
        .collect();
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (&prepared[i], &prepared[j]);
            let radius = interaction_radius.max(a.half_diagonal + b.half_diagonal);
            if a.start.distance(b.start) <= radius + a.reach + b.reach && a.bounds_overlap(b) {
                pairs.push((i, j));
            }
        }
    }
    let edges: Vec<Edge> = pairs
        .par_iter()
        .map(|&(i, j)| Edge {
            i,
            j,
            matrix: pair_matrix(&prepared[i], &prepared[j]),
        })
        .collect();
    CollisionEdges::new(n, k, edges)
}

/// Collision matrix between two arbitrary trajectory sets; rows index `a`.
pub fn cross_collisions(a: &[Trajectory], fa: &Footprint, b: &[Trajectory], fb: &Footprint) -> Result<CollisionMatrix> {
    if a.is_empty() || b.is_empty() {
        return CollisionMatrix::from_entries(a.len(), b.len(), Vec::new());
    }
    for t in a.iter().chain(b) {
        ensure_same_grid(&a[0], t)?;
    }
    let (pa, pb) = (PreparedSet::new(a, fa), PreparedSet::new(b, fb));
    if !pa.bounds_overlap(&pb) {
        return CollisionMatrix::from_entries(a.len(), b.len(), Vec::new());
    }
    Ok(pair_matrix(&pa, &pb))
}

pub fn joint_energy(config: &[usize], unary: &UnaryTable, edges: &CollisionEdges, gamma: f64) -> Result<f64> {
    if config.len() != unary.num_actors {
        return Err(Error::contract(format!(
            "configuration has {} entries for {} actors",
            config.len(),
            unary.num_actors
        )));
    }
    if let Some((i, &k)) = config.iter().enumerate().find(|(_, &k)| k >= unary.num_samples) {
        return Err(Error::contract(format!("sample index {k} out of range for actor {i}")));
    }
    let mut e: f64 = config.iter().enumerate().map(|(i, &k)| unary.get(i, k)).sum();
    for edge in edges.edges() {
        if edge.matrix.get(config[edge.i], config[edge.j]) {
            e += 2.0 * gamma;
        }
    }
    Ok(e)
}
