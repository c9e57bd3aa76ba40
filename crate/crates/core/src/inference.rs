//! Sum-product message passing over the discrete sample space, and an exact
//! enumeration oracle for small instances.
//!
//! Messages live in the log domain. Because the pairwise potential only takes
//! the values `0` and `2 * gamma`, the update for one message is
//!
//! ```text
//! m_ij(l) = M + log(free(l) + exp(-2 gamma) * coll(l))
//! ```
//!
//! where `coll(l)` is the mass of sender samples colliding with receiver
//! sample `l` and `free(l) = total - coll(l)`, so each update costs one pass
//! over the sparse collision matrix instead of a dense K x K product.

use serde::{Deserialize, Serialize};

use crate::energy::{CollisionEdges, CollisionMatrix, UnaryTable};
use crate::error::{Error, Result};

pub const DEFAULT_ENUMERATION_BUDGET: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BpConfig {
    /// Maximum number of synchronous rounds.
    pub iterations: usize,
    /// Stop once the largest message change drops below this.
    pub tolerance: f64,
    /// Weight kept on the previous message, in [0, 1).
    pub damping: f64,
}

impl Default for BpConfig {
    fn default() -> Self {
        BpConfig {
            iterations: 5,
            tolerance: 1e-6,
            damping: 0.0,
        }
    }
}

impl BpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::config("BP needs at least one iteration"));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::config("BP tolerance must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.damping) {
            return Err(Error::config("BP damping must lie in [0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BpReport {
    pub iterations: usize,
    /// Largest absolute log-message change in each round.
    pub residuals: Vec<f64>,
    pub converged: bool,
}

/// Per-actor distributions over samples, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Marginals {
    pub num_actors: usize,
    pub num_samples: usize,
    pub probs: Vec<f64>,
}

impl Marginals {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let k = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::contract("marginal rows differ in length"));
        }
        Ok(Marginals {
            num_actors: n,
            num_samples: k,
            probs: rows.into_iter().flatten().collect(),
        })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.probs[i * self.num_samples..(i + 1) * self.num_samples]
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.probs[i * self.num_samples + k]
    }

    /// Most probable sample of actor `i`; ties go to the lowest index.
    pub fn argmax(&self, i: usize) -> usize {
        argmax(self.row(i))
    }

    pub fn argmax_all(&self) -> Vec<usize> {
        (0..self.num_actors).map(|i| self.argmax(i)).collect()
    }

    /// Point mass on each actor's most probable sample.
    pub fn point_mass(&self) -> Marginals {
        let mut probs = vec![0.0; self.probs.len()];
        for i in 0..self.num_actors {
            probs[i * self.num_samples + self.argmax(i)] = 1.0;
        }
        Marginals { probs, ..*self }
    }

    /// Sample indices of actor `i` sorted by decreasing probability, ties by
    /// index.
    pub fn ranked(&self, i: usize) -> Vec<usize> {
        let row = self.row(i);
        let mut idx: Vec<usize> = (0..row.len()).collect();
        idx.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
        idx
    }
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = k;
        }
    }
    best
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `softmax(-energies)`.
pub fn softmax_neg(energies: &[f64]) -> Vec<f64> {
    let neg: Vec<f64> = energies.iter().map(|e| -e).collect();
    let z = log_sum_exp(&neg);
    neg.iter().map(|x| (x - z).exp()).collect()
}

fn check_inputs(unary: &UnaryTable, edges: &CollisionEdges, gamma: f64) -> Result<()> {
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::config(format!("gamma must be finite and >= 0, got {gamma}")));
    }
    if edges.num_actors != unary.num_actors || (!edges.is_empty() && edges.num_samples != unary.num_samples) {
        return Err(Error::contract(format!(
            "edges cover {} actors x {} samples, unary table {} x {}",
            edges.num_actors, edges.num_samples, unary.num_actors, unary.num_samples
        )));
    }
    if let Some(v) = unary.data.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("unary energy {v}")));
    }
    Ok(())
}

/// Directed-message layout: edge `e` carries message `2e` from `edge.i` to
/// `edge.j` and `2e + 1` back.
pub(crate) struct Layout {
    /// Per actor, the directed messages it receives.
    pub incoming: Vec<Vec<usize>>,
}

impl Layout {
    pub fn new(edges: &CollisionEdges) -> Self {
        let mut incoming = vec![Vec::new(); edges.num_actors];
        for (e, edge) in edges.edges().iter().enumerate() {
            incoming[edge.j].push(2 * e);
            incoming[edge.i].push(2 * e + 1);
        }
        Layout { incoming }
    }
}

/// Log beliefs `-U_i + sum of incoming messages` for every actor.
pub(crate) fn beliefs(unary: &UnaryTable, layout: &Layout, msgs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    (0..unary.num_actors)
        .map(|i| {
            let mut b: Vec<f64> = unary.row(i).iter().map(|u| -u).collect();
            for &m in &layout.incoming[i] {
                for (x, y) in b.iter_mut().zip(&msgs[m]) {
                    *x += y;
                }
            }
            b
        })
        .collect()
}

/// One direction of an edge.
pub(crate) struct Directed<'a> {
    pub from: usize,
    /// Index of the message this direction produces.
    pub out: usize,
    /// Index of the message travelling the opposite way.
    pub back: usize,
    pub matrix: &'a CollisionMatrix,
    /// `from` indexes the matrix rows.
    pub from_rows: bool,
}

impl Directed<'_> {
    /// Sender samples colliding with receiver sample `l`.
    pub fn senders(&self, l: usize) -> &[u32] {
        if self.from_rows {
            self.matrix.col(l)
        } else {
            self.matrix.row(l)
        }
    }

    /// Receiver samples colliding with sender sample `s`.
    pub fn receivers(&self, s: usize) -> &[u32] {
        if self.from_rows {
            self.matrix.row(s)
        } else {
            self.matrix.col(s)
        }
    }
}

pub(crate) fn directed(edges: &CollisionEdges) -> impl Iterator<Item = Directed<'_>> {
    edges.edges().iter().enumerate().flat_map(|(e, edge)| {
        [
            Directed {
                from: edge.i,
                out: 2 * e,
                back: 2 * e + 1,
                matrix: &edge.matrix,
                from_rows: true,
            },
            Directed {
                from: edge.j,
                out: 2 * e + 1,
                back: 2 * e,
                matrix: &edge.matrix,
                from_rows: false,
            },
        ]
    })
}

/// Unnormalized log message from sender log-potentials `h`. Also returns
/// `max(h)` and the shifted weights `exp(h - max(h))`.
pub(crate) fn raw_message(d: &Directed, h: &[f64], decay: f64) -> (Vec<f64>, f64, Vec<f64>) {
    let m = h.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = h.iter().map(|x| (x - m).exp()).collect();
    let total: f64 = w.iter().sum();
    let raw = (0..h.len())
        .map(|l| {
            let senders = d.senders(l);
            let coll: f64 = senders.iter().map(|&s| w[s as usize]).sum();
            let mut free = total - coll;
            if free < 1e-8 * total {
                free = masked_complement(&w, senders);
            }
            m + (free + decay * coll).ln()
        })
        .collect();
    (raw, m, w)
}

/// One synchronous update of every message. Edges without any collision
/// keep the uniform message.
pub(crate) fn bp_round(
    unary: &UnaryTable,
    edges: &CollisionEdges,
    layout: &Layout,
    gamma: f64,
    msgs: &[Vec<f64>],
) -> Vec<Vec<f64>> {
    let k = unary.num_samples;
    let b = beliefs(unary, layout, msgs);
    let decay = (-2.0 * gamma).exp();
    let mut out = vec![Vec::new(); msgs.len()];
    for d in directed(edges) {
        if d.matrix.is_empty() {
            out[d.out] = msgs[d.out].clone();
            continue;
        }
        let h: Vec<f64> = (0..k).map(|s| b[d.from][s] - msgs[d.back][s]).collect();
        let (raw, _, _) = raw_message(&d, &h, decay);
        let z = log_sum_exp(&raw);
        out[d.out] = raw.into_iter().map(|r| r - z).collect();
    }
    out
}

/// Sum of `w` over indices not in the sorted list `skip`.
fn masked_complement(w: &[f64], skip: &[u32]) -> f64 {
    let mut it = skip.iter().peekable();
    let mut acc = 0.0;
    for (s, &x) in w.iter().enumerate() {
        if it.peek().is_some_and(|&&c| c as usize == s) {
            it.next();
        } else {
            acc += x;
        }
    }
    acc
}

pub(crate) fn uniform_messages(edges: &CollisionEdges, k: usize) -> Vec<Vec<f64>> {
    vec![vec![-(k as f64).ln(); k]; 2 * edges.len()]
}

pub(crate) fn normalize_beliefs(b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    b.iter()
        .map(|row| {
            let z = log_sum_exp(row);
            row.iter().map(|x| (x - z).exp()).collect()
        })
        .collect()
}

pub fn run_bp(unary: &UnaryTable, edges: &CollisionEdges, gamma: f64, cfg: &BpConfig) -> Result<(Marginals, BpReport)> {
    cfg.validate()?;
    check_inputs(unary, edges, gamma)?;
    let layout = Layout::new(edges);
    let k = unary.num_samples;
    let mut msgs = uniform_messages(edges, k);
    let mut residuals = Vec::new();
    let mut converged = false;
    for _ in 0..cfg.iterations {
        let mut next = bp_round(unary, edges, &layout, gamma, &msgs);
        if cfg.damping > 0.0 {
            for (n, o) in next.iter_mut().zip(&msgs) {
                for (x, y) in n.iter_mut().zip(o) {
                    *x = (1.0 - cfg.damping) * *x + cfg.damping * y;
                }
                let z = log_sum_exp(n);
                n.iter_mut().for_each(|x| *x -= z);
            }
        }
        let mut residual = 0.0f64;
        for (n, o) in next.iter().zip(&msgs) {
            for (x, y) in n.iter().zip(o) {
                if !x.is_finite() {
                    return Err(Error::NonFinite("BP message".into()));
                }
                residual = residual.max((x - y).abs());
            }
        }
        msgs = next;
        residuals.push(residual);
        if residual < cfg.tolerance {
            converged = true;
            break;
        }
    }
    let probs = normalize_beliefs(&beliefs(unary, &layout, &msgs));
    Ok((
        Marginals::from_rows(probs)?,
        BpReport {
            iterations: residuals.len(),
            residuals,
            converged,
        },
    ))
}

/// Per-actor argmax of the BP marginals; the engine's "most likely" joint
/// prediction.
pub fn map_configuration(unary: &UnaryTable, edges: &CollisionEdges, gamma: f64, cfg: &BpConfig) -> Result<Vec<usize>> {
    Ok(run_bp(unary, edges, gamma, cfg)?.0.argmax_all())
}

fn check_budget(unary: &UnaryTable, budget: u64) -> Result<()> {
    let configurations = (unary.num_samples as f64).powi(unary.num_actors as i32);
    if configurations > budget as f64 {
        return Err(Error::Budget { configurations, budget });
    }
    Ok(())
}

/// Visits every joint configuration with its energy.
fn enumerate(unary: &UnaryTable, edges: &CollisionEdges, gamma: f64, mut visit: impl FnMut(&[usize], f64)) {
    let (n, k) = (unary.num_actors, unary.num_samples);
    let dense: Vec<(usize, usize, Vec<bool>)> = edges
        .edges()
        .iter()
        .map(|e| {
            let mut d = vec![false; k * k];
            for r in 0..k {
                for &c in e.matrix.row(r) {
                    d[r * k + c as usize] = true;
                }
            }
            (e.i, e.j, d)
        })
        .collect();
    let mut config = vec![0usize; n];
    loop {
        let mut energy: f64 = config.iter().enumerate().map(|(i, &s)| unary.get(i, s)).sum();
        for (i, j, d) in &dense {
            if d[config[*i] * k + config[*j]] {
                energy += 2.0 * gamma;
            }
        }
        visit(&config, energy);
        let mut pos = 0;
        loop {
            if pos == n {
                return;
            }
            config[pos] += 1;
            if config[pos] < k {
                break;
            }
            config[pos] = 0;
            pos += 1;
        }
    }
}

/// Exact marginals by enumerating all `K^N` configurations.
pub fn exact_marginals(unary: &UnaryTable, edges: &CollisionEdges, gamma: f64, budget: u64) -> Result<Marginals> {
    check_inputs(unary, edges, gamma)?;
    check_budget(unary, budget)?;
    let (n, k) = (unary.num_actors, unary.num_samples);
    let mut acc = vec![0.0; n * k];
    // Weights are kept relative to `shift`, the largest -E seen so far.
    let mut shift = f64::NEG_INFINITY;
    enumerate(unary, edges, gamma, |config, energy| {
        let logw = -energy;
        if logw > shift {
            let scale = (shift - logw).exp();
            acc.iter_mut().for_each(|a| *a *= scale);
            shift = logw;
        }
        let w = (logw - shift).exp();
        for (i, &s) in config.iter().enumerate() {
            acc[i * k + s] += w;
        }
    });
    let rows = (0..n)
        .map(|i| {
            let row = &acc[i * k..(i + 1) * k];
            let z: f64 = row.iter().sum();
            row.iter().map(|a| a / z).collect()
        })
        .collect();
    Marginals::from_rows(rows)
}

/// Lowest-energy joint configuration by enumeration; ties go to the first
/// configuration in odometer order (actor 0 varying fastest).
pub fn exact_map(unary: &UnaryTable, edges: &CollisionEdges, gamma: f64, budget: u64) -> Result<Vec<usize>> {
    check_inputs(unary, edges, gamma)?;
    check_budget(unary, budget)?;
    let mut best = (f64::INFINITY, vec![0; unary.num_actors]);
    enumerate(unary, edges, gamma, |config, energy| {
        if energy < best.0 {
            best = (energy, config.to_vec());
        }
    });
    Ok(best.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::{CollisionMatrix, Edge};

    fn table(rows: Vec<Vec<f64>>) -> UnaryTable {
        UnaryTable::from_rows(rows).unwrap()
    }

    #[test]
    fn single_actor_is_softmax() {
        let u = table(vec![vec![0.0, 5.0, 5.0]]);
        let edges = CollisionEdges::empty(1, 3);
        let (m, r) = run_bp(&u, &edges, 3.0, &BpConfig::default()).unwrap();
        assert_eq!(r.iterations, 1);
        assert!(r.converged);
        let s = softmax_neg(u.row(0));
        for (k, sk) in s.iter().enumerate() {
            assert!((m.get(0, k) - sk).abs() < 1e-15);
        }
        assert_eq!(
            map_configuration(&u, &edges, 3.0, &BpConfig::default()).unwrap(),
            vec![0]
        );
        let e = exact_marginals(&u, &edges, 3.0, DEFAULT_ENUMERATION_BUDGET).unwrap();
        for (k, sk) in s.iter().enumerate() {
            assert!((e.get(0, k) - sk).abs() < 1e-15);
        }
    }

    #[test]
    fn symmetric_pair() {
        // Zero unaries, both samples of each actor collide only with the
        // same-index sample of the other: colliding configs weigh e^{-2 gamma}.
        let gamma: f64 = 0.7;
        let u = table(vec![vec![0.0, 0.0], vec![0.0, 0.0]]);
        let m = CollisionMatrix::from_entries(2, 2, vec![(0, 0)]).unwrap();
        let edges = CollisionEdges::new(2, 2, vec![Edge { i: 0, j: 1, matrix: m }]).unwrap();
        let e = exact_marginals(&u, &edges, gamma, 100).unwrap();
        let w = (-2.0 * gamma).exp();
        let p0 = (w + 1.0) / (w + 3.0);
        assert!((e.get(0, 0) - p0).abs() < 1e-15);
        let (bp, _) = run_bp(&u, &edges, gamma, &BpConfig::default()).unwrap();
        assert!((bp.get(1, 0) - p0).abs() < 1e-12);
    }

    #[test]
    fn fully_colliding_edge_stays_finite() {
        let u = table(vec![vec![0.0, 1.0], vec![2.0, 0.0]]);
        let m = CollisionMatrix::from_fn(2, 2, |_, _| true);
        let edges = CollisionEdges::new(2, 2, vec![Edge { i: 0, j: 1, matrix: m }]).unwrap();
        let (bp, _) = run_bp(&u, &edges, 50.0, &BpConfig::default()).unwrap();
        let e = exact_marginals(&u, &edges, 50.0, 100).unwrap();
        for (a, b) in bp.probs.iter().zip(&e.probs) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn budget_is_enforced() {
        let u = table(vec![vec![0.0; 10]; 8]);
        let edges = CollisionEdges::empty(8, 10);
        assert!(matches!(
            exact_marginals(&u, &edges, 1.0, DEFAULT_ENUMERATION_BUDGET),
            Err(Error::Budget { .. })
        ));
    }

    #[test]
    fn ranked_breaks_ties_by_index() {
        let m = Marginals::from_rows(vec![vec![0.2, 0.4, 0.4]]).unwrap();
        assert_eq!(m.ranked(0), vec![1, 2, 0]);
        assert_eq!(m.argmax(0), 1);
        assert_eq!(m.point_mass().row(0), &[0.0, 1.0, 0.0]);
    }
}
