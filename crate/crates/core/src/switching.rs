//! Time-varying sensing graph, intermittent link failures and the switched
//! control law.
//!
//! Failures are realized once per run as a [`FailureTimeline`]: a sequence
//! of epochs aligned to integrator steps, inside which the set of failed
//! links is constant. A link is sensed at a step iff it is in range and not
//! failed during that step's epoch.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geom::{distance, Vec2};
use crate::model::{FormationSpec, Integration};
use crate::navigation::NavigationEval;

/// A scheduled failure of one link over `[from, to)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outage {
    /// Zero-based agent pair, smaller index first.
    pub pair: (usize, usize),
    pub from: f64,
    pub to: f64,
}

/// Random failure process: epoch lengths uniform in `(dwell_min, dwell_max)`,
/// each link failing independently with probability `p_fail` per epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomFailures {
    pub p_fail: f64,
    pub dwell_min: f64,
    pub dwell_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LinkFailureModel {
    Schedule(Vec<Outage>),
    Random(RandomFailures),
}

impl Default for LinkFailureModel {
    fn default() -> Self {
        LinkFailureModel::Schedule(Vec::new())
    }
}

/// Step range `[start, end)` with a fixed set of failed links.
#[derive(Debug, Clone, PartialEq)]
pub struct Epoch {
    pub start: usize,
    pub end: usize,
    down: Vec<bool>,
}

impl Epoch {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

/// Smallest and largest step counts strictly inside `(lo, hi)` time units.
fn strict_step_range(lo: f64, hi: f64, dt: f64) -> (usize, usize) {
    let snap = |x: f64| {
        let r = x.round();
        ((x - r).abs() < 1e-9).then_some(r)
    };
    let a = lo / dt;
    let b = hi / dt;
    let first = snap(a).map_or(a.ceil(), |r| r + 1.0);
    let last = snap(b).map_or(b.floor(), |r| r - 1.0);
    (first.max(1.0) as usize, last.max(0.0) as usize)
}

/// A realized switching signal over the whole horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct FailureTimeline {
    n: usize,
    dt: f64,
    steps: usize,
    epochs: Vec<Epoch>,
}

impl FailureTimeline {
    pub fn new(model: &LinkFailureModel, n: usize, integration: &Integration) -> Self {
        let dt = integration.dt;
        let steps = integration.steps();
        let epochs = match model {
            LinkFailureModel::Schedule(outages) => Self::scheduled(outages, n, dt, steps),
            LinkFailureModel::Random(r) => Self::random(r, n, dt, steps, integration.seed),
        };
        FailureTimeline {
            n,
            dt,
            steps,
            epochs,
        }
    }

    fn scheduled(outages: &[Outage], n: usize, dt: f64, steps: usize) -> Vec<Epoch> {
        let snap = |t: f64| ((t / dt).round().max(0.0) as usize).min(steps);
        let spans: Vec<_> = outages
            .iter()
            .map(|o| (o.pair, snap(o.from), snap(o.to)))
            .collect();
        let mut cuts = vec![0, steps];
        for &(_, a, b) in &spans {
            cuts.extend([a, b]);
        }
        cuts.sort_unstable();
        cuts.dedup();
        cuts.windows(2)
            .map(|w| {
                let mut down = vec![false; n * n];
                for &((i, j), a, b) in &spans {
                    if a <= w[0] && w[0] < b {
                        down[i * n + j] = true;
                        down[j * n + i] = true;
                    }
                }
                Epoch {
                    start: w[0],
                    end: w[1],
                    down,
                }
            })
            .collect()
    }

    fn random(r: &RandomFailures, n: usize, dt: f64, steps: usize, seed: u64) -> Vec<Epoch> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (lo, hi) = strict_step_range(r.dwell_min, r.dwell_max, dt);
        let hi = hi.max(lo);
        let mut epochs = Vec::new();
        let mut start = 0;
        // always realize at least one epoch so that step 0 is covered
        loop {
            let len = rng.gen_range(lo..=hi);
            let mut down = vec![false; n * n];
            for i in 0..n {
                for j in i + 1..n {
                    if rng.gen_bool(r.p_fail.clamp(0.0, 1.0)) {
                        down[i * n + j] = true;
                        down[j * n + i] = true;
                    }
                }
            }
            let end = (start + len).min(steps.max(1));
            epochs.push(Epoch { start, end, down });
            start = end;
            if start >= steps {
                break;
            }
        }
        epochs
    }

    pub fn epochs(&self) -> &[Epoch] {
        &self.epochs
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Step index at which each switch occurs.
    pub fn switch_steps(&self) -> impl Iterator<Item = usize> + '_ {
        self.epochs.iter().skip(1).map(|e| e.start)
    }

    pub fn epoch_index(&self, step: usize) -> usize {
        let step = step.min(self.steps.saturating_sub(1));
        self.epochs
            .partition_point(|e| e.end <= step)
            .min(self.epochs.len() - 1)
    }

    pub fn is_down(&self, step: usize, i: usize, j: usize) -> bool {
        self.epochs[self.epoch_index(step)].down[i * self.n + j]
    }
}

/// Undirected snapshot of which pairs currently sense each other.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SensingGraph {
    n: usize,
    up: Vec<bool>,
}

impl SensingGraph {
    pub fn from_fn(n: usize, mut link: impl FnMut(usize, usize) -> bool) -> Self {
        let mut up = vec![false; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let l = link(i, j);
                up[i * n + j] = l;
                up[j * n + i] = l;
            }
        }
        SensingGraph { n, up }
    }

    pub fn complete(n: usize) -> Self {
        Self::from_fn(n, |_, _| true)
    }

    pub fn agent_count(&self) -> usize {
        self.n
    }

    pub fn is_up(&self, i: usize, j: usize) -> bool {
        self.up[i * self.n + j]
    }

    /// Agents currently sensed by `i`.
    pub fn sensed_by(&self, i: usize) -> Vec<usize> {
        (0..self.n).filter(|&j| self.is_up(i, j)).collect()
    }
}

/// Sensing graph at time `t`: a link is up iff the pair is strictly within
/// the sensing radius and not failed.
pub fn sensing_graph_at(
    t: f64,
    positions: &[Vec2],
    timeline: &FailureTimeline,
    sensing_radius: f64,
) -> SensingGraph {
    let step = (t / timeline.dt()).round().max(0.0) as usize;
    sensing_graph_at_step(step, positions, timeline, sensing_radius)
}

pub fn sensing_graph_at_step(
    step: usize,
    positions: &[Vec2],
    timeline: &FailureTimeline,
    sensing_radius: f64,
) -> SensingGraph {
    SensingGraph::from_fn(positions.len(), |i, j| {
        distance(positions[i], positions[j]) < sensing_radius && !timeline.is_down(step, i, j)
    })
}

/// Partition of the agents into those sensing all formation neighbors
/// (`V_f`) and the rest (`V_u`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActiveSets {
    full: Vec<bool>,
}

impl ActiveSets {
    pub fn from_membership(full: Vec<bool>) -> Self {
        ActiveSets { full }
    }

    pub fn all(n: usize) -> Self {
        ActiveSets {
            full: vec![true; n],
        }
    }

    pub fn agent_count(&self) -> usize {
        self.full.len()
    }

    pub fn in_vf(&self, i: usize) -> bool {
        self.full[i]
    }

    pub fn vf(&self) -> Vec<usize> {
        (0..self.full.len()).filter(|&i| self.full[i]).collect()
    }

    pub fn vu(&self) -> Vec<usize> {
        (0..self.full.len()).filter(|&i| !self.full[i]).collect()
    }

    pub fn is_all_vu(&self) -> bool {
        self.full.iter().all(|f| !f)
    }
}

pub fn partition_active(graph: &SensingGraph, formation: &FormationSpec) -> ActiveSets {
    let full = (0..graph.agent_count())
        .map(|i| formation.neighbors(i).iter().all(|&j| graph.is_up(i, j)))
        .collect();
    ActiveSets { full }
}

/// Switched controller: gradient descent on `phi_i` when all formation
/// neighbors are sensed, otherwise stand still.
pub fn control_input(i: usize, active: &ActiveSets, nav: &NavigationEval, gain: f64) -> Vec2 {
    if active.in_vf(i) {
        -nav.grad_phi * gain
    } else {
        Vec2::ZERO
    }
}

/// Whether every agent belongs to `V_f` at some point of the window.
pub fn coverage_satisfied(window: &[ActiveSets]) -> bool {
    let Some(first) = window.first() else {
        return false;
    };
    (0..first.agent_count()).all(|i| window.iter().any(|a| a.in_vf(i)))
}

/// Whether the closed formation neighborhoods of the agents that were in
/// `V_f` somewhere in the window cover all agents.
pub fn neighborhood_coverage(window: &[ActiveSets], formation: &FormationSpec) -> bool {
    let n = formation.agent_count();
    let mut hit = vec![false; n];
    for a in window {
        for i in a.vf() {
            hit[i] = true;
            for &j in formation.neighbors(i) {
                hit[j] = true;
            }
        }
    }
    !window.is_empty() && hit.into_iter().all(|h| h)
}
