//! Problem instance: agents, desired formation, obstacles and the scalar
//! parameters of the controller, plus validation of the standing
//! assumptions a scenario must satisfy before it can be simulated.

mod file;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use crate::geom::distance as pairwise_distance;
use crate::geom::Vec2;
use crate::switching::LinkFailureModel;
pub use file::{AgentEntry, EdgeEntry, FailuresEntry, OutageEntry, RandomFailuresEntry, ScenarioFile};

/// Relative area below which a point set counts as co-linear.
pub const COLINEAR_TOLERANCE: f64 = 1e-9;

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("failed to read scenario file: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to parse scenario file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("agent id {0} is out of range (agents are numbered 1..={1})")]
    UnknownAgent(usize, usize),
    #[error("agent ids must be 1..=N in order; found id {found} at position {position}")]
    AgentOrder { position: usize, found: usize },
    #[error("formation edge ({0}, {0}) is a self-loop")]
    SelfLoop(usize),
    #[error("formation edge ({0}, {1}) is listed more than once")]
    DuplicateEdge(usize, usize),
    #[error("unsupported failure mode {0:?} (expected \"random\")")]
    FailureMode(String),
    #[error("scenario has no agents")]
    Empty,
}

/// One agent's position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentState {
    /// 1-based agent index as written in scenario files and reports.
    pub id: usize,
    pub q: Vec2,
}

/// Desired relative positions `c_ij = q_i - q_j` over a fixed neighbor graph.
///
/// Agents are indexed from zero internally. The reverse of every edge is
/// filled in with the negated offset unless the caller supplied it
/// explicitly, in which case both entries are kept as given so that
/// [`validate_scenario`] can report a mismatch.
#[derive(Debug, Clone, PartialEq)]
pub struct FormationSpec {
    n: usize,
    offsets: BTreeMap<(usize, usize), Vec2>,
    neighbors: Vec<Vec<usize>>,
}

impl FormationSpec {
    pub fn new(
        n: usize,
        edges: impl IntoIterator<Item = (usize, usize, Vec2)>,
    ) -> Result<Self, ScenarioError> {
        let mut given = BTreeMap::new();
        for (i, j, c) in edges {
            if i >= n {
                return Err(ScenarioError::UnknownAgent(i + 1, n));
            }
            if j >= n {
                return Err(ScenarioError::UnknownAgent(j + 1, n));
            }
            if i == j {
                return Err(ScenarioError::SelfLoop(i + 1));
            }
            if given.insert((i, j), c).is_some() {
                return Err(ScenarioError::DuplicateEdge(i + 1, j + 1));
            }
        }
        let mut offsets = given.clone();
        for (&(i, j), &c) in &given {
            offsets.entry((j, i)).or_insert(-c);
        }
        let mut neighbors = vec![Vec::new(); n];
        for &(i, j) in offsets.keys() {
            neighbors[i].push(j);
        }
        Ok(FormationSpec {
            n,
            offsets,
            neighbors,
        })
    }

    pub fn agent_count(&self) -> usize {
        self.n
    }

    /// Desired `q_i - q_j`, if `j` is a formation neighbor of `i`.
    pub fn offset(&self, i: usize, j: usize) -> Option<Vec2> {
        self.offsets.get(&(i, j)).copied()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn is_neighbor(&self, i: usize, j: usize) -> bool {
        self.offsets.contains_key(&(i, j))
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    /// Smallest neighbor-set size over all agents.
    pub fn min_degree(&self) -> usize {
        self.neighbors.iter().map(Vec::len).min().unwrap_or(0)
    }

    /// Directed edges `(i, j, c_ij)` in index order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, Vec2)> + '_ {
        self.offsets.iter().map(|(&(i, j), &c)| (i, j, c))
    }

    /// Undirected formation pairs with `i < j`.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.offsets.keys().copied().filter(|&(i, j)| i < j)
    }

    /// Neighbor positions paired with offsets, the input of the goal function.
    pub fn neighbor_terms(&self, i: usize, positions: &[Vec2]) -> Vec<(Vec2, Vec2)> {
        self.neighbors[i]
            .iter()
            .map(|&j| (positions[j], self.offsets[&(i, j)]))
            .collect()
    }

    /// Residual `q_i - q_j - c_ij`.
    pub fn residual(&self, i: usize, j: usize, positions: &[Vec2]) -> Option<Vec2> {
        self.offset(i, j).map(|c| positions[i] - positions[j] - c)
    }

    /// Largest `|q_i - q_j - c_ij|` over all formation edges.
    pub fn max_residual(&self, positions: &[Vec2]) -> f64 {
        self.edges()
            .map(|(i, j, c)| (positions[i] - positions[j] - c).norm())
            .fold(0.0, f64::max)
    }

    /// One goal configuration per connected component, anchored at the
    /// component's lowest-indexed agent position.
    pub fn realize(&self, anchors: &[Vec2]) -> Vec<Vec2> {
        let mut goal: Vec<Option<Vec2>> = vec![None; self.n];
        for root in 0..self.n {
            if goal[root].is_some() {
                continue;
            }
            goal[root] = Some(anchors[root]);
            let mut stack = vec![root];
            while let Some(i) = stack.pop() {
                let qi = goal[i].unwrap();
                for &j in &self.neighbors[i] {
                    if goal[j].is_none() {
                        goal[j] = Some(qi - self.offsets[&(i, j)]);
                        stack.push(j);
                    }
                }
            }
        }
        goal.into_iter().map(Option::unwrap).collect()
    }
}

/// Stationary point obstacles.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ObstacleSet {
    points: Vec<Vec2>,
}

impl ObstacleSet {
    pub fn new(points: Vec<Vec2>) -> Self {
        ObstacleSet { points }
    }

    pub fn points(&self) -> &[Vec2] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Controller and constraint parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    /// Maximal sensing radius.
    #[serde(rename = "R_s")]
    pub sensing_radius: f64,
    /// Radius of the collision region around each agent.
    pub delta_1: f64,
    /// Width of the connectivity buffer below the sensing radius.
    pub delta_2: f64,
    /// Navigation function exponent.
    pub k: f64,
    /// Control gain.
    #[serde(rename = "Gamma")]
    pub gain: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Integration {
    pub dt: f64,
    pub t_final: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Integration {
    /// Number of integration steps covering `[0, t_final]`.
    pub fn steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }
}

/// Axis-aligned box the agents are expected to stay in. Used only for
/// validation and plot framing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Workspace {
    pub min: Vec2,
    pub max: Vec2,
}

impl Workspace {
    pub fn contains(&self, q: Vec2) -> bool {
        q.x >= self.min.x && q.x <= self.max.x && q.y >= self.min.y && q.y <= self.max.y
    }
}

/// Constants entering the ultimate-bound threshold `c_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundConstants {
    pub rho1_bar: f64,
    pub rho2_bar: f64,
    pub beta_under: f64,
}

/// Settings for the runtime monitors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonitorConfig {
    /// Minimum admissible clearance between any two bodies.
    #[serde(default = "MonitorConfig::default_clearance")]
    pub epsilon_col: f64,
    /// Lyapunov slack is `c_eta * dt^2`.
    #[serde(default = "MonitorConfig::default_slack")]
    pub c_eta: f64,
    /// Residual threshold for the fallback Lyapunov check, used when no
    /// bound constants are configured.
    #[serde(rename = "epsilon_V", default = "MonitorConfig::default_residual")]
    pub epsilon_v: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<BoundConstants>,
}

impl MonitorConfig {
    fn default_clearance() -> f64 {
        1e-3
    }
    fn default_slack() -> f64 {
        1.0
    }
    fn default_residual() -> f64 {
        1e-2
    }
}

impl Default for MonitorConfig {
    fn default() -> Self {
        MonitorConfig {
            epsilon_col: Self::default_clearance(),
            c_eta: Self::default_slack(),
            epsilon_v: Self::default_residual(),
            bound: None,
        }
    }
}

/// A complete problem instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub agents: Vec<AgentState>,
    pub formation: FormationSpec,
    pub obstacles: ObstacleSet,
    pub params: Params,
    pub failures: LinkFailureModel,
    pub integration: Integration,
    pub workspace: Option<Workspace>,
    pub monitors: MonitorConfig,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        let file: ScenarioFile = toml::from_str(text)?;
        file.into_scenario()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&ScenarioFile::from_scenario(self))
            .expect("scenario values are always representable in TOML")
    }

    pub fn agent_count(&self) -> usize {
        self.agents.len()
    }

    pub fn initial_positions(&self) -> Vec<Vec2> {
        self.agents.iter().map(|a| a.q).collect()
    }
}

/// A violated standing assumption. Agent indices are zero-based; `Display`
/// prints them 1-based.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    InvalidParameter {
        name: &'static str,
        value: f64,
        requirement: &'static str,
    },
    Antisymmetry {
        i: usize,
        j: usize,
        c_ij: Vec2,
        c_ji: Vec2,
    },
    /// `|c_ij| <= delta_1`: the goal places neighbors inside each other's
    /// collision region. Advisory; see [`Violation::is_blocking`].
    AchievabilityLow {
        i: usize,
        j: usize,
        norm: f64,
        delta_1: f64,
    },
    /// `|c_ij| >= R_s - delta_2`: the goal lies in or beyond the
    /// connectivity buffer.
    AchievabilityHigh {
        i: usize,
        j: usize,
        norm: f64,
        limit: f64,
    },
    InitialContainment {
        i: usize,
        j: usize,
        distance: f64,
        sensing_radius: f64,
    },
    Colinear,
    OutsideWorkspace {
        agent: usize,
        q: Vec2,
    },
}

impl Violation {
    /// Whether the scenario must be rejected before simulation.
    ///
    /// A goal offset inside the collision radius leaves `phi_i` minimized at
    /// the goal (`gamma_i = 0` there regardless of `beta_i`), so it is
    /// reported but does not block a run.
    pub fn is_blocking(&self) -> bool {
        !matches!(self, Violation::AchievabilityLow { .. })
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Violation::InvalidParameter {
                name,
                value,
                requirement,
            } => write!(f, "parameter {name} = {value} violates {requirement}"),
            Violation::Antisymmetry { i, j, c_ij, c_ji } => write!(
                f,
                "antisymmetry: c_{}{} = {c_ij} but c_{}{} = {c_ji}",
                i + 1,
                j + 1,
                j + 1,
                i + 1
            ),
            Violation::AchievabilityLow { i, j, norm, delta_1 } => write!(
                f,
                "achievability (advisory): |c_{}{}| = {norm} <= delta_1 = {delta_1}",
                i + 1,
                j + 1
            ),
            Violation::AchievabilityHigh { i, j, norm, limit } => write!(
                f,
                "achievability: |c_{}{}| = {norm} >= R_s - delta_2 = {limit}",
                i + 1,
                j + 1
            ),
            Violation::InitialContainment {
                i,
                j,
                distance,
                sensing_radius,
            } => write!(
                f,
                "initial containment: d_{}{} = {distance} >= R_s = {sensing_radius}",
                i + 1,
                j + 1
            ),
            Violation::Colinear => write!(f, "agents and goals are co-linear"),
            Violation::OutsideWorkspace { agent, q } => {
                write!(f, "agent {} at {q} lies outside the workspace", agent + 1)
            }
        }
    }
}

/// Every violated assumption of `s`, in a fixed order. Empty when valid.
pub fn validate_scenario(s: &Scenario) -> Vec<Violation> {
    let mut out = Vec::new();
    let p = &s.params;
    let mut param = |ok: bool, name, value, requirement| {
        if !ok {
            out.push(Violation::InvalidParameter {
                name,
                value,
                requirement,
            });
        }
    };
    param(p.sensing_radius > 0.0, "R_s", p.sensing_radius, "R_s > 0");
    param(
        p.delta_1 > 0.0 && p.delta_1 < p.sensing_radius,
        "delta_1",
        p.delta_1,
        "0 < delta_1 < R_s",
    );
    param(
        p.delta_2 > 0.0 && p.delta_2 < p.sensing_radius,
        "delta_2",
        p.delta_2,
        "0 < delta_2 < R_s",
    );
    param(p.k >= 1.0, "k", p.k, "k >= 1");
    param(p.gain > 0.0, "Gamma", p.gain, "Gamma > 0");
    let int = &s.integration;
    param(int.dt > 0.0, "dt", int.dt, "dt > 0");
    param(int.t_final > 0.0, "t_final", int.t_final, "t_final > 0");
    if let LinkFailureModel::Random(r) = &s.failures {
        param(
            (0.0..=1.0).contains(&r.p_fail),
            "p_fail",
            r.p_fail,
            "0 <= p_fail <= 1",
        );
        param(r.dwell_min > 0.0, "tau", r.dwell_min, "tau > 0");
        param(
            r.dwell_max > r.dwell_min,
            "T",
            r.dwell_max,
            "T > tau",
        );
        // at least one whole step must fit strictly inside (tau, T)
        let lo = (r.dwell_min / int.dt).floor() + 1.0;
        param(
            lo * int.dt < r.dwell_max,
            "T",
            r.dwell_max,
            "some multiple of dt in (tau, T)",
        );
    }

    let positions = s.initial_positions();
    let formation = &s.formation;
    for (i, j, c_ij) in formation.edges() {
        if i > j {
            continue;
        }
        let c_ji = formation.offset(j, i).expect("reverse edge always stored");
        if c_ij != -c_ji {
            out.push(Violation::Antisymmetry { i, j, c_ij, c_ji });
        }
        let norm = c_ij.norm();
        if norm <= p.delta_1 {
            out.push(Violation::AchievabilityLow {
                i,
                j,
                norm,
                delta_1: p.delta_1,
            });
        }
        let limit = p.sensing_radius - p.delta_2;
        if norm >= limit {
            out.push(Violation::AchievabilityHigh { i, j, norm, limit });
        }
        let d = pairwise_distance(positions[i], positions[j]);
        if d >= p.sensing_radius {
            out.push(Violation::InitialContainment {
                i,
                j,
                distance: d,
                sensing_radius: p.sensing_radius,
            });
        }
    }

    let mut points = positions.clone();
    points.extend(formation.realize(&positions));
    if is_colinear(&points) {
        out.push(Violation::Colinear);
    }

    if let Some(ws) = &s.workspace {
        for (agent, &q) in positions.iter().enumerate() {
            if !ws.contains(q) {
                out.push(Violation::OutsideWorkspace { agent, q });
            }
        }
    }
    out
}

/// True when every point lies within relative area [`COLINEAR_TOLERANCE`]
/// of the line through the two most distant points.
pub fn is_colinear(points: &[Vec2]) -> bool {
    let mut far = (0, 0, 0.0);
    for a in 0..points.len() {
        for b in a + 1..points.len() {
            let d = (points[b] - points[a]).norm_sq();
            if d > far.2 {
                far = (a, b, d);
            }
        }
    }
    let (a, b, len_sq) = far;
    if len_sq == 0.0 {
        return true;
    }
    let axis = points[b] - points[a];
    points
        .iter()
        .all(|&p| (axis.cross(p - points[a]) / len_sq).abs() < COLINEAR_TOLERANCE)
}
