//! On-disk scenario layout (TOML). Agent ids are 1-based in files.

use serde::{Deserialize, Serialize};

use super::{
    AgentState, FormationSpec, Integration, MonitorConfig, ObstacleSet, Params, Scenario,
    ScenarioError, Workspace,
};
use crate::geom::Vec2;
use crate::switching::{LinkFailureModel, Outage, RandomFailures};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub obstacles: Vec<Vec2>,
    pub params: Params,
    pub integration: Integration,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workspace: Option<Workspace>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub monitors: Option<MonitorConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failures: Option<FailuresEntry>,
    pub agents: Vec<AgentEntry>,
    #[serde(default)]
    pub formation_edges: Vec<EdgeEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentEntry {
    pub id: usize,
    pub q: Vec2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeEntry {
    pub pair: [usize; 2],
    /// Desired `q_i - q_j` for `pair = [i, j]`.
    pub c: Vec2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FailuresEntry {
    Schedule(Vec<OutageEntry>),
    Random(RandomFailuresEntry),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutageEntry {
    pub pair: [usize; 2],
    pub from: f64,
    pub to: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomFailuresEntry {
    pub mode: String,
    pub p_fail: f64,
    pub tau: f64,
    #[serde(rename = "T")]
    pub t_max: f64,
}

fn agent_index(id: usize, n: usize) -> Result<usize, ScenarioError> {
    if id == 0 || id > n {
        Err(ScenarioError::UnknownAgent(id, n))
    } else {
        Ok(id - 1)
    }
}

impl ScenarioFile {
    pub fn into_scenario(self) -> Result<Scenario, ScenarioError> {
        let n = self.agents.len();
        if n == 0 {
            return Err(ScenarioError::Empty);
        }
        let agents = self
            .agents
            .iter()
            .enumerate()
            .map(|(position, a)| {
                if a.id != position + 1 {
                    return Err(ScenarioError::AgentOrder {
                        position: position + 1,
                        found: a.id,
                    });
                }
                Ok(AgentState { id: a.id, q: a.q })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let edges = self
            .formation_edges
            .iter()
            .map(|e| Ok((agent_index(e.pair[0], n)?, agent_index(e.pair[1], n)?, e.c)))
            .collect::<Result<Vec<_>, ScenarioError>>()?;
        let formation = FormationSpec::new(n, edges)?;
        let failures = match self.failures {
            None => LinkFailureModel::Schedule(Vec::new()),
            Some(FailuresEntry::Schedule(list)) => LinkFailureModel::Schedule(
                list.iter()
                    .map(|o| {
                        let (i, j) = (agent_index(o.pair[0], n)?, agent_index(o.pair[1], n)?);
                        if i == j {
                            return Err(ScenarioError::SelfLoop(o.pair[0]));
                        }
                        Ok(Outage {
                            pair: (i.min(j), i.max(j)),
                            from: o.from,
                            to: o.to,
                        })
                    })
                    .collect::<Result<_, _>>()?,
            ),
            Some(FailuresEntry::Random(r)) => {
                if r.mode != "random" {
                    return Err(ScenarioError::FailureMode(r.mode));
                }
                LinkFailureModel::Random(RandomFailures {
                    p_fail: r.p_fail,
                    dwell_min: r.tau,
                    dwell_max: r.t_max,
                })
            }
        };
        Ok(Scenario {
            agents,
            formation,
            obstacles: ObstacleSet::new(self.obstacles),
            params: self.params,
            failures,
            integration: self.integration,
            workspace: self.workspace,
            monitors: self.monitors.unwrap_or_default(),
        })
    }

    pub fn from_scenario(s: &Scenario) -> Self {
        let failures = match &s.failures {
            LinkFailureModel::Schedule(list) if list.is_empty() => None,
            LinkFailureModel::Schedule(list) => Some(FailuresEntry::Schedule(
                list.iter()
                    .map(|o| OutageEntry {
                        pair: [o.pair.0 + 1, o.pair.1 + 1],
                        from: o.from,
                        to: o.to,
                    })
                    .collect(),
            )),
            LinkFailureModel::Random(r) => Some(FailuresEntry::Random(RandomFailuresEntry {
                mode: "random".into(),
                p_fail: r.p_fail,
                tau: r.dwell_min,
                t_max: r.dwell_max,
            })),
        };
        ScenarioFile {
            obstacles: s.obstacles.points().to_vec(),
            params: s.params,
            integration: s.integration,
            workspace: s.workspace,
            monitors: (s.monitors != MonitorConfig::default()).then_some(s.monitors),
            failures,
            agents: s
                .agents
                .iter()
                .map(|a| AgentEntry { id: a.id, q: a.q })
                .collect(),
            formation_edges: s
                .formation
                .edges()
                .filter(|&(i, j, c)| i < j || s.formation.offset(j, i) != Some(-c))
                .map(|(i, j, c)| EdgeEntry {
                    pair: [i + 1, j + 1],
                    c,
                })
                .collect(),
        }
    }
}
