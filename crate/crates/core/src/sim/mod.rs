//! Closed-loop integration of the switched system with per-step logging.

mod monitor;
mod output;

use crate::geom::Vec2;
use crate::model::{validate_scenario, FormationSpec, Params, Scenario, Violation};
use crate::navigation::{Field, NavigationError};
use crate::switching::{
    control_input, partition_active, sensing_graph_at_step, ActiveSets, FailureTimeline,
    SensingGraph,
};

pub use monitor::{
    compute_bound, min_clearance, monitor_collision, monitor_connectivity, monitor_lyapunov,
    BoundReport, DecreaseHypothesis, Verdict,
};
pub use output::{read_trajectory_csv, write_trajectory_csv, CsvRow, Summary};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("scenario failed validation ({} violation(s))", .0.len())]
    Invalid(Vec<Violation>),
    #[error("non-finite position for agent {} at step {step}", .agent + 1)]
    NonFinite { step: usize, agent: usize },
    #[error("at step {step}: {source}")]
    Navigation {
        step: usize,
        #[source]
        source: NavigationError,
    },
    #[error("invalid bound constants: {0}")]
    Bound(String),
}

impl SimError {
    pub fn is_numerical(&self) -> bool {
        matches!(self, SimError::NonFinite { .. } | SimError::Navigation { .. })
    }
}

/// How the control input is evaluated inside one RK4 step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StageMode {
    /// Re-evaluate the navigation gradients at every stage.
    #[default]
    Recompute,
    /// Hold the step-start input for all stages (explicit Euler).
    Frozen,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OnViolation {
    /// Stop at the first connectivity or collision violation.
    Abort,
    /// Record the violation and keep integrating.
    #[default]
    Flag,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SimOptions {
    pub stage_mode: StageMode,
    pub on_violation: OnViolation,
}

/// Closed-loop velocity field with the `V_f` partition held fixed.
fn velocities(
    field: &Field,
    positions: &[Vec2],
    active: &ActiveSets,
    gain: f64,
) -> Result<Vec<Vec2>, NavigationError> {
    (0..positions.len())
        .map(|i| {
            if active.in_vf(i) {
                Ok(-field.evaluate(i, positions)?.grad_phi * gain)
            } else {
                Ok(Vec2::ZERO)
            }
        })
        .collect()
}

/// Advance all agents by one classical RK4 step of `dq_i/dt = u_i(q)`.
///
/// Agents in `V_u` keep their positions bit-for-bit.
pub fn step(
    field: &Field,
    positions: &[Vec2],
    active: &ActiveSets,
    dt: f64,
    mode: StageMode,
) -> Result<Vec<Vec2>, NavigationError> {
    let gain = field.params.gain;
    let shifted = |k: &[Vec2], h: f64| -> Vec<Vec2> {
        positions.iter().zip(k).map(|(&q, &v)| q + v * h).collect()
    };
    let k1 = velocities(field, positions, active, gain)?;
    let delta: Vec<Vec2> = match mode {
        StageMode::Frozen => k1.iter().map(|&v| v * dt).collect(),
        StageMode::Recompute => {
            let k2 = velocities(field, &shifted(&k1, dt / 2.0), active, gain)?;
            let k3 = velocities(field, &shifted(&k2, dt / 2.0), active, gain)?;
            let k4 = velocities(field, &shifted(&k3, dt), active, gain)?;
            (0..positions.len())
                .map(|i| (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (dt / 6.0))
                .collect()
        }
    };
    Ok(positions
        .iter()
        .zip(delta)
        .enumerate()
        .map(|(i, (&q, d))| if active.in_vf(i) { q + d } else { q })
        .collect())
}

/// `V = sum_i phi_i`.
pub fn lyapunov_value(
    positions: &[Vec2],
    formation: &FormationSpec,
    obstacles: &[Vec2],
    params: &Params,
) -> Result<f64, NavigationError> {
    let field = Field::new(formation, obstacles, params);
    (0..positions.len()).map(|i| field.phi(i, positions)).sum()
}

/// Per-step record of a run. Index `s` holds the state at `t = s * dt`
/// together with the input applied over `[t, t + dt)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub dt: f64,
    pub times: Vec<f64>,
    pub positions: Vec<Vec<Vec2>>,
    pub controls: Vec<Vec<Vec2>>,
    pub active: Vec<ActiveSets>,
    pub gamma: Vec<Vec<f64>>,
    pub beta: Vec<Vec<f64>>,
    pub v_values: Vec<f64>,
    /// Formation pairs `(i, j)`, `i < j`, in the order of `pair_distances`.
    pub pairs: Vec<(usize, usize)>,
    pub pair_distances: Vec<Vec<f64>>,
    /// Switching epoch index per step.
    pub epoch: Vec<usize>,
    /// Steps at which some agent evaluated a formation neighbor beyond the
    /// sensing radius, as `(step, agent)`.
    pub range_flags: Vec<(usize, usize)>,
}

impl TrajectoryLog {
    fn new(dt: f64, pairs: Vec<(usize, usize)>) -> Self {
        TrajectoryLog {
            dt,
            times: Vec::new(),
            positions: Vec::new(),
            controls: Vec::new(),
            active: Vec::new(),
            gamma: Vec::new(),
            beta: Vec::new(),
            v_values: Vec::new(),
            pairs,
            pair_distances: Vec::new(),
            epoch: Vec::new(),
            range_flags: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn agent_count(&self) -> usize {
        self.positions.first().map_or(0, Vec::len)
    }

    pub fn final_positions(&self) -> &[Vec2] {
        self.positions.last().map_or(&[], Vec::as_slice)
    }
}

/// First hard monitor violation met in abort mode.
#[derive(Debug, Clone, PartialEq)]
pub struct Abort {
    pub step: usize,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub log: TrajectoryLog,
    pub bound: Option<BoundReport>,
    pub observed_max_residual: f64,
    pub verdicts: Vec<Verdict>,
    pub aborted: Option<Abort>,
    /// Union-of-`V_f` coverage over the whole horizon.
    pub coverage: bool,
    /// Closed-neighborhood coverage over the whole horizon.
    pub neighborhood_coverage: bool,
    pub switches: usize,
}

impl RunOutput {
    pub fn all_passed(&self) -> bool {
        self.aborted.is_none() && self.verdicts.iter().all(|v| v.passed)
    }
}

/// Hard (abort-worthy) violation at the current state, if any.
fn hard_violation(s: &Scenario, positions: &[Vec2], distances: &[f64], pairs: &[(usize, usize)]) -> Option<String> {
    if let Some((k, d)) = distances
        .iter()
        .enumerate()
        .find(|(_, &d)| d >= s.params.sensing_radius)
    {
        let (i, j) = pairs[k];
        return Some(format!("connectivity lost: d_{}{} = {d}", i + 1, j + 1));
    }
    let (clearance, what) = min_clearance(positions, s.obstacles.points());
    (clearance <= s.monitors.epsilon_col).then(|| format!("collision: {what} at distance {clearance}"))
}

/// Integrate a validated scenario over its horizon and evaluate all monitors.
pub fn run(s: &Scenario, options: SimOptions) -> Result<RunOutput, SimError> {
    let blocking: Vec<_> = validate_scenario(s)
        .into_iter()
        .filter(Violation::is_blocking)
        .collect();
    if !blocking.is_empty() {
        return Err(SimError::Invalid(blocking));
    }
    let bound = s
        .monitors
        .bound
        .map(|c| compute_bound(&s.params, &s.formation, c.rho1_bar, c.rho2_bar, c.beta_under))
        .transpose()?;

    let n = s.agent_count();
    let field = Field::from_scenario(s);
    let timeline = FailureTimeline::new(&s.failures, n, &s.integration);
    let dt = s.integration.dt;
    let steps = s.integration.steps();
    let pairs: Vec<_> = s.formation.pairs().collect();
    let mut log = TrajectoryLog::new(dt, pairs.clone());
    let mut positions = s.initial_positions();
    let mut aborted = None;

    for k in 0..=steps {
        let nav_err = |source| SimError::Navigation { step: k, source };
        let graph: SensingGraph =
            sensing_graph_at_step(k, &positions, &timeline, s.params.sensing_radius);
        let active = partition_active(&graph, &s.formation);
        let evals = (0..n)
            .map(|i| field.evaluate(i, &positions))
            .collect::<Result<Vec<_>, _>>()
            .map_err(nav_err)?;
        for (i, e) in evals.iter().enumerate() {
            if e.beyond_range {
                log.range_flags.push((k, i));
            }
        }
        let distances: Vec<f64> = pairs
            .iter()
            .map(|&(i, j)| (positions[i] - positions[j]).norm())
            .collect();

        log.times.push(k as f64 * dt);
        log.controls.push(
            evals
                .iter()
                .enumerate()
                .map(|(i, e)| control_input(i, &active, e, s.params.gain))
                .collect(),
        );
        log.gamma.push(evals.iter().map(|e| e.gamma).collect());
        log.beta.push(evals.iter().map(|e| e.beta).collect());
        log.v_values.push(evals.iter().map(|e| e.phi).sum());
        log.epoch.push(timeline.epoch_index(k));
        log.active.push(active.clone());
        log.positions.push(positions.clone());

        if options.on_violation == OnViolation::Abort {
            if let Some(reason) = hard_violation(s, &positions, &distances, &pairs) {
                log.pair_distances.push(distances);
                aborted = Some(Abort { step: k, reason });
                break;
            }
        }
        log.pair_distances.push(distances);
        if k == steps {
            break;
        }

        positions = step(&field, &positions, &active, dt, options.stage_mode)
            .map_err(|source| SimError::Navigation { step: k, source })?;
        if let Some(agent) = positions.iter().position(|q| !q.is_finite()) {
            return Err(SimError::NonFinite { step: k + 1, agent });
        }
    }

    let hypothesis = match bound {
        Some(b) => DecreaseHypothesis::Bound(b.c_max),
        None => DecreaseHypothesis::Fallback(s.monitors.epsilon_v),
    };
    let mut verdicts = vec![
        monitor_connectivity(&log, s.params.sensing_radius),
        monitor_collision(&log, s.obstacles.points(), s.monitors.epsilon_col),
        monitor_lyapunov(&log, &s.formation, hypothesis, s.monitors.c_eta),
    ];
    verdicts.push(Verdict {
        name: "range_flag".into(),
        passed: log.range_flags.is_empty(),
        detail: match log.range_flags.first() {
            None => "no formation neighbor evaluated beyond R_s".into(),
            Some(&(k, i)) => format!(
                "agent {} evaluated a formation neighbor beyond R_s at t = {}",
                i + 1,
                log.times[k]
            ),
        },
    });

    let observed_max_residual = s.formation.max_residual(log.final_positions());
    let bound = bound.map(|b| BoundReport {
        observed_max_residual: Some(observed_max_residual),
        ..b
    });
    let coverage = crate::switching::coverage_satisfied(&log.active);
    let neighborhood_coverage = crate::switching::neighborhood_coverage(&log.active, &s.formation);
    let switches = timeline
        .switch_steps()
        .filter(|&k| k < log.len())
        .count();
    Ok(RunOutput {
        log,
        bound,
        observed_max_residual,
        verdicts,
        aborted,
        coverage,
        neighborhood_coverage,
        switches,
    })
}
