//! Runtime checks evaluated over a [`TrajectoryLog`].

// negated comparisons make NaN count as a failure
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use serde::Serialize;

use super::{SimError, TrajectoryLog};
use crate::geom::{distance, Vec2};
use crate::model::{FormationSpec, Params};

/// Outcome of one monitor.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Ultimate-bound quantities for the formation error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundReport {
    /// Residual-sum threshold above which `V` must decrease.
    pub c_max: f64,
    /// Smallest formation neighbor-set size.
    pub n_under: usize,
    /// `sqrt(c_max / n_under)`.
    pub ultimate_error: f64,
    /// Largest `|q_i - q_j - c_ij|` at the end of a run.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub observed_max_residual: Option<f64>,
}

/// `c_max = sqrt((R_s^2 / beta_under) (rho1 / 2k + rho2 / 2k^2))` and the
/// resulting ultimate formation error.
pub fn compute_bound(
    params: &Params,
    formation: &FormationSpec,
    rho1_bar: f64,
    rho2_bar: f64,
    beta_under: f64,
) -> Result<BoundReport, SimError> {
    if !(beta_under > 0.0) {
        return Err(SimError::Bound(format!("beta_under = {beta_under} must be positive")));
    }
    if rho1_bar < 0.0 || rho2_bar < 0.0 {
        return Err(SimError::Bound(format!(
            "rho1_bar = {rho1_bar} and rho2_bar = {rho2_bar} must be nonnegative"
        )));
    }
    let n_under = formation.min_degree();
    if n_under == 0 {
        return Err(SimError::Bound("some agent has no formation neighbors".into()));
    }
    let k = params.k;
    let r2 = params.sensing_radius * params.sensing_radius;
    let c_max = (r2 / beta_under * (rho1_bar / (2.0 * k) + rho2_bar / (2.0 * k * k))).sqrt();
    Ok(BoundReport {
        c_max,
        n_under,
        ultimate_error: (c_max / n_under as f64).sqrt(),
        observed_max_residual: None,
    })
}

/// Smallest agent-agent or agent-obstacle distance, with a description of
/// the pair that attains it.
pub fn min_clearance(positions: &[Vec2], obstacles: &[Vec2]) -> (f64, String) {
    let mut best = (f64::INFINITY, String::from("none"));
    for (i, &qi) in positions.iter().enumerate() {
        for (j, &qj) in positions.iter().enumerate().skip(i + 1) {
            let d = distance(qi, qj);
            if d < best.0 {
                best = (d, format!("agents {} and {}", i + 1, j + 1));
            }
        }
        for (k, &o) in obstacles.iter().enumerate() {
            let d = distance(qi, o);
            if d < best.0 {
                best = (d, format!("agent {} and obstacle {}", i + 1, k + 1));
            }
        }
    }
    best
}

/// Every formation pair stays strictly inside the sensing radius.
pub fn monitor_connectivity(log: &TrajectoryLog, sensing_radius: f64) -> Verdict {
    let mut worst = 0.0f64;
    for (k, row) in log.pair_distances.iter().enumerate() {
        for (p, &d) in row.iter().enumerate() {
            worst = worst.max(d);
            if !(d < sensing_radius) {
                let (i, j) = log.pairs[p];
                return Verdict {
                    name: "connectivity".into(),
                    passed: false,
                    detail: format!(
                        "d_{}{} = {d} >= R_s = {sensing_radius} at t = {}",
                        i + 1,
                        j + 1,
                        log.times[k]
                    ),
                };
            }
        }
    }
    Verdict {
        name: "connectivity".into(),
        passed: true,
        detail: format!("max formation distance {worst} < R_s = {sensing_radius}"),
    }
}

/// Clearance between all bodies stays above `epsilon_col`.
pub fn monitor_collision(log: &TrajectoryLog, obstacles: &[Vec2], epsilon_col: f64) -> Verdict {
    let mut lowest = f64::INFINITY;
    for (k, q) in log.positions.iter().enumerate() {
        let (d, what) = min_clearance(q, obstacles);
        lowest = lowest.min(d);
        if !(d > epsilon_col) {
            return Verdict {
                name: "collision".into(),
                passed: false,
                detail: format!("{what} at distance {d} <= {epsilon_col} at t = {}", log.times[k]),
            };
        }
    }
    Verdict {
        name: "collision".into(),
        passed: true,
        detail: format!("min clearance {lowest} > {epsilon_col}"),
    }
}

/// When the Lyapunov decrease is required of a step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DecreaseHypothesis {
    /// Every agent in `V_f` has `gamma_i > c_max`.
    Bound(f64),
    /// After the last step at which some formation residual exceeds the
    /// given value.
    Fallback(f64),
}

/// Checks `V(t + dt) <= V(t) + c_eta dt^2` on every step meeting the
/// hypothesis, and exact constancy of `V` over steps with every agent in
/// `V_u`.
pub fn monitor_lyapunov(
    log: &TrajectoryLog,
    formation: &FormationSpec,
    hypothesis: DecreaseHypothesis,
    c_eta: f64,
) -> Verdict {
    let eta = c_eta * log.dt * log.dt;
    let v = &log.v_values;
    let first_required = match hypothesis {
        DecreaseHypothesis::Bound(_) => 0,
        DecreaseHypothesis::Fallback(eps) => log
            .positions
            .iter()
            .rposition(|q| formation.max_residual(q) > eps)
            .map_or(0, |k| k + 1),
    };
    let mut checked = 0usize;
    for k in 0..v.len().saturating_sub(1) {
        let active = &log.active[k];
        if active.is_all_vu() {
            if v[k + 1] != v[k] {
                return Verdict {
                    name: "lyapunov".into(),
                    passed: false,
                    detail: format!(
                        "V changed from {} to {} at t = {} with every agent in V_u",
                        v[k],
                        v[k + 1],
                        log.times[k]
                    ),
                };
            }
            continue;
        }
        let required = match hypothesis {
            DecreaseHypothesis::Bound(c_max) => active.vf().iter().all(|&i| log.gamma[k][i] > c_max),
            DecreaseHypothesis::Fallback(_) => k >= first_required,
        };
        if !required {
            continue;
        }
        checked += 1;
        if v[k + 1] > v[k] + eta {
            return Verdict {
                name: "lyapunov".into(),
                passed: false,
                detail: format!(
                    "V rose from {} to {} at t = {} (slack {eta})",
                    v[k],
                    v[k + 1],
                    log.times[k]
                ),
            };
        }
    }
    Verdict {
        name: "lyapunov".into(),
        passed: true,
        detail: format!("{checked} step(s) checked, slack {eta}"),
    }
}
