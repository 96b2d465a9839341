//! Numerical checks of the analytic machinery: finite-difference gradient
//! oracles, the per-agent bounds on the `A, B, C, D` decomposition of
//! `(grad phi_i)^T sum_j grad_i phi_j`, and the sufficient decrease
//! condition built from them.

mod sample;
mod suite;

pub use sample::{sample_config, sample_near_formation, Config, Hypothesis};
pub use suite::{run_suite, CheckResult, Report, Suite};

use crate::geom::Vec2;
use crate::navigation::{navigation_gradient, NavigationError};

/// Relative slack used by every inequality check.
pub const REL_SLACK: f64 = 1e-9;
/// Absolute floor on the slack.
pub const ABS_SLACK: f64 = 1e-12;

/// A claimed inequality `lhs <= rhs` evaluated on one configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inequality {
    pub lhs: f64,
    pub rhs: f64,
}

impl Inequality {
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs + REL_SLACK * self.rhs.abs() + ABS_SLACK
    }

    /// Amount by which the claim fails, relative to the right-hand side.
    /// Non-positive when it holds.
    pub fn excess(&self) -> f64 {
        (self.lhs - self.rhs) / self.rhs.abs().max(ABS_SLACK)
    }
}

/// Central differences per coordinate.
pub fn finite_difference_gradient(f: impl Fn(Vec2) -> f64, q: Vec2, h: f64) -> Vec2 {
    let dx = Vec2::new(h, 0.0);
    let dy = Vec2::new(0.0, h);
    Vec2::new(
        (f(q + dx) - f(q - dx)) / (2.0 * h),
        (f(q + dy) - f(q - dy)) / (2.0 * h),
    )
}

/// Numerator pieces of `(grad phi_i)^T sum_j grad_i phi_j` for one agent.
///
/// `C` and `D` sum over the other agents; the `j = i` term of the full sum
/// is `A - B/k` itself.
#[derive(Debug, Clone, PartialEq)]
pub struct AppendixTerms {
    pub agent: usize,
    pub gamma: f64,
    pub beta: f64,
    /// `beta_i grad_i gamma_i`
    pub a: Vec2,
    /// `gamma_i grad_i beta_i`
    pub b: Vec2,
    /// `sum_{j != i} beta_j grad_i gamma_j`
    pub c: Vec2,
    /// `sum_{j != i} gamma_j grad_i beta_j`
    pub d: Vec2,
    /// Per-agent `(j, beta_j grad_i gamma_j, gamma_j grad_i beta_j, gamma_j, beta_j)`.
    pub others: Vec<OtherTerm>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OtherTerm {
    pub agent: usize,
    pub gamma: f64,
    pub beta: f64,
    pub c: Vec2,
    pub d: Vec2,
}

impl AppendixTerms {
    pub fn new(cfg: &Config, i: usize) -> Self {
        let field = cfg.field();
        let q = &cfg.positions;
        let (gamma, grad_gamma) = field.goal(i, q);
        let con = field.constraint(i, q);
        let others: Vec<OtherTerm> = (0..q.len())
            .filter(|&j| j != i)
            .map(|j| {
                let gamma_j = field.goal(j, q).0;
                let beta_j = field.constraint(j, q).beta;
                OtherTerm {
                    agent: j,
                    gamma: gamma_j,
                    beta: beta_j,
                    c: field.goal_grad_wrt(j, i, q) * beta_j,
                    d: field.constraint_grad_wrt(j, i, q) * gamma_j,
                }
            })
            .collect();
        AppendixTerms {
            agent: i,
            gamma,
            beta: con.beta,
            a: grad_gamma * con.beta,
            b: con.grad * gamma,
            c: others.iter().map(|o| o.c).sum(),
            d: others.iter().map(|o| o.d).sum(),
            others,
        }
    }

    /// `A^T C - (|B||C| + |A||D|)/k - |B||D|/k^2`.
    pub fn chain(&self, k: f64) -> f64 {
        let (a, b, c, d) = (self.a.norm(), self.b.norm(), self.c.norm(), self.d.norm());
        self.a.dot(self.c) - (b * c + a * d) / k - b * d / (k * k)
    }

    /// The quadratic lower bound of [`chain`](Self::chain) obtained with
    /// `xy <= (x^2 + y^2)/2`.
    pub fn chain_young(&self, k: f64) -> f64 {
        let (a2, b2, c2, d2) = (
            self.a.norm_sq(),
            self.b.norm_sq(),
            self.c.norm_sq(),
            self.d.norm_sq(),
        );
        self.a.dot(self.c) - (a2 + b2 + c2 + d2) / (2.0 * k) - (b2 + d2) / (2.0 * k * k)
    }
}

/// `|A|^2 <= 4 beta_i^2 |N_i^f| gamma_i`.
pub fn property1(cfg: &Config, i: usize) -> Inequality {
    let t = AppendixTerms::new(cfg, i);
    Inequality {
        lhs: t.a.norm_sq(),
        rhs: 4.0 * t.beta * t.beta * cfg.formation.degree(i) as f64 * t.gamma,
    }
}

/// `|B| <= gamma_i (|N_i^f| 2/delta_2 + |N_i u M_i| 2/delta_1)`.
pub fn property2(cfg: &Config, i: usize) -> Inequality {
    let t = AppendixTerms::new(cfg, i);
    let (agents, obstacles) = cfg.field().collision_set(i, &cfg.positions);
    let p = &cfg.params;
    let per_gamma = cfg.formation.degree(i) as f64 * 2.0 / p.delta_2
        + (agents.len() + obstacles.len()) as f64 * 2.0 / p.delta_1;
    Inequality {
        lhs: t.b.norm(),
        rhs: t.gamma * per_gamma,
    }
}

/// `|C|^2 <= 4 |N_i^f| gamma_i`.
pub fn property3(cfg: &Config, i: usize) -> Inequality {
    let t = AppendixTerms::new(cfg, i);
    Inequality {
        lhs: t.c.norm_sq(),
        rhs: 4.0 * cfg.formation.degree(i) as f64 * t.gamma,
    }
}

/// `|D| <= (2/delta_2 + 2/delta_1) sum_j gamma_j`.
pub fn property4(cfg: &Config, i: usize) -> Inequality {
    let t = AppendixTerms::new(cfg, i);
    let p = &cfg.params;
    let total: f64 = cfg.gammas().iter().sum();
    Inequality {
        lhs: t.d.norm(),
        rhs: (2.0 / p.delta_2 + 2.0 / p.delta_1) * total,
    }
}

/// `gamma_i <= |N_i^f| (R_s + c_bar_i)^2`, for agents whose formation
/// neighbors are all within the sensing radius.
pub fn property5(cfg: &Config, i: usize) -> Inequality {
    let c_bar = cfg
        .formation
        .neighbors(i)
        .iter()
        .map(|&j| cfg.formation.offset(i, j).unwrap().norm())
        .fold(0.0, f64::max);
    let r = cfg.params.sensing_radius + c_bar;
    Inequality {
        lhs: cfg.field().goal(i, &cfg.positions).0,
        rhs: cfg.formation.degree(i) as f64 * r * r,
    }
}

/// `gamma_i / R_s <= |grad_i gamma_i|`, for agents whose formation
/// neighbors are all within the sensing radius.
pub fn gradient_norm_lower_bound(cfg: &Config, i: usize) -> Inequality {
    let (gamma, grad) = cfg.field().goal(i, &cfg.positions);
    Inequality {
        lhs: gamma / cfg.params.sensing_radius,
        rhs: grad.norm(),
    }
}

/// `(grad phi_i)^T sum_j grad_i phi_j`, once from the navigation gradients
/// and once reassembled from `A, B, C, D` and the denominators
/// `(gamma_j^k + beta_j)^(1/k + 1)`.
pub fn recombination(cfg: &Config, i: usize) -> Result<(f64, f64), NavigationError> {
    let field = cfg.field();
    let q = &cfg.positions;
    let k = cfg.params.k;
    let own = field.evaluate(i, q)?;
    let mut total = own.grad_phi;
    for j in (0..q.len()).filter(|&j| j != i) {
        let (gamma_j, _) = field.goal(j, q);
        let beta_j = field.constraint(j, q).beta;
        total += navigation_gradient(
            gamma_j,
            beta_j,
            field.goal_grad_wrt(j, i, q),
            field.constraint_grad_wrt(j, i, q),
            k,
        )
        .map_err(|_| NavigationError::DegenerateAgent(j))?;
    }
    let direct = own.grad_phi.dot(total);

    let t = AppendixTerms::new(cfg, i);
    let denom = |gamma: f64, beta: f64| (gamma.powf(k) + beta).powf(1.0 / k + 1.0);
    let own_part = (t.a - t.b / k) / denom(t.gamma, t.beta);
    let sum = own_part
        + t.others
            .iter()
            .map(|o| (o.c - o.d / k) / denom(o.gamma, o.beta))
            .sum::<Vec2>();
    Ok((direct, own_part.dot(sum)))
}

/// The constants `c_1..c_5` of
/// `rho_1 = c_1 gamma_i + c_2 gamma_i^2 + c_3 (sum gamma)^2` and
/// `rho_2 = c_4 gamma_i^2 + c_5 (sum gamma)^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhoConstants(pub [f64; 5]);

impl RhoConstants {
    /// Constants that make `rho_1, rho_2` dominate the norm terms of
    /// [`AppendixTerms::chain_young`] through the bounds of
    /// [`property1`]-[`property4`] with `beta <= 1`.
    pub fn from_property_bounds(cfg: &Config, i: usize) -> Self {
        let p = &cfg.params;
        let deg = cfg.formation.degree(i) as f64;
        let (agents, obstacles) = cfg.field().collision_set(i, &cfg.positions);
        let kb = deg * 2.0 / p.delta_2 + (agents.len() + obstacles.len()) as f64 * 2.0 / p.delta_1;
        let kd = 2.0 / p.delta_2 + 2.0 / p.delta_1;
        RhoConstants([8.0 * deg, kb * kb, kd * kd, kb * kb, kd * kd])
    }

    pub fn rho(&self, gamma_i: f64, gamma_sum: f64) -> (f64, f64) {
        let c = self.0;
        let s2 = gamma_sum * gamma_sum;
        (
            c[0] * gamma_i + c[1] * gamma_i * gamma_i + c[2] * s2,
            c[3] * gamma_i * gamma_i + c[4] * s2,
        )
    }
}

/// Outcome of [`check_decrease_condition`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecreaseCheck {
    /// `4 beta_under |sum_j (q_i - q_j - c_ij)|^2 - rho_1/(2k) - rho_2/(2k^2)`.
    pub sufficient: f64,
    /// `A^T C - (|B||C| + |A||D|)/k - |B||D|/k^2`.
    pub chain: f64,
}

impl DecreaseCheck {
    /// The sufficient condition is not met, so nothing is claimed.
    pub fn is_vacuous(&self) -> bool {
        self.sufficient <= 0.0
    }

    pub fn holds(&self) -> bool {
        self.is_vacuous() || self.chain > 0.0
    }
}

/// Evaluates both sides of "sufficient > 0 implies chain > 0" for agent
/// `i`, with `beta_under` the smallest `beta_i beta_j` over formation
/// pairs of the configuration.
pub fn check_decrease_condition(cfg: &Config, i: usize, rho: &RhoConstants, k: f64) -> DecreaseCheck {
    let field = cfg.field();
    let q = &cfg.positions;
    let betas: Vec<f64> = (0..q.len()).map(|j| field.constraint(j, q).beta).collect();
    let beta_under = cfg
        .formation
        .pairs()
        .map(|(a, b)| betas[a] * betas[b])
        .fold(f64::INFINITY, f64::min);
    let gammas = cfg.gammas();
    let (rho1, rho2) = rho.rho(gammas[i], gammas.iter().sum());
    let sum_res = field.goal(i, q).1 / 2.0;
    let t = AppendixTerms::new(cfg, i);
    DecreaseCheck {
        sufficient: 4.0 * beta_under * sum_res.norm_sq() - rho1 / (2.0 * k) - rho2 / (2.0 * k * k),
        chain: t.chain(k),
    }
}
