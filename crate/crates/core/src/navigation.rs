//! Per-agent navigation function `phi_i = gamma_i / (gamma_i^k + beta_i)^(1/k)`
//! and the goal/constraint functions it is built from, with analytic
//! gradients with respect to agent positions.

use crate::geom::{distance, Vec2};
use crate::model::{FormationSpec, Params, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum NavigationError {
    /// `gamma = beta = 0`: the agent sits on its goal and on a constraint
    /// boundary at once, where `phi` is undefined.
    #[error("goal and constraint functions vanish together")]
    Degenerate,
    #[error("goal and constraint functions vanish together for agent {}", .0 + 1)]
    DegenerateAgent(usize),
}

/// Goal function: sum of squared formation residuals `q_i - q_j - c_ij`.
///
/// `neighbors` holds `(q_j, c_ij)` for every formation neighbor of `i`.
pub fn goal_value(q_i: Vec2, neighbors: &[(Vec2, Vec2)]) -> f64 {
    neighbors
        .iter()
        .map(|&(q_j, c)| (q_i - q_j - c).norm_sq())
        .sum()
}

pub fn goal_gradient(q_i: Vec2, neighbors: &[(Vec2, Vec2)]) -> Vec2 {
    2.0 * neighbors.iter().map(|&(q_j, c)| q_i - q_j - c).sum::<Vec2>()
}

/// Connectivity factor `b(d)`: 1 inside `R_s - delta_2`, a concave quadratic
/// falling to 0 across the buffer, and 0 beyond `R_s`.
pub fn connectivity_factor(d: f64, sensing_radius: f64, delta_2: f64) -> f64 {
    if d < sensing_radius - delta_2 {
        1.0
    } else if d <= sensing_radius {
        let s = (d + 2.0 * delta_2 - sensing_radius) / delta_2;
        (2.0 * s - s * s).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// Gradient of `b(|q_i - q_j|)` with respect to `q_i`.
pub fn connectivity_gradient(q_i: Vec2, q_j: Vec2, sensing_radius: f64, delta_2: f64) -> Vec2 {
    let d = distance(q_i, q_j);
    if d < sensing_radius - delta_2 || d >= sensing_radius {
        return Vec2::ZERO;
    }
    let coeff = -2.0 * (d + delta_2 - sensing_radius) / (delta_2 * delta_2 * d);
    (q_i - q_j) * coeff
}

/// Collision factor `B(d)`: `2d/delta_1 - d^2/delta_1^2` inside the collision
/// region, 1 outside. Zero exactly at contact.
pub fn collision_factor(d: f64, delta_1: f64) -> f64 {
    if d > delta_1 {
        1.0
    } else {
        let s = d / delta_1;
        (2.0 * s - s * s).clamp(0.0, 1.0)
    }
}

/// Gradient of `B(|q_i - q_k|)` with respect to `q_i`. Zero at `d = 0`,
/// where the direction is undefined.
pub fn collision_gradient(q_i: Vec2, q_k: Vec2, delta_1: f64) -> Vec2 {
    let d = distance(q_i, q_k);
    if d > delta_1 || d == 0.0 {
        return Vec2::ZERO;
    }
    let slope = 2.0 / delta_1 - 2.0 * d / (delta_1 * delta_1);
    (q_i - q_k) * (slope / d)
}

pub fn navigation_value(gamma: f64, beta: f64, k: f64) -> Result<f64, NavigationError> {
    if gamma == 0.0 && beta == 0.0 {
        return Err(NavigationError::Degenerate);
    }
    if gamma == 0.0 {
        return Ok(0.0);
    }
    let denom = (gamma.powf(k) + beta).powf(1.0 / k);
    Ok((gamma / denom).min(1.0))
}

pub fn navigation_gradient(
    gamma: f64,
    beta: f64,
    grad_gamma: Vec2,
    grad_beta: Vec2,
    k: f64,
) -> Result<Vec2, NavigationError> {
    if gamma == 0.0 && beta == 0.0 {
        return Err(NavigationError::Degenerate);
    }
    let base = gamma.powf(k) + beta;
    let denom = k * base.powf(1.0 / k + 1.0);
    Ok((grad_gamma * (k * beta) - grad_beta * gamma) / denom)
}

/// Everything the controller needs about one agent at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NavigationEval {
    pub gamma: f64,
    pub beta: f64,
    pub phi: f64,
    pub grad_gamma: Vec2,
    pub grad_beta: Vec2,
    pub grad_phi: Vec2,
    /// A formation neighbor was evaluated beyond the sensing radius.
    pub beyond_range: bool,
    /// Size of the potential-collision set (agents and obstacles).
    pub collision_count: usize,
}

/// Who a constraint factor couples agent `i` to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Partner {
    Agent(usize),
    Obstacle(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FactorKind {
    Connectivity,
    Collision,
}

/// One factor of `beta_i` and its gradient with respect to `q_i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Factor {
    pub kind: FactorKind,
    pub partner: Partner,
    pub value: f64,
    pub grad: Vec2,
}

/// Constraint function value, gradient and bookkeeping for one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub beta: f64,
    pub grad: Vec2,
    pub factors: Vec<Factor>,
    pub beyond_range: bool,
}

impl Constraint {
    pub fn collision_count(&self) -> usize {
        self.factors
            .iter()
            .filter(|f| f.kind == FactorKind::Collision)
            .count()
    }
}

/// Products of all factors but one, computed without division so that
/// exact zeros survive.
fn leave_one_out(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut out = vec![1.0; n];
    let mut acc = 1.0;
    for h in 0..n {
        out[h] = acc;
        acc *= values[h];
    }
    acc = 1.0;
    for h in (0..n).rev() {
        out[h] *= acc;
        acc *= values[h];
    }
    out
}

/// The navigation field of a scenario: formation, obstacles and parameters,
/// evaluated against a configuration of all agent positions.
#[derive(Debug, Clone, Copy)]
pub struct Field<'a> {
    pub formation: &'a FormationSpec,
    pub obstacles: &'a [Vec2],
    pub params: &'a Params,
}

impl<'a> Field<'a> {
    pub fn new(formation: &'a FormationSpec, obstacles: &'a [Vec2], params: &'a Params) -> Self {
        Field {
            formation,
            obstacles,
            params,
        }
    }

    pub fn from_scenario(s: &'a Scenario) -> Self {
        Field::new(&s.formation, s.obstacles.points(), &s.params)
    }

    pub fn goal(&self, i: usize, positions: &[Vec2]) -> (f64, Vec2) {
        let terms = self.formation.neighbor_terms(i, positions);
        (
            goal_value(positions[i], &terms),
            goal_gradient(positions[i], &terms),
        )
    }

    /// Gradient of `gamma_j` with respect to `q_i`.
    pub fn goal_grad_wrt(&self, j: usize, i: usize, positions: &[Vec2]) -> Vec2 {
        if i == j {
            return self.goal(i, positions).1;
        }
        match self.formation.offset(j, i) {
            Some(c_ji) => -2.0 * (positions[j] - positions[i] - c_ji),
            None => Vec2::ZERO,
        }
    }

    /// Potential-collision agents and obstacles of agent `i`: everything
    /// within `delta_1`.
    pub fn collision_set(&self, i: usize, positions: &[Vec2]) -> (Vec<usize>, Vec<usize>) {
        let q_i = positions[i];
        let r = self.params.delta_1;
        let agents = (0..positions.len())
            .filter(|&k| k != i && distance(q_i, positions[k]) <= r)
            .collect();
        let obstacles = (0..self.obstacles.len())
            .filter(|&k| distance(q_i, self.obstacles[k]) <= r)
            .collect();
        (agents, obstacles)
    }

    /// Factors of `beta_i`: one connectivity factor per formation neighbor,
    /// one collision factor per member of the potential-collision set.
    pub fn factors(&self, i: usize, positions: &[Vec2]) -> (Vec<Factor>, bool) {
        let p = self.params;
        let q_i = positions[i];
        let mut beyond_range = false;
        let mut factors = Vec::new();
        for &j in self.formation.neighbors(i) {
            let d = distance(q_i, positions[j]);
            beyond_range |= d > p.sensing_radius;
            factors.push(Factor {
                kind: FactorKind::Connectivity,
                partner: Partner::Agent(j),
                value: connectivity_factor(d, p.sensing_radius, p.delta_2),
                grad: connectivity_gradient(q_i, positions[j], p.sensing_radius, p.delta_2),
            });
        }
        let (agents, obstacles) = self.collision_set(i, positions);
        for k in agents {
            factors.push(Factor {
                kind: FactorKind::Collision,
                partner: Partner::Agent(k),
                value: collision_factor(distance(q_i, positions[k]), p.delta_1),
                grad: collision_gradient(q_i, positions[k], p.delta_1),
            });
        }
        for k in obstacles {
            let o = self.obstacles[k];
            factors.push(Factor {
                kind: FactorKind::Collision,
                partner: Partner::Obstacle(k),
                value: collision_factor(distance(q_i, o), p.delta_1),
                grad: collision_gradient(q_i, o, p.delta_1),
            });
        }
        (factors, beyond_range)
    }

    pub fn constraint(&self, i: usize, positions: &[Vec2]) -> Constraint {
        let (factors, beyond_range) = self.factors(i, positions);
        let values: Vec<f64> = factors.iter().map(|f| f.value).collect();
        let beta = values.iter().product::<f64>().clamp(0.0, 1.0);
        let grad = leave_one_out(&values)
            .into_iter()
            .zip(&factors)
            .map(|(rest, f)| f.grad * rest)
            .sum();
        Constraint {
            beta,
            grad,
            factors,
            beyond_range,
        }
    }

    /// Gradient of `beta_j` with respect to `q_i` for `i != j`; only the
    /// factors of `beta_j` that couple `j` to `i` contribute.
    pub fn constraint_grad_wrt(&self, j: usize, i: usize, positions: &[Vec2]) -> Vec2 {
        if i == j {
            return self.constraint(i, positions).grad;
        }
        let (factors, _) = self.factors(j, positions);
        let values: Vec<f64> = factors.iter().map(|f| f.value).collect();
        leave_one_out(&values)
            .into_iter()
            .zip(&factors)
            .filter(|(_, f)| f.partner == Partner::Agent(i))
            .map(|(rest, f)| -f.grad * rest)
            .sum()
    }

    pub fn evaluate(&self, i: usize, positions: &[Vec2]) -> Result<NavigationEval, NavigationError> {
        let (gamma, grad_gamma) = self.goal(i, positions);
        let c = self.constraint(i, positions);
        let k = self.params.k;
        let err = |_| NavigationError::DegenerateAgent(i);
        let phi = navigation_value(gamma, c.beta, k).map_err(err)?;
        let grad_phi = navigation_gradient(gamma, c.beta, grad_gamma, c.grad, k).map_err(err)?;
        Ok(NavigationEval {
            gamma,
            beta: c.beta,
            phi,
            grad_gamma,
            grad_beta: c.grad,
            grad_phi,
            beyond_range: c.beyond_range,
            collision_count: c.collision_count(),
        })
    }

    /// `phi_i` as a function of all positions; convenient for oracles.
    pub fn phi(&self, i: usize, positions: &[Vec2]) -> Result<f64, NavigationError> {
        let (gamma, _) = self.goal(i, positions);
        let beta = self.constraint(i, positions).beta;
        navigation_value(gamma, beta, self.params.k).map_err(|_| NavigationError::DegenerateAgent(i))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const RS: f64 = 20.0;
    const D1: f64 = 8.0;
    const D2: f64 = 2.0;

    fn fd(f: impl Fn(Vec2) -> f64, q: Vec2, h: f64) -> Vec2 {
        let ex = Vec2::new(h, 0.0);
        let ey = Vec2::new(0.0, h);
        Vec2::new(
            (f(q + ex) - f(q - ex)) / (2.0 * h),
            (f(q + ey) - f(q - ey)) / (2.0 * h),
        )
    }

    fn rel_err(a: Vec2, b: Vec2) -> f64 {
        (a - b).norm() / a.norm().max(b.norm()).max(1e-3)
    }

    #[test]
    fn goal_examples() {
        let q = Vec2::new(1.0, 1.0);
        let exact = [(Vec2::new(1.0, -4.0), Vec2::new(0.0, 5.0))];
        assert_eq!(goal_value(q, &exact), 0.0);
        assert_eq!(goal_gradient(q, &exact), Vec2::ZERO);

        // residual (3, 4)
        let one = [(Vec2::new(-2.0, -3.0), Vec2::ZERO)];
        assert_eq!(goal_value(q, &one), 25.0);
        assert_eq!(goal_gradient(q, &one), Vec2::new(6.0, 8.0));

        // residuals (1, 0) and (0, 2)
        let two = [
            (Vec2::new(0.0, 1.0), Vec2::ZERO),
            (Vec2::new(1.0, -1.0), Vec2::ZERO),
        ];
        assert_eq!(goal_value(q, &two), 5.0);
    }

    #[test]
    fn connectivity_factor_examples() {
        assert_eq!(connectivity_factor(RS - D2, RS, D2), 1.0);
        assert_eq!(connectivity_factor(RS, RS, D2), 0.0);
        assert!((connectivity_factor(RS - D2 / 2.0, RS, D2) - 0.75).abs() < 1e-15);
        assert_eq!(connectivity_factor(RS + 1.0, RS, D2), 0.0);
        assert_eq!(connectivity_factor(0.0, RS, D2), 1.0);
    }

    #[test]
    fn connectivity_factor_is_continuous_at_breakpoints() {
        let e = 1e-13;
        let lo = RS - D2;
        assert!((connectivity_factor(lo - e, RS, D2) - connectivity_factor(lo, RS, D2)).abs() < 1e-12);
        assert!((connectivity_factor(RS, RS, D2) - connectivity_factor(RS + e, RS, D2)).abs() < 1e-12);
        assert!((collision_factor(D1, D1) - collision_factor(D1 + e, D1)).abs() < 1e-12);
    }

    #[test]
    fn connectivity_gradient_examples() {
        let qi = Vec2::new(1.0, 2.0);
        assert_eq!(connectivity_gradient(qi, qi + Vec2::new(10.0, 0.0), RS, D2), Vec2::ZERO);
        assert_eq!(connectivity_gradient(qi, qi + Vec2::new(RS - D2, 0.0), RS, D2), Vec2::ZERO);
        // b grows back toward j inside the band
        let qj = qi + Vec2::new(0.0, 19.0);
        let g = connectivity_gradient(qi, qj, RS, D2);
        assert!(g.dot(qj - qi) > 0.0);
        let fdg = fd(|q| connectivity_factor(distance(q, qj), RS, D2), qi, 1e-6);
        assert!(rel_err(g, fdg) < 1e-6, "{g} vs {fdg}");
    }

    #[test]
    fn collision_factor_examples() {
        assert_eq!(collision_factor(0.0, D1), 0.0);
        assert_eq!(collision_factor(D1, D1), 1.0);
        assert_eq!(collision_factor(D1 / 2.0, D1), 0.75);
        assert_eq!(collision_factor(3.0 * D1, D1), 1.0);
    }

    #[test]
    fn collision_gradient_examples() {
        let qi = Vec2::new(-3.0, 0.5);
        assert_eq!(collision_gradient(qi, qi + Vec2::new(9.0, 0.0), D1), Vec2::ZERO);
        assert_eq!(collision_gradient(qi, qi, D1), Vec2::ZERO);
        let qk = qi + Vec2::new(D1 / 2.0 * 0.6, D1 / 2.0 * 0.8);
        let g = collision_gradient(qi, qk, D1);
        let fdg = fd(|q| collision_factor(distance(q, qk), D1), qi, 1e-6);
        assert!(rel_err(g, fdg) < 1e-6, "{g} vs {fdg}");
    }

    #[test]
    fn phi_examples() {
        assert_eq!(navigation_value(3.0, 0.0, 1.0).unwrap(), 1.0);
        assert_eq!(navigation_value(0.0, 0.4, 2.0).unwrap(), 0.0);
        assert_eq!(
            navigation_gradient(0.0, 0.4, Vec2::ZERO, Vec2::new(1.0, 1.0), 2.0).unwrap(),
            Vec2::ZERO
        );
        assert_eq!(navigation_value(1.0, 1.0, 1.0).unwrap(), 0.5);
        assert_eq!(navigation_value(0.0, 0.0, 1.0), Err(NavigationError::Degenerate));
        assert!(navigation_gradient(0.0, 0.0, Vec2::ZERO, Vec2::ZERO, 1.0).is_err());
    }

    #[test]
    fn leave_one_out_keeps_exact_zeros() {
        assert_eq!(leave_one_out(&[2.0, 0.0, 3.0]), vec![0.0, 6.0, 0.0]);
        assert_eq!(leave_one_out(&[]), Vec::<f64>::new());
    }

    fn pair_field() -> (FormationSpec, Vec<Vec2>, Params) {
        let formation = FormationSpec::new(
            3,
            [(0, 1, Vec2::new(0.0, 10.0)), (1, 2, Vec2::new(10.0, 0.0))],
        )
        .unwrap();
        let params = Params {
            sensing_radius: RS,
            delta_1: D1,
            delta_2: D2,
            k: 1.0,
            gain: 10.0,
        };
        (formation, vec![Vec2::new(0.0, 30.0)], params)
    }

    #[test]
    fn free_agent_has_unit_beta() {
        let (f, obs, p) = pair_field();
        let field = Field::new(&f, &obs, &p);
        let q = [Vec2::new(0.0, 0.0), Vec2::new(0.0, -12.0), Vec2::new(-11.0, -12.0)];
        let c = field.constraint(0, &q);
        assert_eq!(c.beta, 1.0);
        assert_eq!(c.grad, Vec2::ZERO);
        assert!(!c.beyond_range);
    }

    #[test]
    fn obstacle_at_agent_zeroes_beta() {
        let (f, _, p) = pair_field();
        let obs = [Vec2::new(1.0, 1.0)];
        let field = Field::new(&f, &obs, &p);
        let q = [Vec2::new(1.0, 1.0), Vec2::new(0.0, -12.0), Vec2::new(-11.0, -12.0)];
        assert_eq!(field.constraint(0, &q).beta, 0.0);
    }

    #[test]
    fn beyond_range_is_flagged() {
        let (f, obs, p) = pair_field();
        let field = Field::new(&f, &obs, &p);
        let q = [Vec2::new(0.0, 0.0), Vec2::new(0.0, -21.0), Vec2::new(-11.0, -21.0)];
        let c = field.constraint(0, &q);
        assert!(c.beyond_range);
        assert_eq!(c.beta, 0.0);
    }

    #[test]
    fn single_boundary_neighbor_pulls_agent_toward_it() {
        // agent 0 has a single formation neighbor near the sensing boundary,
        // with a goal pulling it outward
        let f = FormationSpec::new(2, [(0, 1, Vec2::new(0.0, 15.0))]).unwrap();
        let p = Params {
            sensing_radius: RS,
            delta_1: D1,
            delta_2: D2,
            k: 1.0,
            gain: 1.0,
        };
        let field = Field::new(&f, &[], &p);
        for eps in [0.5, 0.1, 1e-3] {
            let q = [Vec2::new(0.0, RS - eps), Vec2::ZERO];
            let e = field.evaluate(0, &q).unwrap();
            let descent = -e.grad_phi;
            assert!(descent.dot(q[1] - q[0]) > 0.0, "eps {eps}: {descent}");
        }
    }

    proptest! {
        #[test]
        fn factors_stay_in_unit_interval(d in 0.0..40.0f64) {
            let b = connectivity_factor(d, RS, D2);
            let bb = collision_factor(d, D1);
            prop_assert!((0.0..=1.0).contains(&b));
            prop_assert!((0.0..=1.0).contains(&bb));
        }

        #[test]
        fn collision_gradient_is_bounded(x in -10.0..10.0f64, y in -10.0..10.0f64) {
            let g = collision_gradient(Vec2::new(x, y), Vec2::ZERO, D1);
            prop_assert!(g.norm() <= 2.0 / D1 + 1e-15);
        }

        #[test]
        fn phi_in_unit_interval(gamma in 0.0..1e4f64, beta in 0.0..=1.0f64, k in 1.0..8.0f64) {
            prop_assume!(gamma > 0.0 || beta > 0.0);
            let phi = navigation_value(gamma, beta, k).unwrap();
            prop_assert!((0.0..=1.0).contains(&phi));
        }

        #[test]
        fn grad_beta_matches_finite_differences(
            x in -6.0..6.0f64, y in -6.0..6.0f64, ox in -6.0..6.0f64, oy in 20.0..32.0f64,
        ) {
            let (f, _, p) = pair_field();
            let obs = [Vec2::new(ox, oy)];
            let field = Field::new(&f, &obs, &p);
            let q = vec![Vec2::new(x, 25.0 + y), Vec2::new(0.0, 10.0), Vec2::new(-8.0, 14.0)];
            let base = q[0];
            let c = field.constraint(0, &q);
            prop_assume!(c.beta > 1e-3);
            let fdg = fd(
                |p0| {
                    let mut moved = q.clone();
                    moved[0] = p0;
                    field.constraint(0, &moved).beta
                },
                base,
                1e-6,
            );
            prop_assert!(rel_err(c.grad, fdg) < 1e-5, "{} vs {}", c.grad, fdg);
        }
    }
}
