//! Seeded sweeps over the checks, with a plain-text report.

use std::fmt::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::geom::distance;
use crate::model::{FormationSpec, Params};
use crate::navigation::{collision_factor, collision_gradient, connectivity_factor, connectivity_gradient};

/// Finite-difference step of the gradient oracle.
pub const FD_STEP: f64 = 1e-6;
/// Largest accepted relative error between analytic and numerical gradients.
pub const FD_TOLERANCE: f64 = 1e-5;
/// Gradient norms below this are compared in absolute terms.
pub const FD_FLOOR: f64 = 1e-6;
/// Gradients of `phi` are only compared where their norm is at least this
/// multiple of `phi`, so that rounding in the difference quotient
/// (about `eps |phi| / h`) stays below `1e-6` of the gradient.
pub const FD_RESOLUTION: f64 = 1e6 * f64::EPSILON / FD_STEP;
/// Relative tolerance of the recombination identity.
pub const RECOMBINATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    All,
    Gradients,
    Appendix,
    Bounds,
}

impl std::str::FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "all" => Ok(Suite::All),
            "gradients" => Ok(Suite::Gradients),
            "appendix" => Ok(Suite::Appendix),
            "bounds" => Ok(Suite::Bounds),
            _ => Err(format!("unknown suite {s:?} (expected all, gradients, appendix or bounds)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub suite: &'static str,
    pub name: &'static str,
    pub trials: usize,
    /// Trials where the check made a claim (differs from `trials` only for
    /// implications with a false premise).
    pub checked: usize,
    pub failures: usize,
    /// What `worst` measures.
    pub metric: &'static str,
    pub worst: f64,
    /// First failing configuration as a scenario file.
    pub counterexample: Option<String>,
}

impl CheckResult {
    fn new(suite: &'static str, name: &'static str, metric: &'static str) -> Self {
        CheckResult {
            suite,
            name,
            trials: 0,
            checked: 0,
            failures: 0,
            metric,
            worst: f64::NEG_INFINITY,
            counterexample: None,
        }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0
    }

    fn record(&mut self, trial: usize, value: f64, ok: bool, cfg: impl FnOnce() -> (Config, String)) {
        self.checked += 1;
        if value > self.worst || self.worst.is_nan() || value.is_nan() {
            self.worst = value;
        }
        if !ok {
            self.failures += 1;
            if self.counterexample.is_none() {
                let (cfg, what) = cfg();
                self.counterexample = Some(format!(
                    "# {} / {}: trial {trial}, {what}\n{}",
                    self.suite,
                    self.name,
                    cfg.to_scenario().to_toml()
                ));
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub seed: u64,
    pub trials: usize,
    pub results: Vec<CheckResult>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.results.iter().all(CheckResult::passed)
    }

    pub fn result(&self, name: &str) -> Option<&CheckResult> {
        self.results.iter().find(|r| r.name == name)
    }

    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "seed {} trials {}", self.seed, self.trials);
        let _ = writeln!(
            out,
            "{:<10} {:<26} {:>7} {:>7} {:>8} {:<18} {:>11}  result",
            "suite", "check", "trials", "claims", "failures", "metric", "worst"
        );
        for r in &self.results {
            let _ = writeln!(
                out,
                "{:<10} {:<26} {:>7} {:>7} {:>8} {:<18} {:>11.3e}  {}",
                r.suite,
                r.name,
                r.trials,
                r.checked,
                r.failures,
                r.metric,
                r.worst,
                if r.passed() { "PASS" } else { "FAIL" }
            );
        }
        out
    }

    pub fn counterexamples(&self) -> String {
        self.results
            .iter()
            .filter_map(|r| r.counterexample.as_deref())
            .collect::<Vec<_>>()
            .join("\n")
    }
}

fn trial_rng(seed: u64, stream: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos(trial as u128 * (1 << 20));
    rng
}

fn relative_error(analytic: Vec2, numeric: Vec2) -> f64 {
    (analytic - numeric).norm() / analytic.norm().max(FD_FLOOR)
}

/// Runs the requested suite with `trials` seeded samples per check.
pub fn run_suite(suite: Suite, seed: u64, trials: usize) -> Report {
    let mut results = Vec::new();
    if matches!(suite, Suite::All | Suite::Gradients) {
        results.extend(gradient_checks(seed, trials));
    }
    if matches!(suite, Suite::All | Suite::Appendix) {
        results.extend(appendix_checks(seed, trials));
    }
    if matches!(suite, Suite::All | Suite::Bounds) {
        results.extend(bound_checks(seed, trials));
    }
    Report {
        seed,
        trials,
        results,
    }
}

/// Distance in `(lo, hi)` at least `10 h` from every breakpoint.
fn distance_away_from(rng: &mut impl Rng, lo: f64, hi: f64, breakpoints: &[f64]) -> f64 {
    loop {
        let d = rng.gen_range(lo..hi);
        if breakpoints.iter().all(|b| (d - b).abs() >= 10.0 * FD_STEP) {
            return d;
        }
    }
}

fn gradient_checks(seed: u64, trials: usize) -> Vec<CheckResult> {
    let h = FD_STEP;
    let mut gamma = CheckResult::new("gradients", "grad_gamma", "rel_error");
    let mut b = CheckResult::new("gradients", "grad_b", "rel_error");
    let mut big_b = CheckResult::new("gradients", "grad_B", "rel_error");
    let mut beta = CheckResult::new("gradients", "grad_beta", "rel_error");
    let mut phi = CheckResult::new("gradients", "grad_phi", "rel_error");
    for t in 0..trials {
        let mut rng = trial_rng(seed, 1, t);
        let cfg = sample_config(&mut rng, Hypothesis::None);
        let i = rng.gen_range(0..cfg.positions.len());
        let field = cfg.field();
        let analytic = field.goal(i, &cfg.positions).1;
        let numeric = finite_difference_gradient(
            |q| {
                let mut p = cfg.positions.clone();
                p[i] = q;
                field.goal(i, &p).0
            },
            cfg.positions[i],
            h,
        );
        let err = relative_error(analytic, numeric);
        gamma.record(t, err, err < FD_TOLERANCE, || (cfg.clone(), format!("agent {}", i + 1)));

        // b over a window around the buffer [R_s - delta_2, R_s]
        let p = cfg.params;
        let (rs, d2) = (p.sensing_radius, p.delta_2);
        let d = distance_away_from(&mut rng, rs - 2.0 * d2, rs + d2, &[rs - d2, rs]);
        let q_j = cfg.positions[0];
        let angle: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let q_i = q_j + Vec2::new(angle.cos(), angle.sin()) * d;
        let analytic = connectivity_gradient(q_i, q_j, rs, d2);
        let numeric = finite_difference_gradient(|q| connectivity_factor(distance(q, q_j), rs, d2), q_i, h);
        let err = relative_error(analytic, numeric);
        b.record(t, err, err < FD_TOLERANCE, || {
            let c = q_i - q_j;
            let pair = Config {
                formation: FormationSpec::new(2, [(0, 1, c)]).unwrap(),
                obstacles: vec![],
                params: p,
                positions: vec![q_i, q_j],
            };
            (pair, format!("b at d = {d}"))
        });

        // B over the collision region and a little beyond
        let d1 = p.delta_1;
        let d = distance_away_from(&mut rng, 0.0, 1.5 * d1, &[0.0, d1]);
        let angle: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let q_k = q_j;
        let q_i = q_k + Vec2::new(angle.cos(), angle.sin()) * d;
        let analytic = collision_gradient(q_i, q_k, d1);
        let numeric = finite_difference_gradient(|q| collision_factor(distance(q, q_k), d1), q_i, h);
        let err = relative_error(analytic, numeric);
        big_b.record(t, err, err < FD_TOLERANCE, || {
            let single = Config {
                formation: FormationSpec::new(1, []).unwrap(),
                obstacles: vec![q_k],
                params: p,
                positions: vec![q_i],
            };
            (single, format!("B at d = {d}"))
        });

        let mut rng = trial_rng(seed, 2, t);
        let cfg = sample_config(&mut rng, Hypothesis::NonDegenerate);
        let i = rng.gen_range(0..cfg.positions.len());
        let field = cfg.field();
        let eval = field.evaluate(i, &cfg.positions).expect("non-degenerate sample");
        let moved = |q: Vec2| {
            let mut p = cfg.positions.clone();
            p[i] = q;
            p
        };
        let numeric = finite_difference_gradient(
            |q| field.constraint(i, &moved(q)).beta,
            cfg.positions[i],
            h,
        );
        let err = relative_error(eval.grad_beta, numeric);
        beta.record(t, err, err < FD_TOLERANCE, || (cfg.clone(), format!("agent {}", i + 1)));

        // phi flattens to 1 far from the goal; skip points where its
        // gradient is below what central differences can resolve
        let mut rng = trial_rng(seed, 3, t);
        let (cfg, i, eval) = loop {
            let cfg = sample_near_formation(&mut rng);
            let i = rng.gen_range(0..cfg.positions.len());
            let eval = cfg.field().evaluate(i, &cfg.positions).expect("non-degenerate sample");
            if eval.grad_phi.norm() >= FD_RESOLUTION * eval.phi {
                break (cfg, i, eval);
            }
        };
        let field = cfg.field();
        let moved = |q: Vec2| {
            let mut p = cfg.positions.clone();
            p[i] = q;
            p
        };
        let numeric = finite_difference_gradient(
            |q| field.phi(i, &moved(q)).unwrap_or(f64::NAN),
            cfg.positions[i],
            h,
        );
        let err = relative_error(eval.grad_phi, numeric);
        phi.record(t, err, err < FD_TOLERANCE, || (cfg.clone(), format!("agent {}", i + 1)));
    }
    let mut out = vec![gamma, b, big_b, beta, phi];
    for r in &mut out {
        r.trials = trials;
    }
    out
}

fn appendix_checks(seed: u64, trials: usize) -> Vec<CheckResult> {
    type Prop = fn(&Config, usize) -> Inequality;
    let props: [(&'static str, Prop, Hypothesis); 5] = [
        ("property1", property1, Hypothesis::None),
        ("property2", property2, Hypothesis::None),
        ("property3", property3, Hypothesis::None),
        ("property4", property4, Hypothesis::None),
        ("property5", property5, Hypothesis::Connected),
    ];
    let mut out = Vec::new();
    for (stream, (name, check, hypothesis)) in props.into_iter().enumerate() {
        let mut result = CheckResult::new("appendix", name, "rel_excess");
        for t in 0..trials {
            let cfg = sample_config(&mut trial_rng(seed, 10 + stream as u64, t), hypothesis);
            per_agent(&mut result, t, &cfg, |i| {
                let ineq = check(&cfg, i);
                (ineq.excess(), ineq.holds())
            });
        }
        result.trials = trials;
        out.push(result);
    }

    // single formation neighbor, beta_i = 1: equality in property 1
    let mut tight = CheckResult::new("appendix", "property1_equality", "rel_gap");
    for t in 0..trials {
        let mut rng = trial_rng(seed, 20, t);
        let cfg = single_neighbor_unconstrained(&mut rng);
        let ineq = property1(&cfg, 0);
        let gap = (ineq.lhs - ineq.rhs).abs() / ineq.rhs.abs().max(ABS_SLACK);
        tight.record(t, gap, gap <= REL_SLACK, || (cfg.clone(), "agent 1".into()));
    }
    tight.trials = trials;
    out.push(tight);

    let mut recomb = CheckResult::new("appendix", "recombination", "rel_error");
    for t in 0..trials {
        let cfg = sample_config(&mut trial_rng(seed, 21, t), Hypothesis::NonDegenerate);
        per_agent(&mut recomb, t, &cfg, |i| match recombination(&cfg, i) {
            Ok((direct, rebuilt)) => {
                let err = (direct - rebuilt).abs() / direct.abs().max(f64::MIN_POSITIVE);
                (err, err <= RECOMBINATION_TOLERANCE || direct == rebuilt)
            }
            Err(_) => (f64::NAN, false),
        });
    }
    recomb.trials = trials;
    out.push(recomb);
    out
}

/// One agent with a single formation neighbor inside the flat part of the
/// connectivity factor and nothing within the collision radius.
fn single_neighbor_unconstrained(rng: &mut impl Rng) -> Config {
    let rs = rng.gen_range(10.0..30.0);
    let params = Params {
        sensing_radius: rs,
        delta_1: rs * rng.gen_range(0.1..0.3),
        delta_2: rs * rng.gen_range(0.05..0.3),
        k: 1.0,
        gain: 1.0,
    };
    loop {
        let d = rng.gen_range(params.delta_1 * 1.01..params.sensing_radius - params.delta_2);
        let a: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let q_i = Vec2::new(d * a.cos(), d * a.sin());
        let c = Vec2::new(rng.gen_range(-rs..rs), rng.gen_range(-rs..rs));
        if q_i == c {
            continue;
        }
        return Config {
            formation: FormationSpec::new(2, [(0, 1, c)]).unwrap(),
            obstacles: vec![],
            params,
            positions: vec![q_i, Vec2::ZERO],
        };
    }
}

fn bound_checks(seed: u64, trials: usize) -> Vec<CheckResult> {
    let mut grad = CheckResult::new("bounds", "grad_gamma_lower_bound", "rel_excess");
    for t in 0..trials {
        let cfg = sample_config(&mut trial_rng(seed, 30, t), Hypothesis::Connected);
        per_agent(&mut grad, t, &cfg, |i| {
            let ineq = gradient_norm_lower_bound(&cfg, i);
            (ineq.excess(), ineq.holds())
        });
    }
    grad.trials = trials;

    let mut decrease = CheckResult::new("bounds", "decrease_condition", "neg_chain");
    for t in 0..trials {
        let mut rng = trial_rng(seed, 31, t);
        let mut cfg = sample_config(&mut rng, Hypothesis::Connected);
        cfg.params.k = [1.0, 4.0, 16.0, 64.0, 256.0][rng.gen_range(0..5)];
        let k = cfg.params.k;
        for i in 0..cfg.positions.len() {
            let rho = RhoConstants::from_property_bounds(&cfg, i);
            let check = check_decrease_condition(&cfg, i, &rho, k);
            if check.is_vacuous() {
                continue;
            }
            decrease.record(t, -check.chain, check.holds(), || {
                (cfg.clone(), format!("agent {}, k = {k}", i + 1))
            });
        }
    }
    decrease.trials = trials;
    vec![grad, decrease]
}

/// Records one claim per configuration: the worst agent.
fn per_agent(result: &mut CheckResult, trial: usize, cfg: &Config, check: impl Fn(usize) -> (f64, bool)) {
    let mut worst = f64::NEG_INFINITY;
    let mut ok = true;
    let mut first_bad = None;
    for i in 0..cfg.positions.len() {
        let (value, holds) = check(i);
        if value > worst || value.is_nan() {
            worst = value;
        }
        if !holds && first_bad.is_none() {
            first_bad = Some(i);
        }
        ok &= holds;
    }
    result.record(trial, worst, ok, || {
        (cfg.clone(), format!("agent {}", first_bad.map_or(0, |i| i + 1)))
    });
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_is_deterministic() {
        let a = run_suite(Suite::All, 42, 20);
        let b = run_suite(Suite::All, 42, 20);
        assert_eq!(a.table(), b.table());
        assert_eq!(a.counterexamples(), b.counterexamples());
    }

    #[test]
    fn suites_select_checks() {
        assert_eq!(run_suite(Suite::Gradients, 1, 3).results.len(), 5);
        assert_eq!(run_suite(Suite::Appendix, 1, 3).results.len(), 7);
        assert_eq!(run_suite(Suite::Bounds, 1, 3).results.len(), 2);
        assert!("nope".parse::<Suite>().is_err());
    }

    #[test]
    fn gradient_suite_passes() {
        let report = run_suite(Suite::Gradients, 7, 200);
        assert!(report.passed(), "{}", report.table());
    }
}
