use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use navform::plot::{distance_svg, trajectory_svg};
use navform::sim::{write_trajectory_csv, OnViolation, Summary};
use navform::switching::LinkFailureModel;
use navform::verify::{run_suite, Suite};
use navform::{run, validate_scenario, RunOutput, Scenario, SimError, SimOptions, Violation};

#[derive(Parser)]
#[command(name = "navform", version, about = "Navigation-function formation control under intermittent sensing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write the trajectory, summary and plots.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Output directory (created if missing).
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Override the scenario's random seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value_t = ViolationMode::Flag)]
        on_violation: ViolationMode,
        #[arg(long)]
        no_plots: bool,
        /// Keep every n-th step in the trajectory CSV.
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
        decimate: u64,
    },
    /// Check a scenario against the standing assumptions.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Run the numerical verification suites.
    Verify {
        #[arg(value_enum, default_value_t = SuiteArg::All)]
        suite: SuiteArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        /// Write counterexamples to this file instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a scenario once per parameter value and tabulate the outcomes.
    Sweep {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_enum)]
        param: SweepParam,
        /// Comma-separated values; may be empty.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Vec<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Also write the table as CSV to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ViolationMode {
    Abort,
    Flag,
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    All,
    Gradients,
    Appendix,
    Bounds,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepParam {
    K,
    #[value(name = "Gamma")]
    Gamma,
    #[value(name = "p_fail")]
    PFail,
    #[value(name = "delta_2")]
    Delta2,
}

/// Process exit statuses.
mod exit {
    pub const INPUT: u8 = 1;
    pub const MONITOR: u8 = 2;
    pub const NUMERICAL: u8 = 3;
    pub const OUTPUT: u8 = 4;
}

/// An error with the exit status it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn new(code: u8, error: impl Into<anyhow::Error>) -> Self {
        Failure {
            code,
            error: error.into(),
        }
    }
}

type CmdResult = Result<u8, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            scenario,
            out,
            seed,
            on_violation,
            no_plots,
            decimate,
        } => cmd_run(&RunOptions {
            scenario,
            out,
            seed,
            on_violation: match on_violation {
                ViolationMode::Abort => OnViolation::Abort,
                ViolationMode::Flag => OnViolation::Flag,
            },
            emit_plots: !no_plots,
            decimation: decimate as usize,
        }),
        Command::Validate { scenario } => cmd_validate(&scenario),
        Command::Verify {
            suite,
            seed,
            trials,
            out,
        } => cmd_verify(suite, seed, trials, out.as_deref()),
        Command::Sweep {
            scenario,
            param,
            values,
            seed,
            out,
        } => cmd_sweep(&scenario, param, &values, seed, out.as_deref()),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

struct RunOptions {
    scenario: PathBuf,
    out: PathBuf,
    seed: Option<u64>,
    on_violation: OnViolation,
    emit_plots: bool,
    decimation: usize,
}

fn load(path: &Path, seed: Option<u64>) -> Result<Scenario, Failure> {
    let mut s = Scenario::load(path)
        .with_context(|| format!("reading scenario {}", path.display()))
        .map_err(|e| Failure::new(exit::INPUT, e))?;
    if let Some(seed) = seed {
        s.integration.seed = seed;
    }
    Ok(s)
}

fn print_violations(violations: &[Violation]) {
    for v in violations {
        if v.is_blocking() {
            eprintln!("violation: {v}");
        } else {
            eprintln!("warning: {v}");
        }
    }
}

fn simulate(s: &Scenario, options: SimOptions) -> Result<RunOutput, Failure> {
    run(s, options).map_err(|e| {
        let code = match &e {
            SimError::Invalid(_) | SimError::Bound(_) => exit::INPUT,
            _ => exit::NUMERICAL,
        };
        Failure::new(code, e)
    })
}

fn cmd_run(o: &RunOptions) -> CmdResult {
    let s = load(&o.scenario, o.seed)?;
    let violations = validate_scenario(&s);
    print_violations(&violations);
    if violations.iter().any(Violation::is_blocking) {
        return Err(Failure::new(exit::INPUT, anyhow!("scenario violates standing assumptions")));
    }
    let out = simulate(
        &s,
        SimOptions {
            on_violation: o.on_violation,
            ..Default::default()
        },
    )?;

    let io = |e: anyhow::Error| Failure::new(exit::OUTPUT, e);
    fs::create_dir_all(&o.out)
        .with_context(|| format!("creating {}", o.out.display()))
        .map_err(io)?;
    let csv_path = o.out.join("trajectory.csv");
    let file = fs::File::create(&csv_path)
        .with_context(|| format!("creating {}", csv_path.display()))
        .map_err(io)?;
    let mut w = BufWriter::new(file);
    write_trajectory_csv(&out.log, &mut w, o.decimation)
        .and_then(|_| w.flush())
        .with_context(|| format!("writing {}", csv_path.display()))
        .map_err(io)?;
    let summary = Summary::new(&s, &out);
    write_file(&o.out.join("summary.toml"), &summary.to_toml()).map_err(io)?;
    if o.emit_plots {
        write_file(&o.out.join("trajectories.svg"), &trajectory_svg(&out.log, &s)).map_err(io)?;
        write_file(
            &o.out.join("distances.svg"),
            &distance_svg(&out.log, s.params.sensing_radius),
        )
        .map_err(io)?;
    }

    for v in &out.verdicts {
        println!("{:<12} {}  {}", v.name, if v.passed { "PASS" } else { "FAIL" }, v.detail);
    }
    println!("final max residual {:.6e}", out.observed_max_residual);
    if let Some(a) = &out.aborted {
        println!("aborted at t = {}: {}", out.log.times[a.step], a.reason);
    }
    Ok(if out.all_passed() { 0 } else { exit::MONITOR })
}

fn write_file(path: &Path, text: &str) -> anyhow::Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn cmd_validate(path: &Path) -> CmdResult {
    let s = load(path, None)?;
    let violations = validate_scenario(&s);
    print_violations(&violations);
    if violations.iter().any(Violation::is_blocking) {
        return Ok(exit::INPUT);
    }
    println!(
        "ok: {} agents, {} formation edges, {} obstacles",
        s.agent_count(),
        s.formation.pairs().count(),
        s.obstacles.len()
    );
    Ok(0)
}

fn cmd_verify(suite: SuiteArg, seed: u64, trials: usize, out: Option<&Path>) -> CmdResult {
    let suite = match suite {
        SuiteArg::All => Suite::All,
        SuiteArg::Gradients => Suite::Gradients,
        SuiteArg::Appendix => Suite::Appendix,
        SuiteArg::Bounds => Suite::Bounds,
    };
    let report = run_suite(suite, seed, trials);
    print!("{}", report.table());
    if report.passed() {
        return Ok(0);
    }
    let dump = report.counterexamples();
    match out {
        Some(path) => {
            write_file(path, &dump).map_err(|e| Failure::new(exit::OUTPUT, e))?;
            println!("counterexamples written to {}", path.display());
        }
        None => print!("\n{dump}"),
    }
    Ok(1)
}

fn apply(s: &mut Scenario, param: SweepParam, value: f64) -> anyhow::Result<()> {
    match param {
        SweepParam::K => s.params.k = value,
        SweepParam::Gamma => s.params.gain = value,
        SweepParam::Delta2 => s.params.delta_2 = value,
        SweepParam::PFail => match &mut s.failures {
            LinkFailureModel::Random(r) => r.p_fail = value,
            LinkFailureModel::Schedule(_) => {
                return Err(anyhow!("sweeping p_fail needs a scenario with random failures"))
            }
        },
    }
    Ok(())
}

fn cmd_sweep(path: &Path, param: SweepParam, values: &[f64], seed: Option<u64>, out: Option<&Path>) -> CmdResult {
    let base = load(path, seed)?;
    let mut scenarios = Vec::with_capacity(values.len());
    for &v in values {
        let mut s = base.clone();
        apply(&mut s, param, v).map_err(|e| Failure::new(exit::INPUT, e))?;
        scenarios.push(s);
    }
    let runs: Vec<Result<RunOutput, Failure>> = scenarios
        .par_iter()
        .map(|s| simulate(s, SimOptions::default()))
        .collect();

    let name = match param {
        SweepParam::K => "k",
        SweepParam::Gamma => "Gamma",
        SweepParam::PFail => "p_fail",
        SweepParam::Delta2 => "delta_2",
    };
    let mut csv = format!("{name},max_residual,v_final,connectivity,collision,lyapunov,range_flag,passed\n");
    println!(
        "{name:>10} {:>14} {:>14}  connectivity collision lyapunov range_flag",
        "max_residual", "V(t_final)"
    );
    for (v, r) in values.iter().zip(runs) {
        let r = r?;
        let verdict = |n: &str| r.verdicts.iter().find(|x| x.name == n).is_some_and(|x| x.passed);
        let mark = |ok: bool| if ok { "PASS" } else { "FAIL" };
        let v_final = r.log.v_values.last().copied().unwrap_or(f64::NAN);
        println!(
            "{v:>10} {:>14.6e} {v_final:>14.6e}  {:<12} {:<9} {:<8} {}",
            r.observed_max_residual,
            mark(verdict("connectivity")),
            mark(verdict("collision")),
            mark(verdict("lyapunov")),
            mark(verdict("range_flag")),
        );
        csv.push_str(&format!(
            "{v},{:e},{v_final:e},{},{},{},{},{}\n",
            r.observed_max_residual,
            verdict("connectivity"),
            verdict("collision"),
            verdict("lyapunov"),
            verdict("range_flag"),
            r.all_passed()
        ));
    }
    if let Some(path) = out {
        write_file(path, &csv).map_err(|e| Failure::new(exit::OUTPUT, e))?;
    }
    Ok(0)
}
