//! Trajectory CSV and run summary.

use std::io::{self, Write};

use serde::Serialize;

use super::{BoundReport, RunOutput, TrajectoryLog, Verdict};
use crate::geom::Vec2;
use crate::model::Scenario;

pub const CSV_HEADER: &str = "t,agent,qx,qy,ux,uy,in_Vf";

/// Round to 12 significant digits and print the shortest decimal that
/// reads back to the rounded value.
pub fn sig12(x: f64) -> String {
    let rounded: f64 = format!("{x:.11e}").parse().unwrap_or(x);
    format!("{rounded:?}")
}

/// One row per agent per kept step; steps whose index is a multiple of
/// `decimation` are kept.
pub fn write_trajectory_csv<W: Write>(log: &TrajectoryLog, mut out: W, decimation: usize) -> io::Result<()> {
    let decimation = decimation.max(1);
    writeln!(out, "{CSV_HEADER}")?;
    for k in (0..log.len()).step_by(decimation) {
        for (i, (q, u)) in log.positions[k].iter().zip(&log.controls[k]).enumerate() {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                sig12(log.times[k]),
                i + 1,
                sig12(q.x),
                sig12(q.y),
                sig12(u.x),
                sig12(u.y),
                u8::from(log.active[k].in_vf(i))
            )?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsvRow {
    pub t: f64,
    /// 1-based.
    pub agent: usize,
    pub q: Vec2,
    pub u: Vec2,
    pub in_vf: bool,
}

#[derive(Debug, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct CsvError {
    pub line: usize,
    pub message: String,
}

pub fn read_trajectory_csv(text: &str) -> Result<Vec<CsvRow>, CsvError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == CSV_HEADER => {}
        _ => {
            return Err(CsvError {
                line: 1,
                message: format!("expected header {CSV_HEADER:?}"),
            })
        }
    }
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            let err = |message: String| CsvError { line: n + 1, message };
            let f: Vec<&str> = l.split(',').map(str::trim).collect();
            if f.len() != 7 {
                return Err(err(format!("expected 7 fields, found {}", f.len())));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| err(format!("{s:?}: {e}")));
            Ok(CsvRow {
                t: num(f[0])?,
                agent: f[1].parse().map_err(|e| err(format!("{:?}: {e}", f[1])))?,
                q: Vec2::new(num(f[2])?, num(f[3])?),
                u: Vec2::new(num(f[4])?, num(f[5])?),
                in_vf: match f[6] {
                    "1" => true,
                    "0" => false,
                    other => return Err(err(format!("in_Vf must be 0 or 1, got {other:?}"))),
                },
            })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct EdgeResidual {
    pub pair: [usize; 2],
    pub distance: f64,
    pub desired_distance: f64,
    pub residual: f64,
}

/// Run summary written next to the trajectory CSV.
#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub all_passed: bool,
    pub steps: usize,
    pub t_final: f64,
    pub switches: usize,
    pub coverage_vf_union: bool,
    pub coverage_closed_neighborhoods: bool,
    pub v_initial: f64,
    pub v_final: f64,
    pub max_residual_final: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aborted: Option<String>,
    pub monitors: Vec<Verdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound: Option<BoundReport>,
    pub residuals: Vec<EdgeResidual>,
}

impl Summary {
    pub fn new(s: &Scenario, out: &RunOutput) -> Self {
        let log = &out.log;
        let q = log.final_positions();
        let residuals = s
            .formation
            .pairs()
            .map(|(i, j)| {
                let c = s.formation.offset(i, j).unwrap();
                EdgeResidual {
                    pair: [i + 1, j + 1],
                    distance: (q[i] - q[j]).norm(),
                    desired_distance: c.norm(),
                    residual: (q[i] - q[j] - c).norm(),
                }
            })
            .collect();
        Summary {
            all_passed: out.all_passed(),
            steps: log.len().saturating_sub(1),
            t_final: log.times.last().copied().unwrap_or(0.0),
            switches: out.switches,
            coverage_vf_union: out.coverage,
            coverage_closed_neighborhoods: out.neighborhood_coverage,
            v_initial: log.v_values.first().copied().unwrap_or(0.0),
            v_final: log.v_values.last().copied().unwrap_or(0.0),
            max_residual_final: out.observed_max_residual,
            aborted: out
                .aborted
                .as_ref()
                .map(|a| format!("step {}: {}", a.step, a.reason)),
            monitors: out.verdicts.clone(),
            bound: out.bound,
            residuals,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("summary fields are TOML-representable")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig12_rounds_and_reads_back() {
        assert_eq!(sig12(0.001), "0.001");
        assert_eq!(sig12(1.0 / 3.0), "0.333333333333");
        assert_eq!(sig12(-2.0), "-2.0");
        assert_eq!(sig12(1e-20), "1e-20");
        let x = 12.345678901234567;
        let y: f64 = sig12(x).parse().unwrap();
        assert!((x - y).abs() <= 1e-11 * x.abs());
    }

    #[test]
    fn malformed_rows_are_rejected() {
        assert!(read_trajectory_csv("a,b\n").is_err());
        let text = format!("{CSV_HEADER}\n0.0,1,0.0,0.0,0.0,0.0,2\n");
        assert!(read_trajectory_csv(&text).is_err());
        let text = format!("{CSV_HEADER}\n0.0,1,0.0,0.0,0.0,0.0\n");
        assert_eq!(read_trajectory_csv(&text).unwrap_err().line, 2);
    }
}
