//! Self-contained SVG figures: agent trajectories among the obstacles, and
//! formation-pair distances against the sensing radius.
//!
//! Output is a pure function of the log, so identical runs give identical
//! bytes.

use std::fmt::Write;

use crate::geom::Vec2;
use crate::model::Scenario;
use crate::sim::TrajectoryLog;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 56.0;
const MAX_POINTS: usize = 1500;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2",
];

fn color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

/// Data range padded by 10% on each side.
fn padded(lo: f64, hi: f64) -> (f64, f64) {
    let span = hi - lo;
    let pad = if span > 0.0 { 0.1 * span } else { lo.abs().max(1.0) * 0.1 };
    (lo - pad, hi + pad)
}

/// Tick step of the form {1, 2, 5} x 10^n giving roughly six ticks.
fn tick_step(span: f64) -> f64 {
    let raw = span / 6.0;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let nice = if norm < 1.5 {
        1.0
    } else if norm < 3.5 {
        2.0
    } else if norm < 7.5 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

/// Linear map from data coordinates to the plot area.
struct Frame {
    x: (f64, f64),
    y: (f64, f64),
    left: f64,
    top: f64,
    w: f64,
    h: f64,
}

impl Frame {
    fn new(x: (f64, f64), y: (f64, f64), equal_aspect: bool) -> Self {
        let (mut w, mut h) = (WIDTH - 2.0 * MARGIN, HEIGHT - 2.0 * MARGIN);
        let (mut left, mut top) = (MARGIN, MARGIN);
        if equal_aspect {
            let s = (w / (x.1 - x.0)).min(h / (y.1 - y.0));
            let (nw, nh) = (s * (x.1 - x.0), s * (y.1 - y.0));
            left += (w - nw) / 2.0;
            top += (h - nh) / 2.0;
            w = nw;
            h = nh;
        }
        Frame { x, y, left, top, w, h }
    }

    fn px(&self, v: f64) -> f64 {
        self.left + (v - self.x.0) / (self.x.1 - self.x.0) * self.w
    }

    fn py(&self, v: f64) -> f64 {
        self.top + (self.y.1 - v) / (self.y.1 - self.y.0) * self.h
    }

    fn point(&self, p: Vec2) -> (f64, f64) {
        (self.px(p.x), self.py(p.y))
    }

    fn axes(&self, svg: &mut String, xlabel: &str, ylabel: &str) {
        let (l, t, r, b) = (self.left, self.top, self.left + self.w, self.top + self.h);
        let _ = writeln!(
            svg,
            r##"<rect x="{l:.2}" y="{t:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="#333"/>"##,
            self.w, self.h
        );
        let step = tick_step(self.x.1 - self.x.0);
        let mut v = (self.x.0 / step).ceil() * step;
        while v <= self.x.1 {
            let x = self.px(v);
            let _ = writeln!(
                svg,
                r##"<line x1="{x:.2}" y1="{b:.2}" x2="{x:.2}" y2="{:.2}" stroke="#333"/><text x="{x:.2}" y="{:.2}" text-anchor="middle" font-size="11">{}</text>"##,
                b + 5.0,
                b + 18.0,
                tick_label(v, step)
            );
            v += step;
        }
        let step = tick_step(self.y.1 - self.y.0);
        let mut v = (self.y.0 / step).ceil() * step;
        while v <= self.y.1 {
            let y = self.py(v);
            let _ = writeln!(
                svg,
                r##"<line x1="{:.2}" y1="{y:.2}" x2="{l:.2}" y2="{y:.2}" stroke="#333"/><text x="{:.2}" y="{:.2}" text-anchor="end" font-size="11">{}</text>"##,
                l - 5.0,
                l - 8.0,
                y + 4.0,
                tick_label(v, step)
            );
            v += step;
        }
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="13">{xlabel}</text>"#,
            (l + r) / 2.0,
            b + 38.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="13" transform="rotate(-90 {:.2} {:.2})">{ylabel}</text>"#,
            l - 40.0,
            (t + b) / 2.0,
            l - 40.0,
            (t + b) / 2.0
        );
    }
}

fn tick_label(v: f64, step: f64) -> String {
    let decimals = if step >= 1.0 { 0 } else { (-step.log10()).ceil() as usize };
    let s = format!("{v:.decimals$}");
    // avoid "-0"
    if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
        s.trim_start_matches('-').to_string()
    } else {
        s
    }
}

fn header(title: &str) -> String {
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="15">{title}</text>"#,
        WIDTH / 2.0
    );
    svg
}

/// Indices of at most `MAX_POINTS` evenly spaced steps, last step included.
fn thinned(len: usize) -> Vec<usize> {
    if len == 0 {
        return Vec::new();
    }
    let stride = len.div_ceil(MAX_POINTS).max(1);
    let mut idx: Vec<usize> = (0..len).step_by(stride).collect();
    if *idx.last().unwrap() != len - 1 {
        idx.push(len - 1);
    }
    idx
}

fn polyline(svg: &mut String, points: impl Iterator<Item = (f64, f64)>, stroke: &str, extra: &str) {
    svg.push_str("<polyline fill=\"none\" stroke=\"");
    svg.push_str(stroke);
    svg.push_str("\" stroke-width=\"1.5\"");
    svg.push_str(extra);
    svg.push_str(" points=\"");
    for (k, (x, y)) in points.enumerate() {
        if k > 0 {
            svg.push(' ');
        }
        let _ = write!(svg, "{x:.2},{y:.2}");
    }
    svg.push_str("\"/>\n");
}

/// Agent paths from start (hollow) to end (filled), obstacles with their
/// collision radius, and the final formation edges.
pub fn trajectory_svg(log: &TrajectoryLog, scenario: &Scenario) -> String {
    let obstacles = scenario.obstacles.points();
    let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
    let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &p in log.positions.iter().flatten().chain(obstacles) {
        lo = Vec2::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Vec2::new(hi.x.max(p.x), hi.y.max(p.y));
    }
    let frame = Frame::new(padded(lo.x, hi.x), padded(lo.y, hi.y), true);
    let mut svg = header("Agent trajectories");
    frame.axes(&mut svg, "x", "y");

    let r = frame.w / (frame.x.1 - frame.x.0) * scenario.params.delta_1;
    for &o in obstacles {
        let (x, y) = frame.point(o);
        let _ = writeln!(
            svg,
            r##"<circle cx="{x:.2}" cy="{y:.2}" r="{r:.2}" fill="none" stroke="#999" stroke-dasharray="4 3"/><rect x="{:.2}" y="{:.2}" width="8" height="8" fill="black"/>"##,
            x - 4.0,
            y - 4.0
        );
    }
    let last = log.final_positions();
    for (i, j) in scenario.formation.pairs() {
        let (x1, y1) = frame.point(last[i]);
        let (x2, y2) = frame.point(last[j]);
        let _ = writeln!(
            svg,
            r##"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="#777" stroke-dasharray="2 2"/>"##
        );
    }
    let idx = thinned(log.len());
    for (i, &end) in last.iter().enumerate() {
        polyline(
            &mut svg,
            idx.iter().map(|&k| frame.point(log.positions[k][i])),
            color(i),
            "",
        );
        let (sx, sy) = frame.point(log.positions[0][i]);
        let (ex, ey) = frame.point(end);
        let _ = writeln!(
            svg,
            r#"<circle cx="{sx:.2}" cy="{sy:.2}" r="4" fill="white" stroke="{c}"/><circle cx="{ex:.2}" cy="{ey:.2}" r="4" fill="{c}"/><text x="{:.2}" y="{:.2}" font-size="12" fill="{c}">{}</text>"#,
            ex + 6.0,
            ey - 6.0,
            i + 1,
            c = color(i)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Formation-pair distances over time with the sensing radius.
pub fn distance_svg(log: &TrajectoryLog, sensing_radius: f64) -> String {
    let t_end = log.times.last().copied().unwrap_or(0.0);
    let d_max = log
        .pair_distances
        .iter()
        .flatten()
        .fold(sensing_radius, |a, &b| a.max(b));
    let d_min = log
        .pair_distances
        .iter()
        .flatten()
        .fold(0.0f64, |a, &b| a.min(b));
    let x = if t_end > 0.0 { (0.0, t_end) } else { padded(0.0, 0.0) };
    let frame = Frame::new(x, padded(d_min, d_max), false);
    let mut svg = header("Formation-pair distances");
    frame.axes(&mut svg, "t", "d_ij");

    let y = frame.py(sensing_radius);
    let _ = writeln!(
        svg,
        r#"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="black" stroke-width="1.5" stroke-dasharray="6 4"/><text x="{:.2}" y="{:.2}" text-anchor="end" font-size="12">R_s</text>"#,
        frame.left,
        frame.left + frame.w,
        frame.left + frame.w - 4.0,
        y - 5.0
    );
    let idx = thinned(log.len());
    for (p, &(i, j)) in log.pairs.iter().enumerate() {
        polyline(
            &mut svg,
            idx.iter()
                .map(|&k| (frame.px(log.times[k]), frame.py(log.pair_distances[k][p]))),
            color(p),
            "",
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-size="12" fill="{}">d_{}{}</text>"#,
            frame.left + 8.0 + 48.0 * p as f64,
            frame.top + 16.0,
            color(p),
            i + 1,
            j + 1
        );
    }
    svg.push_str("</svg>\n");
    svg
}
