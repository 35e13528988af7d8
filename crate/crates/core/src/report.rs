//! Minimal SVG charts: axes, ticks, polylines, markers, legend.
//! Output is a pure function of the data, so files are reproducible.

use std::fmt::Write;

use crate::analysis::Region;
use crate::simulate::SimResult;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 36.0;
const BOTTOM: f64 = 48.0;
/// Line series are decimated to at most this many vertices.
pub const MAX_VERTICES: usize = 2000;
const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Style {
    Line,
    /// Zero-order hold: horizontal to the next abscissa, then vertical.
    Step,
    Markers,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub style: Style,
}

impl Series {
    pub fn new(label: impl Into<String>, points: Vec<(f64, f64)>, style: Style) -> Self {
        Self {
            label: label.into(),
            points,
            style,
        }
    }
}

/// A shaded band between two curves sharing abscissae.
#[derive(Debug, Clone, PartialEq)]
pub struct Band {
    pub label: String,
    pub lower: Vec<(f64, f64)>,
    pub upper: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    pub bands: Vec<Band>,
    /// Forces the y-range to include zero.
    pub y_from_zero: bool,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Tick positions at 1, 2 or 5 times a power of ten.
fn ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let span = hi - lo;
    if !(span > 0.0) {
        return vec![lo];
    }
    let raw = span / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| span / s <= target as f64)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|i| i as f64 * step).collect()
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if !(1e-3..1e4).contains(&a) {
        return format!("{v:.0e}");
    }
    let s = format!("{v:.4}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - TOP - BOTTOM)
    }
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if hi > lo {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    } else {
        let w = if lo == 0.0 { 1.0 } else { 0.1 * lo.abs() };
        (lo - w, hi + w)
    }
}

impl Chart {
    pub fn new(
        title: impl Into<String>,
        x_label: impl Into<String>,
        y_label: impl Into<String>,
    ) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            ..Default::default()
        }
    }

    pub fn with(mut self, s: Series) -> Self {
        self.series.push(s);
        self
    }

    fn frame(&self) -> Frame {
        let pts = self
            .series
            .iter()
            .flat_map(|s| s.points.iter())
            .chain(
                self.bands
                    .iter()
                    .flat_map(|b| b.lower.iter().chain(b.upper.iter())),
            )
            .filter(|p| p.0.is_finite() && p.1.is_finite());
        let (mut x0, mut x1, mut y0, mut y1) = (
            f64::INFINITY,
            f64::NEG_INFINITY,
            f64::INFINITY,
            f64::NEG_INFINITY,
        );
        for &(x, y) in pts {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if !x0.is_finite() {
            (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
        }
        if self.y_from_zero {
            y0 = y0.min(0.0);
            y1 = y1.max(0.0);
        }
        if x1 <= x0 {
            (x0, x1) = padded(x0, x1);
        }
        let (y0, y1) = padded(y0, y1);
        Frame { x0, x1, y0, y1 }
    }

    pub fn to_svg(&self) -> String {
        let f = self.frame();
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(
            s,
            r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
            WIDTH / 2.0,
            escape(&self.title)
        );
        let (bx, by) = (HEIGHT - BOTTOM, LEFT);
        for t in ticks(f.x0, f.x1, 8) {
            let x = f.px(t);
            let _ = writeln!(
                s,
                r##"<line x1="{x:.2}" y1="{TOP}" x2="{x:.2}" y2="{bx}" stroke="#eee"/>"##
            );
            let _ = writeln!(
                s,
                r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                bx + 16.0,
                tick_label(t)
            );
        }
        for t in ticks(f.y0, f.y1, 6) {
            let y = f.py(t);
            let _ = writeln!(
                s,
                r##"<line x1="{by}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#eee"/>"##,
                WIDTH - RIGHT
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
                by - 6.0,
                y + 4.0,
                tick_label(t)
            );
        }
        let _ = writeln!(
            s,
            r#"<path d="M{by} {TOP} V{bx} H{:.2}" fill="none" stroke="black"/>"#,
            WIDTH - RIGHT
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            (LEFT + WIDTH - RIGHT) / 2.0,
            HEIGHT - 10.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="16" y="{0:.2}" text-anchor="middle" transform="rotate(-90 16 {0:.2})">{1}</text>"#,
            (TOP + HEIGHT - BOTTOM) / 2.0,
            escape(&self.y_label)
        );

        let mut legend: Vec<(String, &str, bool)> = Vec::new();
        for (i, b) in self.bands.iter().enumerate() {
            let color = PALETTE[(i + 2) % PALETTE.len()];
            let mut d = String::new();
            for (j, &(x, y)) in b.upper.iter().enumerate() {
                let _ = write!(
                    d,
                    "{}{:.2} {:.2} ",
                    if j == 0 { "M" } else { "L" },
                    f.px(x),
                    f.py(y)
                );
            }
            for &(x, y) in b.lower.iter().rev() {
                let _ = write!(d, "L{:.2} {:.2} ", f.px(x), f.py(y));
            }
            let _ = writeln!(
                s,
                r#"<path d="{}Z" fill="{color}" fill-opacity="0.25" stroke="none"/>"#,
                d
            );
            legend.push((b.label.clone(), color, true));
        }
        for (i, ser) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let finite: Vec<(f64, f64)> = ser
                .points
                .iter()
                .copied()
                .filter(|p| p.0.is_finite() && p.1.is_finite())
                .collect();
            let keep = if ser.style == Style::Line {
                finite.len().div_ceil(MAX_VERTICES).max(1)
            } else {
                1
            };
            let pts: Vec<(f64, f64)> = finite
                .iter()
                .enumerate()
                .filter(|(j, _)| j % keep == 0 || j + 1 == finite.len())
                .map(|(_, &(x, y))| (f.px(x), f.py(y)))
                .collect();
            match ser.style {
                Style::Markers => {
                    for (x, y) in &pts {
                        let _ = writeln!(
                            s,
                            r#"<circle cx="{x:.2}" cy="{y:.2}" r="2" fill="{color}"/>"#
                        );
                    }
                }
                Style::Line | Style::Step => {
                    let mut d = String::new();
                    for (j, &(x, y)) in pts.iter().enumerate() {
                        if j > 0 && ser.style == Style::Step {
                            let _ = write!(d, "{:.2},{:.2} ", x, pts[j - 1].1);
                        }
                        let _ = write!(d, "{x:.2},{y:.2} ");
                    }
                    let _ = writeln!(
                        s,
                        r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                        d.trim_end()
                    );
                }
            }
            legend.push((ser.label.clone(), color, false));
        }
        for (i, (label, color, filled)) in legend.iter().enumerate() {
            let y = TOP + 8.0 + 16.0 * i as f64;
            let x = WIDTH - RIGHT - 150.0;
            if *filled {
                let _ = writeln!(
                    s,
                    r#"<rect x="{x}" y="{:.2}" width="18" height="10" fill="{color}" fill-opacity="0.25"/>"#,
                    y - 5.0
                );
            } else {
                let _ = writeln!(
                    s,
                    r#"<line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{color}" stroke-width="2"/>"#,
                    x + 18.0
                );
            }
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}">{}</text>"#,
                x + 24.0,
                y + 4.0,
                escape(label)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

/// The σ window over ρ, shaded where it is nonempty.
pub fn region_chart(region: &Region) -> Chart {
    let lower: Vec<(f64, f64)> = region.rows.iter().map(|r| (r.rho, r.lower)).collect();
    let upper: Vec<(f64, f64)> = region.rows.iter().map(|r| (r.rho, r.upper)).collect();
    let feasible: Vec<_> = region.rows.iter().filter(|r| r.feasible).collect();
    let mut chart = Chart::new("Stabilizable (rho, sigma) region", "rho", "sigma");
    chart
        .series
        .push(Series::new("lower bound", lower, Style::Line));
    chart
        .series
        .push(Series::new("upper bound", upper, Style::Line));
    if !feasible.is_empty() {
        chart.bands.push(Band {
            label: "feasible".into(),
            lower: feasible.iter().map(|r| (r.rho, r.lower)).collect(),
            upper: feasible.iter().map(|r| (r.rho, r.upper)).collect(),
        });
    }
    if let Some((rho, sigma)) = region.crossing {
        chart.series.push(Series::new(
            format!("crossing ({rho:.4}, {sigma:.4})"),
            vec![(rho, sigma)],
            Style::Markers,
        ));
    }
    chart
}

/// State components against time, every `stride`-th grid point.
pub fn state_chart(sim: &SimResult, stride: usize) -> Chart {
    let traj = &sim.trajectory;
    let stride = stride.max(1);
    let mut chart = Chart::new(format!("State, {} scheme", sim.scheme.as_str()), "t", "x");
    for i in 0..traj.dim() {
        let pts = (0..traj.len())
            .filter(|k| k % stride == 0 || *k + 1 == traj.len())
            .map(|k| (traj.time(k), traj.state(k)[i]))
            .collect();
        chart
            .series
            .push(Series::new(format!("x{}", i + 1), pts, Style::Line));
    }
    chart
}

/// Held inputs against time, drawn as a staircase over sampling instants.
pub fn input_chart(sim: &SimResult) -> Chart {
    let mut chart = Chart::new(format!("Input, {} scheme", sim.scheme.as_str()), "t", "u");
    let traj = &sim.trajectory;
    for i in 0..traj.input_dim() {
        let mut pts: Vec<(f64, f64)> = sim
            .records
            .iter()
            .filter(|r| r.steps > 0)
            .filter_map(|r| traj.input(r.index).map(|u| (r.t_k, u[i])))
            .collect();
        if let Some(&(_, y)) = pts.last() {
            pts.push((sim.horizon, y));
        }
        chart
            .series
            .push(Series::new(format!("u{}", i + 1), pts, Style::Step));
    }
    chart
}

/// Inter-sampling times `t_{k+1} − t_k` at each sampling instant.
pub fn interval_chart(sim: &SimResult) -> Chart {
    let dt = sim.trajectory.dt;
    let pts = sim
        .records
        .iter()
        .filter(|r| !r.truncated)
        .map(|r| (r.t_k, r.steps as f64 * dt))
        .collect();
    let mut chart = Chart::new(
        format!("Inter-sampling times, {} scheme", sim.scheme.as_str()),
        "t",
        "interval",
    );
    chart.y_from_zero = true;
    chart.with(Series::new("t(k+1) - t(k)", pts, Style::Markers))
}

/// Relative error series, skipping undefined points and thinning by `stride`.
pub fn error_chart(series: &[(&str, &[(f64, Option<f64>)])], stride: usize) -> Chart {
    let stride = stride.max(1);
    let mut chart = Chart::new(
        "Relative error against the ideal loop",
        "t",
        "relative error",
    );
    chart.y_from_zero = true;
    for (label, data) in series {
        let pts = data
            .iter()
            .enumerate()
            .filter(|(k, _)| k % stride == 0)
            .filter_map(|(_, &(t, e))| e.map(|e| (t, e)))
            .collect();
        chart.series.push(Series::new(*label, pts, Style::Line));
    }
    chart
}
