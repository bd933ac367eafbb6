//! Minimal self-contained SVG plots: line charts, histograms and 2D
//! trajectory overlays.

use std::fmt::Write as _;
use std::path::Path;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum PlotError {
    #[error("series {0:?} has no points")]
    EmptySeries(String),
    #[error("nothing to plot")]
    NoSeries,
    #[error("series {0:?} has a non-finite point")]
    NonFinite(String),
    #[error("series {0:?} has a non-positive value on a log axis")]
    NonPositive(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn new(label: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Series {
            label: label.into(),
            points,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scale {
    #[default]
    Linear,
    Log,
}

#[derive(Debug, Clone, Default)]
pub struct Axes {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub x_scale: Scale,
    pub y_scale: Scale,
}

/// Shortest decimal text with at most 6 significant digits.
pub fn sig6(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let exp = v.abs().log10().floor() as i32;
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        let s = format!("{v:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        let s = format!("{v:.5e}");
        let (mantissa, e) = s.split_once('e').expect("exponent form");
        let mantissa = if mantissa.contains('.') {
            mantissa.trim_end_matches('0').trim_end_matches('.')
        } else {
            mantissa
        };
        format!("{mantissa}e{e}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
    x_scale: Scale,
    y_scale: Scale,
}

fn widen((lo, hi): (f64, f64)) -> (f64, f64) {
    if hi > lo {
        let pad = 0.04 * (hi - lo);
        (lo - pad, hi + pad)
    } else {
        let pad = if lo == 0.0 { 1.0 } else { 0.1 * lo.abs() };
        (lo - pad, hi + pad)
    }
}

fn transform(v: f64, scale: Scale) -> f64 {
    match scale {
        Scale::Linear => v,
        Scale::Log => v.log10(),
    }
}

impl Frame {
    fn new(points: impl Iterator<Item = (f64, f64)>, x_scale: Scale, y_scale: Scale, equal: bool) -> Self {
        let mut x = (f64::INFINITY, f64::NEG_INFINITY);
        let mut y = (f64::INFINITY, f64::NEG_INFINITY);
        for (a, b) in points {
            let (a, b) = (transform(a, x_scale), transform(b, y_scale));
            x = (x.0.min(a), x.1.max(a));
            y = (y.0.min(b), y.1.max(b));
        }
        let (mut x, mut y) = (widen(x), widen(y));
        if equal {
            // same units per pixel on both axes
            let sx = (x.1 - x.0) / (WIDTH - LEFT - RIGHT);
            let sy = (y.1 - y.0) / (HEIGHT - TOP - BOTTOM);
            let s = sx.max(sy);
            let cx = 0.5 * (x.0 + x.1);
            let cy = 0.5 * (y.0 + y.1);
            x = (cx - 0.5 * s * (WIDTH - LEFT - RIGHT), cx + 0.5 * s * (WIDTH - LEFT - RIGHT));
            y = (cy - 0.5 * s * (HEIGHT - TOP - BOTTOM), cy + 0.5 * s * (HEIGHT - TOP - BOTTOM));
        }
        Frame { x, y, x_scale, y_scale }
    }

    fn px(&self, v: f64) -> f64 {
        LEFT + (transform(v, self.x_scale) - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, v: f64) -> f64 {
        HEIGHT - BOTTOM - (transform(v, self.y_scale) - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - TOP - BOTTOM)
    }

    fn length(&self, d: f64) -> f64 {
        d / (self.x.1 - self.x.0) * (WIDTH - LEFT - RIGHT)
    }
}

fn header(out: &mut String, axes: &Axes, frame: &Frame) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        (LEFT + WIDTH - RIGHT) / 2.0,
        escape(&axes.title)
    );
    let (x0, x1, y0, y1) = (LEFT, WIDTH - RIGHT, TOP, HEIGHT - BOTTOM);
    let _ = writeln!(
        out,
        r#"<rect x="{x0}" y="{y0}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        x1 - x0,
        y1 - y0
    );
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let xv = frame.x.0 + f * (frame.x.1 - frame.x.0);
        let yv = frame.y.0 + f * (frame.y.1 - frame.y.0);
        let label = |v: f64, s: Scale| match s {
            Scale::Linear => sig6(v),
            Scale::Log => sig6(10f64.powf(v)),
        };
        let px = x0 + f * (x1 - x0);
        let py = y1 - f * (y1 - y0);
        let _ = writeln!(
            out,
            r#"<line x1="{px}" y1="{y1}" x2="{px}" y2="{}" stroke="black"/><text x="{px}" y="{}" text-anchor="middle">{}</text>"#,
            y1 + 5.0,
            y1 + 18.0,
            label(xv, frame.x_scale)
        );
        let _ = writeln!(
            out,
            r#"<line x1="{}" y1="{py}" x2="{x0}" y2="{py}" stroke="black"/><text x="{}" y="{}" text-anchor="end">{}</text>"#,
            x0 - 5.0,
            x0 - 8.0,
            py + 4.0,
            label(yv, frame.y_scale)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 12.0,
        escape(&axes.x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(&axes.y_label)
    );
}

fn legend(out: &mut String, entries: &[(String, &str)]) {
    for (k, (label, color)) in entries.iter().enumerate() {
        let y = TOP + 10.0 + 18.0 * k as f64;
        let x = WIDTH - RIGHT + 12.0;
        let _ = writeln!(
            out,
            r#"<line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            x + 20.0,
            x + 26.0,
            y + 4.0,
            escape(label)
        );
    }
}

fn polyline(out: &mut String, frame: &Frame, points: &[(f64, f64)], color: &str, width: f64, opacity: f64) {
    if points.len() == 1 {
        let (x, y) = points[0];
        let _ = writeln!(
            out,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}" fill-opacity="{opacity}"/>"#,
            frame.px(x),
            frame.py(y)
        );
        return;
    }
    let mut d = String::new();
    for (x, y) in points {
        let _ = write!(d, "{:.2},{:.2} ", frame.px(*x), frame.py(*y));
    }
    let _ = writeln!(
        out,
        r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="{width}" stroke-opacity="{opacity}"/>"#,
        d.trim_end()
    );
}

fn check(series: &Series, axes: &Axes) -> Result<(), PlotError> {
    if series.points.is_empty() {
        return Err(PlotError::EmptySeries(series.label.clone()));
    }
    for (x, y) in &series.points {
        if !(x.is_finite() && y.is_finite()) {
            return Err(PlotError::NonFinite(series.label.clone()));
        }
        if (axes.x_scale == Scale::Log && *x <= 0.0) || (axes.y_scale == Scale::Log && *y <= 0.0) {
            return Err(PlotError::NonPositive(series.label.clone()));
        }
    }
    Ok(())
}

/// One polyline per series with a legend.
pub fn line_plot(axes: &Axes, series: &[Series]) -> Result<String, PlotError> {
    if series.is_empty() {
        return Err(PlotError::NoSeries);
    }
    for s in series {
        check(s, axes)?;
    }
    let frame = Frame::new(
        series.iter().flat_map(|s| s.points.iter().copied()),
        axes.x_scale,
        axes.y_scale,
        false,
    );
    let mut out = String::new();
    header(&mut out, axes, &frame);
    let mut entries = Vec::new();
    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        polyline(&mut out, &frame, &s.points, color, 2.0, 1.0);
        entries.push((s.label.clone(), color));
    }
    legend(&mut out, &entries);
    out.push_str("</svg>\n");
    Ok(out)
}

/// Normalized histogram of `samples`, optionally with a density curve on top.
pub fn histogram(axes: &Axes, samples: &[f64], bins: usize, density: Option<&Series>) -> Result<String, PlotError> {
    let label = "samples".to_string();
    if samples.is_empty() || bins == 0 {
        return Err(PlotError::EmptySeries(label));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(PlotError::NonFinite(label));
    }
    if let Some(d) = density {
        check(d, &Axes::default())?;
    }
    let lo = samples.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for v in samples {
        let k = (((v - lo) / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    let norm = 1.0 / (samples.len() as f64 * width);
    let heights: Vec<f64> = counts.iter().map(|c| *c as f64 * norm).collect();
    let mut pts: Vec<(f64, f64)> = vec![(lo, 0.0), (hi, 0.0)];
    pts.extend(heights.iter().map(|h| (lo, *h)));
    if let Some(d) = density {
        pts.extend(d.points.iter().copied());
    }
    let frame = Frame::new(pts.into_iter(), Scale::Linear, Scale::Linear, false);
    let mut out = String::new();
    header(&mut out, axes, &frame);
    for (k, h) in heights.iter().enumerate() {
        let x0 = frame.px(lo + k as f64 * width);
        let x1 = frame.px(lo + (k + 1) as f64 * width);
        let y = frame.py(*h);
        let base = frame.py(0.0);
        let _ = writeln!(
            out,
            r##"<rect x="{x0:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="#9ecae1" stroke="#4292c6" stroke-width="0.5"/>"##,
            (x1 - x0).max(0.0),
            (base - y).max(0.0)
        );
    }
    let mut entries = vec![("samples".to_string(), "#9ecae1")];
    if let Some(d) = density {
        polyline(&mut out, &frame, &d.points, PALETTE[1], 2.0, 1.0);
        entries.push((d.label.clone(), PALETTE[1]));
    }
    legend(&mut out, &entries);
    out.push_str("</svg>\n");
    Ok(out)
}

/// Planar scene: obstacle disc, goal, demonstrations, a plan and executed paths.
#[derive(Debug, Clone, Default)]
pub struct Overlay {
    pub title: String,
    pub obstacle_center: [f64; 2],
    pub obstacle_radius: f64,
    pub goal: [f64; 2],
    pub goal_radius: f64,
    pub demonstrations: Vec<Vec<(f64, f64)>>,
    pub plan: Vec<(f64, f64)>,
    pub executed: Vec<Vec<(f64, f64)>>,
}

pub fn trajectory_overlay(scene: &Overlay) -> Result<String, PlotError> {
    if scene.executed.is_empty() && scene.plan.is_empty() && scene.demonstrations.is_empty() {
        return Err(PlotError::NoSeries);
    }
    let named = std::iter::once(("plan", &scene.plan))
        .chain(scene.executed.iter().map(|p| ("executed", p)))
        .chain(scene.demonstrations.iter().map(|p| ("demonstration", p)));
    for (label, p) in named {
        if p.is_empty() && label != "plan" {
            return Err(PlotError::EmptySeries(label.into()));
        }
        if p.iter().any(|(x, y)| !(x.is_finite() && y.is_finite())) {
            return Err(PlotError::NonFinite(label.into()));
        }
    }
    let (c, r) = (scene.obstacle_center, scene.obstacle_radius);
    let extent = [
        (c[0] - r, c[1] - r),
        (c[0] + r, c[1] + r),
        (scene.goal[0], scene.goal[1]),
    ];
    let frame = Frame::new(
        scene
            .demonstrations
            .iter()
            .chain(&scene.executed)
            .flatten()
            .chain(&scene.plan)
            .copied()
            .chain(extent),
        Scale::Linear,
        Scale::Linear,
        true,
    );
    let axes = Axes {
        title: scene.title.clone(),
        x_label: "x".into(),
        y_label: "y".into(),
        ..Axes::default()
    };
    let mut out = String::new();
    header(&mut out, &axes, &frame);
    let _ = writeln!(
        out,
        r##"<circle cx="{:.2}" cy="{:.2}" r="{:.2}" fill="#bbbbbb" stroke="black"/>"##,
        frame.px(c[0]),
        frame.py(c[1]),
        frame.length(r)
    );
    let _ = writeln!(
        out,
        r##"<circle cx="{:.2}" cy="{:.2}" r="{:.2}" fill="none" stroke="#2ca02c" stroke-dasharray="4 2"/>"##,
        frame.px(scene.goal[0]),
        frame.py(scene.goal[1]),
        frame.length(scene.goal_radius.max(0.0))
    );
    for d in &scene.demonstrations {
        polyline(&mut out, &frame, d, "#7f7f7f", 1.0, 0.35);
    }
    for e in &scene.executed {
        polyline(&mut out, &frame, e, PALETTE[0], 1.5, 0.8);
    }
    if !scene.plan.is_empty() {
        polyline(&mut out, &frame, &scene.plan, PALETTE[1], 2.0, 1.0);
    }
    legend(
        &mut out,
        &[
            ("obstacle".into(), "#bbbbbb"),
            ("goal radius".into(), "#2ca02c"),
            ("demonstrations".into(), "#7f7f7f"),
            ("executed".into(), PALETTE[0]),
            ("first plan".into(), PALETTE[1]),
        ],
    );
    out.push_str("</svg>\n");
    Ok(out)
}

pub fn write_svg(path: &Path, svg: &str) -> std::io::Result<()> {
    std::fs::write(path, svg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(0.0), "0");
        assert_eq!(sig6(1.0), "1");
        assert_eq!(sig6(1.23456789), "1.23457");
        assert_eq!(sig6(-123456.7), "-123457");
        assert_eq!(sig6(0.000123456789), "0.000123457");
        assert_eq!(sig6(1.5e-7), "1.5e-7");
        assert_eq!(sig6(2.0e9), "2e9");
    }

    #[test]
    fn empty_series_is_an_error() {
        let axes = Axes::default();
        assert_eq!(
            line_plot(&axes, &[Series::new("a", vec![])]),
            Err(PlotError::EmptySeries("a".into()))
        );
        assert_eq!(line_plot(&axes, &[]), Err(PlotError::NoSeries));
        assert!(histogram(&axes, &[], 10, None).is_err());
    }

    #[test]
    fn single_point_is_valid() {
        let svg = line_plot(&Axes::default(), &[Series::new("p", vec![(1.0, 2.0)])]).unwrap();
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("<circle"));
    }

    #[test]
    fn log_axes_reject_non_positive() {
        let axes = Axes {
            x_scale: Scale::Log,
            y_scale: Scale::Log,
            ..Axes::default()
        };
        assert!(line_plot(&axes, &[Series::new("e", vec![(100.0, 0.1), (1e5, 0.003)])]).is_ok());
        assert_eq!(
            line_plot(&axes, &[Series::new("e", vec![(0.0, 1.0)])]),
            Err(PlotError::NonPositive("e".into()))
        );
    }

    #[test]
    fn overlay_draws_every_layer() {
        let scene = Overlay {
            title: "nav".into(),
            obstacle_center: [1.0, 0.0],
            obstacle_radius: 0.3,
            goal: [2.0, 0.0],
            goal_radius: 0.1,
            demonstrations: vec![vec![(0.0, 0.0), (1.0, 0.5), (2.0, 0.0)]],
            plan: vec![(0.0, 0.0), (0.3, 0.2)],
            executed: vec![vec![(0.0, 0.0), (1.0, 0.45), (1.95, 0.0)]],
        };
        let svg = trajectory_overlay(&scene).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 3);
        assert_eq!(svg.matches("<circle").count(), 2);
    }
}
