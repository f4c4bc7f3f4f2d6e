//! Static SVG figures, each written next to a tab-separated table holding
//! the plotted numbers.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::estimator::FrictionCircle;
use crate::fsutil::write_atomic;

const SIZE: f64 = 400.0;
const MARGIN: f64 = 40.0;

/// Residuals of one stream against its thresholds.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResidualTrace {
    pub name: String,
    pub t: Vec<f64>,
    pub linear: Vec<f64>,
    pub angular: Vec<f64>,
    pub linear_threshold: f64,
    pub angular_threshold: f64,
}

/// Ground-truth trials and estimates for one surface.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SurfaceComparison {
    pub surface: String,
    pub ground_truth: Vec<f64>,
    pub estimates: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct PlotInputs {
    pub circles: Vec<FrictionCircle>,
    pub traces: Vec<ResidualTrace>,
    pub comparison: Vec<SurfaceComparison>,
}

fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Linear map from a data interval onto a pixel interval.
#[derive(Clone, Copy)]
struct Axis {
    lo: f64,
    hi: f64,
    px_lo: f64,
    px_hi: f64,
}

impl Axis {
    fn new(lo: f64, hi: f64, px_lo: f64, px_hi: f64) -> Self {
        let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
        Self { lo, hi, px_lo, px_hi }
    }

    fn px(&self, v: f64) -> f64 {
        self.px_lo + (v - self.lo) / (self.hi - self.lo) * (self.px_hi - self.px_lo)
    }
}

fn svg_open(out: &mut String, w: f64, h: f64, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="20" text-anchor="middle" font-family="sans-serif" font-size="14">{}</text>"#,
        w / 2.0,
        escape(title)
    );
}

fn no_data(out: &mut String, w: f64, h: f64) {
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-family="sans-serif" font-size="16" fill="gray">no data</text>"#,
        w / 2.0,
        h / 2.0
    );
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn polyline(out: &mut String, xs: &[f64], ys: &[f64], x: Axis, y: Axis, stroke: &str, dash: bool) {
    let mut pts = String::new();
    for (a, b) in xs.iter().zip(ys) {
        let _ = write!(pts, "{:.2},{:.2} ", x.px(*a), y.px(*b));
    }
    let dash = if dash { r#" stroke-dasharray="6,4""# } else { "" };
    let _ = writeln!(
        out,
        r#"<polyline points="{}" fill="none" stroke="{stroke}" stroke-width="1"{dash}/>"#,
        pts.trim_end()
    );
}

fn star(out: &mut String, cx: f64, cy: f64, r: f64) {
    let mut pts = String::new();
    for k in 0..10 {
        let radius = if k % 2 == 0 { r } else { r * 0.45 };
        let a = std::f64::consts::PI * (k as f64) / 5.0 - std::f64::consts::FRAC_PI_2;
        let _ = write!(pts, "{:.2},{:.2} ", cx + radius * a.cos(), cy + radius * a.sin());
    }
    let _ = writeln!(
        out,
        r#"<polygon points="{}" fill="gold" stroke="black"/>"#,
        pts.trim_end()
    );
}

fn circle_svg(c: &FrictionCircle) -> String {
    let mut out = String::new();
    let title = format!("friction circle: {} (mu = {:.3})", c.surface, c.radius());
    svg_open(&mut out, SIZE, SIZE, &title);
    if c.points.is_empty() {
        no_data(&mut out, SIZE, SIZE);
        out.push_str("</svg>\n");
        return out;
    }
    let extent = c
        .points
        .iter()
        .map(|p| p.ax_g.hypot(p.ay_g))
        .fold(c.radius(), f64::max)
        .max(0.25)
        * 1.15;
    // lateral on the horizontal axis, longitudinal on the vertical axis
    let x = Axis::new(-extent, extent, MARGIN, SIZE - MARGIN);
    let y = Axis::new(-extent, extent, SIZE - MARGIN, MARGIN);
    let _ = writeln!(
        out,
        r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black"/>"#,
        x.px(-extent),
        y.px(0.0),
        x.px(extent),
        y.px(0.0)
    );
    let _ = writeln!(
        out,
        r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black"/>"#,
        x.px(0.0),
        y.px(-extent),
        x.px(0.0),
        y.px(extent)
    );
    for p in &c.points {
        let fill = if p.no_slip { "steelblue" } else { "lightgray" };
        let _ = writeln!(
            out,
            r#"<circle cx="{:.2}" cy="{:.2}" r="2" fill="{fill}"/>"#,
            x.px(p.ay_g),
            y.px(p.ax_g)
        );
    }
    if let Some(peak) = c.estimate.peak() {
        let r_px = x.px(c.radius()) - x.px(0.0);
        let _ = writeln!(
            out,
            r#"<circle cx="{:.2}" cy="{:.2}" r="{:.2}" fill="none" stroke="red" stroke-width="2"/>"#,
            x.px(0.0),
            y.px(0.0),
            r_px
        );
        star(&mut out, x.px(peak.a_y / c.g), y.px(peak.a_x / c.g), 8.0);
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-family="sans-serif" font-size="11">a_y [g]</text>"#,
        SIZE / 2.0,
        SIZE - 8.0
    );
    out.push_str("</svg>\n");
    out
}

fn circle_table(c: &FrictionCircle) -> String {
    let mut buf = Vec::new();
    c.write_export(&mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("ascii")
}

fn trace_svg(tr: &ResidualTrace) -> String {
    let h = SIZE * 1.5;
    let w = SIZE * 2.0;
    let mut out = String::new();
    svg_open(&mut out, w, h, &format!("residuals: {}", tr.name));
    if tr.t.is_empty() {
        no_data(&mut out, w, h);
        out.push_str("</svg>\n");
        return out;
    }
    let x = Axis::new(tr.t[0], *tr.t.last().expect("non-empty"), MARGIN, w - MARGIN);
    let panels = [
        ("linear [m/s]", &tr.linear, tr.linear_threshold, MARGIN, h / 2.0 - 10.0),
        (
            "angular [rad/s]",
            &tr.angular,
            tr.angular_threshold,
            h / 2.0 + 20.0,
            h - MARGIN,
        ),
    ];
    for (label, values, threshold, top, bottom) in panels {
        let hi = values.iter().copied().fold(threshold, f64::max) * 1.1;
        let y = Axis::new(0.0, hi, bottom, top);
        polyline(&mut out, &tr.t, values, x, y, "steelblue", false);
        let ends = [tr.t[0], *tr.t.last().expect("non-empty")];
        polyline(&mut out, &ends, &[threshold, threshold], x, y, "red", true);
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11">{label}</text>"#,
            MARGIN + 4.0,
            top + 12.0
        );
    }
    out.push_str("</svg>\n");
    out
}

fn trace_table(tr: &ResidualTrace) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# thresholds\tlinear={}\tangular={}",
        tr.linear_threshold, tr.angular_threshold
    );
    let _ = writeln!(out, "# columns\tt\tlinear\tangular");
    for ((t, l), a) in tr.t.iter().zip(&tr.linear).zip(&tr.angular) {
        let _ = writeln!(out, "{t}\t{l}\t{a}");
    }
    out
}

fn comparison_svg(rows: &[SurfaceComparison]) -> String {
    let w = SIZE * 1.5;
    let mut out = String::new();
    svg_open(&mut out, w, SIZE, "ground truth (gray) vs estimate (blue)");
    let all: Vec<f64> = rows
        .iter()
        .flat_map(|r| r.ground_truth.iter().chain(&r.estimates))
        .copied()
        .collect();
    if all.is_empty() {
        no_data(&mut out, w, SIZE);
        out.push_str("</svg>\n");
        return out;
    }
    let lo = all.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = all.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let pad = ((hi - lo) * 0.1).max(0.05);
    let y = Axis::new(lo - pad, hi + pad, SIZE - MARGIN, MARGIN);
    let slot = (w - 2.0 * MARGIN) / rows.len() as f64;
    for (k, row) in rows.iter().enumerate() {
        let centre = MARGIN + slot * (k as f64 + 0.5);
        for (values, dx, colour) in [
            (&row.ground_truth, -slot * 0.15, "gray"),
            (&row.estimates, slot * 0.15, "steelblue"),
        ] {
            for v in values.iter() {
                let _ = writeln!(
                    out,
                    r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{colour}"/>"#,
                    centre + dx,
                    y.px(*v)
                );
            }
            if !values.is_empty() {
                let mean = values.iter().sum::<f64>() / values.len() as f64;
                let _ = writeln!(
                    out,
                    r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{colour}" stroke-width="2"/>"#,
                    centre + dx - 12.0,
                    y.px(mean),
                    centre + dx + 12.0,
                    y.px(mean)
                );
            }
        }
        let _ = writeln!(
            out,
            r#"<text x="{centre:.1}" y="{:.1}" text-anchor="middle" font-family="sans-serif" font-size="12">{}</text>"#,
            SIZE - 12.0,
            escape(&row.surface)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn comparison_table(rows: &[SurfaceComparison]) -> String {
    let mut out = String::from("# columns\tsurface\tsource\tmu\n");
    for row in rows {
        for v in &row.ground_truth {
            let _ = writeln!(out, "{}\tground_truth\t{v}", row.surface);
        }
        for v in &row.estimates {
            let _ = writeln!(out, "{}\testimate\t{v}", row.surface);
        }
    }
    out
}

/// Writes every figure and its table into `out_dir`, returning the paths
/// in write order. Output bytes depend only on the inputs.
pub fn emit_plots(inputs: &PlotInputs, out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut files: Vec<(PathBuf, String)> = Vec::new();
    if inputs.circles.is_empty() {
        let empty = FrictionCircle {
            surface: "none".into(),
            points: Vec::new(),
            estimate: crate::estimator::FrictionEstimate::new(None),
            g: crate::types::DEFAULT_GRAVITY,
        };
        files.push((out_dir.join("circle_none.svg"), circle_svg(&empty)));
        files.push((out_dir.join("circle_none.tsv"), circle_table(&empty)));
    }
    for c in &inputs.circles {
        let stem = format!("circle_{}", file_stem(&c.surface));
        files.push((out_dir.join(format!("{stem}.svg")), circle_svg(c)));
        files.push((out_dir.join(format!("{stem}.tsv")), circle_table(c)));
    }
    for tr in &inputs.traces {
        let stem = format!("residuals_{}", file_stem(&tr.name));
        files.push((out_dir.join(format!("{stem}.svg")), trace_svg(tr)));
        files.push((out_dir.join(format!("{stem}.tsv")), trace_table(tr)));
    }
    files.push((out_dir.join("comparison.svg"), comparison_svg(&inputs.comparison)));
    files.push((out_dir.join("comparison.tsv"), comparison_table(&inputs.comparison)));

    let mut written = Vec::with_capacity(files.len());
    for (path, body) in files {
        write_atomic(&path, body.as_bytes())?;
        written.push(path);
    }
    Ok(written)
}
