//! Standalone SVG figures. All coordinates are printed with three decimals
//! so output is byte-stable for fixed input.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ComparisonReport;
use crate::error::{Error, Result};
use crate::fairness::Metric;

const W: f64 = 640.0;
const H: f64 = 480.0;
const MARGIN: f64 = 60.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SvgKind {
    Scatter,
    Bars,
    ValueShift,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

struct Canvas {
    body: String,
}

impl Canvas {
    fn new(title: &str) -> Self {
        let mut body = String::new();
        let _ = writeln!(
            body,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
        );
        let _ = writeln!(body, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(
            body,
            r#"<text x="{:.3}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
            W / 2.0,
            escape(title)
        );
        Canvas { body }
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str, class: &str) {
        let _ = writeln!(
            self.body,
            r#"<line class="{class}" x1="{x1:.3}" y1="{y1:.3}" x2="{x2:.3}" y2="{y2:.3}" stroke="{stroke}"/>"#
        );
    }

    fn text(&mut self, x: f64, y: f64, anchor: &str, s: &str) {
        let _ = writeln!(
            self.body,
            r#"<text x="{x:.3}" y="{y:.3}" text-anchor="{anchor}">{}</text>"#,
            escape(s)
        );
    }

    fn legend(&mut self, names: &[String]) {
        for (i, n) in names.iter().enumerate() {
            let y = 40.0 + 14.0 * i as f64;
            let _ = writeln!(
                self.body,
                r#"<rect x="{:.3}" y="{:.3}" width="10" height="10" fill="{}"/>"#,
                W - 130.0,
                y - 9.0,
                color(i)
            );
            self.text(W - 115.0, y, "start", n);
        }
    }

    fn finish(mut self) -> String {
        self.body.push_str("</svg>\n");
        self.body
    }
}

fn plot_x(v: f64, lo: f64, hi: f64) -> f64 {
    MARGIN + (v - lo) / (hi - lo) * (W - 2.0 * MARGIN)
}

fn plot_y(v: f64, lo: f64, hi: f64) -> f64 {
    H - MARGIN - (v - lo) / (hi - lo) * (H - 2.0 * MARGIN)
}

/// Global (x) against local (y) DD, one point per client and attribute,
/// axes `[0, 1.1 * max]`, with the diagonal `y = x`.
fn scatter(report: &ComparisonReport) -> String {
    let points = report.scatter_points(Metric::Dd);
    let max = points.iter().flat_map(|p| [p.x, p.y]).flatten().fold(0.0f64, f64::max);
    let hi = if max > 0.0 { max * 1.1 } else { 1.0 };
    let mut c = Canvas::new("DD: global model (x) vs local model (y)");
    c.line(MARGIN, H - MARGIN, W - MARGIN, H - MARGIN, "black", "axis");
    c.line(MARGIN, H - MARGIN, MARGIN, MARGIN, "black", "axis");
    for k in 0..=2 {
        let v = hi * k as f64 / 2.0;
        c.text(plot_x(v, 0.0, hi), H - MARGIN + 16.0, "middle", &format!("{v:.3}"));
        c.text(MARGIN - 6.0, plot_y(v, 0.0, hi) + 4.0, "end", &format!("{v:.3}"));
    }
    c.line(
        plot_x(0.0, 0.0, hi),
        plot_y(0.0, 0.0, hi),
        plot_x(hi, 0.0, hi),
        plot_y(hi, 0.0, hi),
        "#999999",
        "diagonal",
    );
    c.text(W / 2.0, H - 15.0, "middle", "global DD");
    c.text(15.0, H / 2.0, "middle", "local DD");
    for p in &points {
        let (Some(x), Some(y)) = (p.x, p.y) else { continue };
        let ai = report.attrs.iter().position(|a| *a == p.attr).unwrap_or(0);
        let _ = writeln!(
            c.body,
            r#"<circle class="point" cx="{:.3}" cy="{:.3}" r="4" fill="{}"><title>{} {}</title></circle>"#,
            plot_x(x, 0.0, hi),
            plot_y(y, 0.0, hi),
            color(ai),
            escape(p.client.as_str()),
            escape(&p.attr)
        );
    }
    c.legend(&report.attrs);
    c.finish()
}

/// One group of bars (a client) with one optional value per series.
#[derive(Debug, Clone, PartialEq)]
pub struct BarGroup {
    pub label: String,
    pub values: Vec<Option<f64>>,
}

/// Grouped bar chart around a zero line; the value axis spans the largest
/// magnitude (or 1 when every value is zero or missing).
pub fn bar_chart(title: &str, series: &[String], groups: &[BarGroup]) -> String {
    let max = groups
        .iter()
        .flat_map(|g| g.values.iter().flatten())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let hi = if max > 0.0 { max * 1.1 } else { 1.0 };
    let lo = if groups.iter().flat_map(|g| g.values.iter().flatten()).any(|&v| v < 0.0) {
        -hi
    } else {
        0.0
    };
    let mut c = Canvas::new(title);
    let zero = plot_y(0.0, lo, hi);
    c.line(MARGIN, zero, W - MARGIN, zero, "black", "axis");
    c.line(MARGIN, H - MARGIN, MARGIN, MARGIN, "black", "axis");
    for v in [lo, 0.0, hi] {
        c.text(MARGIN - 6.0, plot_y(v, lo, hi) + 4.0, "end", &format!("{v:.3}"));
    }
    let slot = (W - 2.0 * MARGIN) / groups.len().max(1) as f64;
    let width = slot * 0.8 / series.len().max(1) as f64;
    for (gi, g) in groups.iter().enumerate() {
        let left = MARGIN + slot * gi as f64 + slot * 0.1;
        for (si, v) in g.values.iter().enumerate() {
            let Some(v) = *v else { continue };
            let y = plot_y(v, lo, hi);
            let _ = writeln!(
                c.body,
                r#"<rect class="bar" x="{:.3}" y="{:.3}" width="{:.3}" height="{:.3}" fill="{}"><title>{} {}</title></rect>"#,
                left + width * si as f64,
                y.min(zero),
                width,
                (y - zero).abs(),
                color(si),
                escape(&g.label),
                escape(series.get(si).map(String::as_str).unwrap_or(""))
            );
        }
        c.text(left + slot * 0.4, H - MARGIN + 16.0, "middle", &g.label);
    }
    c.legend(series);
    c.finish()
}

fn bars(report: &ComparisonReport) -> String {
    let groups: Vec<BarGroup> = report
        .clients
        .iter()
        .map(|cl| BarGroup {
            label: cl.client.to_string(),
            values: cl.attrs.iter().map(|a| a.delta_dd).collect(),
        })
        .collect();
    bar_chart("DD change (global - local) per client", &report.attrs, &groups)
}

/// Most biased value under the local model (left marker) and the global
/// model (right marker) per client, for every attribute.
fn value_shift(report: &ComparisonReport) -> String {
    let shifts = report.value_shifts();
    let values: Vec<i64> = shifts
        .iter()
        .flat_map(|s| [s.before, s.after])
        .flatten()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut c = Canvas::new("Most biased value: local model to global model");
    c.line(MARGIN, H - MARGIN, W - MARGIN, H - MARGIN, "black", "axis");
    c.line(MARGIN, H - MARGIN, MARGIN, MARGIN, "black", "axis");
    let row = |v: i64| {
        let i = values.iter().position(|&x| x == v).unwrap_or(0) as f64;
        plot_y(i + 1.0, 0.0, values.len() as f64 + 1.0)
    };
    for &v in &values {
        c.text(MARGIN - 6.0, row(v) + 4.0, "end", &v.to_string());
    }
    let slot = (W - 2.0 * MARGIN) / report.clients.len().max(1) as f64;
    for (ci, cl) in report.clients.iter().enumerate() {
        let left = MARGIN + slot * ci as f64;
        c.text(left + slot / 2.0, H - MARGIN + 16.0, "middle", cl.client.as_str());
        for (ai, a) in cl.attrs.iter().enumerate() {
            let (x0, x1) = (left + slot * 0.25, left + slot * 0.75);
            if let (Some(b), Some(f)) = (a.value_before, a.value_after) {
                c.line(x0, row(b), x1, row(f), color(ai), "shift");
            }
            for (x, v) in [(x0, a.value_before), (x1, a.value_after)] {
                let Some(v) = v else { continue };
                let _ = writeln!(
                    c.body,
                    r#"<circle class="value" cx="{x:.3}" cy="{:.3}" r="4" fill="{}"/>"#,
                    row(v),
                    color(ai)
                );
            }
        }
    }
    c.legend(&report.attrs);
    c.finish()
}

pub fn render_svg(report: &ComparisonReport, kind: SvgKind) -> String {
    match kind {
        SvgKind::Scatter => scatter(report),
        SvgKind::Bars => bars(report),
        SvgKind::ValueShift => value_shift(report),
    }
}

pub fn emit_svg(report: &ComparisonReport, kind: SvgKind, path: &Path) -> Result<()> {
    std::fs::write(path, render_svg(report, kind)).map_err(|e| Error::io(path, e))
}
