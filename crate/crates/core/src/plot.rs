//! Plot-data documents shared by the CLI and the HTTP API.
//!
//! Every plot is `{kind, axes, series[], annotations[]}`; clients render
//! the document as-is. [`PlotDocument::to_svg`] gives a static rendering.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::drift::{DriftPoint, PValueSeries};
use crate::scoring::{log10_floored, TraceScore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Linear,
    Log10,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub label: String,
    pub scale: Scale,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axes {
    pub x: Axis,
    pub y: Axis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mark {
    Points,
    Line,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    pub mark: Mark,
    /// `[x, y]` pairs. For log-scaled axes `y` is already a log10 value.
    pub points: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Annotation {
    /// Vertical marker at an x position.
    Vline { x: f64, label: String },
    /// Horizontal marker at a y position (same units as series y values).
    Hline { y: f64, label: String },
    /// Horizontal band `[y0, y1]` over an x range.
    Band {
        x0: f64,
        x1: f64,
        y0: f64,
        y1: f64,
        label: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotDocument {
    pub kind: String,
    pub axes: Axes,
    pub series: Vec<Series>,
    pub annotations: Vec<Annotation>,
}

impl PlotDocument {
    pub fn new(kind: &str, x: &str, x_scale: Scale, y: &str, y_scale: Scale) -> Self {
        Self {
            kind: kind.to_string(),
            axes: Axes {
                x: Axis {
                    label: x.to_string(),
                    scale: x_scale,
                },
                y: Axis {
                    label: y.to_string(),
                    scale: y_scale,
                },
            },
            series: Vec::new(),
            annotations: Vec::new(),
        }
    }

    /// Trace-score plot: log10 trace means against trace index, with the
    /// training boundary and drift points as vertical markers.
    pub fn trace_scores(scores: &[TraceScore], training_traces: Option<usize>, drifts: &[DriftPoint]) -> Self {
        let mut doc = Self::new("trace_scores", "trace index", Scale::Linear, "trace score", Scale::Log10);
        doc.series.push(Series {
            name: "trace score".into(),
            mark: Mark::Points,
            points: scores
                .iter()
                .enumerate()
                .map(|(i, s)| [i as f64, log10_floored(s.mean)])
                .collect(),
            labels: scores.iter().map(|s| s.trace_id.clone()).collect(),
        });
        if let Some(t) = training_traces {
            doc.annotations.push(Annotation::Vline {
                x: t as f64,
                label: "training boundary".into(),
            });
        }
        for d in drifts {
            doc.annotations.push(Annotation::Vline {
                x: d.trace_index as f64,
                label: format!("drift (w={})", d.window_size),
            });
        }
        doc
    }

    /// Drift plot: log10 p-values per window centre, one series per window.
    pub fn drift(series: &[PValueSeries], threshold: f64, drifts: &[DriftPoint]) -> Self {
        let mut doc = Self::new("drift", "trace index", Scale::Linear, "p-value", Scale::Log10);
        for s in series {
            doc.series.push(Series {
                name: format!("w={}", s.window_size),
                mark: Mark::Line,
                points: s
                    .points
                    .iter()
                    .map(|p| [p.center_index as f64, log10_floored(p.p_value)])
                    .collect(),
                labels: Vec::new(),
            });
        }
        doc.annotations.push(Annotation::Hline {
            y: threshold.log10(),
            label: format!("threshold {threshold}"),
        });
        for d in drifts {
            doc.annotations.push(Annotation::Vline {
                x: d.trace_index as f64,
                label: format!("drift (w={})", d.window_size),
            });
        }
        doc
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plot documents always serialize")
    }

    pub fn to_svg(&self) -> String {
        render_svg(self)
    }
}

const W: f64 = 800.0;
const H: f64 = 480.0;
const MARGIN: f64 = 60.0;
const PALETTE: &[&str] = &["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"];

fn render_svg(doc: &PlotDocument) -> String {
    let finite = |v: f64| v.is_finite();
    let xs = doc.series.iter().flat_map(|s| s.points.iter().map(|p| p[0])).filter(|v| finite(*v));
    let ys = doc.series.iter().flat_map(|s| s.points.iter().map(|p| p[1])).filter(|v| finite(*v));
    let (mut x0, mut x1) = bounds(xs);
    let (mut y0, mut y1) = bounds(ys);
    for a in &doc.annotations {
        match a {
            Annotation::Vline { x, .. } => {
                x0 = x0.min(*x);
                x1 = x1.max(*x);
            }
            Annotation::Hline { y, .. } => {
                y0 = y0.min(*y);
                y1 = y1.max(*y);
            }
            Annotation::Band { y0: b0, y1: b1, .. } => {
                y0 = y0.min(*b0);
                y1 = y1.max(*b1);
            }
        }
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (W - 2.0 * MARGIN);
    let sy = |y: f64| H - MARGIN - (y - y0) / (y1 - y0) * (H - 2.0 * MARGIN);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<title>{}</title>"#, escape(&doc.kind));
    let _ = writeln!(
        out,
        r##"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="#444"/>"##,
        W - 2.0 * MARGIN,
        H - 2.0 * MARGIN
    );
    let log = |s: Scale| if s == Scale::Log10 { " (log10)" } else { "" };
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}{}</text>"#,
        W / 2.0,
        H - 15.0,
        escape(&doc.axes.x.label),
        log(doc.axes.x.scale)
    );
    let _ = writeln!(
        out,
        r#"<text x="15" y="{}" text-anchor="middle" transform="rotate(-90 15 {})">{}{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(&doc.axes.y.label),
        log(doc.axes.y.scale)
    );
    for (v, anchor) in [(y0, H - MARGIN), (y1, MARGIN)] {
        let _ = writeln!(out, r#"<text x="{}" y="{anchor}" text-anchor="end">{}</text>"#, MARGIN - 4.0, fmt_tick(v));
    }
    for (v, x) in [(x0, MARGIN), (x1, W - MARGIN)] {
        let _ = writeln!(out, r#"<text x="{x}" y="{}" text-anchor="middle">{}</text>"#, H - MARGIN + 14.0, fmt_tick(v));
    }
    for a in &doc.annotations {
        if let Annotation::Band { x0: bx0, x1: bx1, y0: by0, y1: by1, label } = a {
            let _ = writeln!(
                out,
                r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#999" fill-opacity="0.2"><title>{}</title></rect>"##,
                sx(*bx0),
                sy(*by1),
                (sx(*bx1) - sx(*bx0)).max(1.0),
                (sy(*by0) - sy(*by1)).max(1.0),
                escape(label)
            );
        }
    }
    for (i, s) in doc.series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        match s.mark {
            Mark::Points => {
                for p in s.points.iter().filter(|p| finite(p[0]) && finite(p[1])) {
                    let _ = writeln!(
                        out,
                        r#"<circle cx="{:.2}" cy="{:.2}" r="1.5" fill="{color}"/>"#,
                        sx(p[0]),
                        sy(p[1])
                    );
                }
            }
            Mark::Line => {
                let pts: Vec<String> = s
                    .points
                    .iter()
                    .filter(|p| finite(p[0]) && finite(p[1]))
                    .map(|p| format!("{:.2},{:.2}", sx(p[0]), sy(p[1])))
                    .collect();
                let _ = writeln!(
                    out,
                    r#"<polyline fill="none" stroke="{color}" stroke-width="1" points="{}"/>"#,
                    pts.join(" ")
                );
            }
        }
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
            W - MARGIN + 4.0,
            MARGIN + 14.0 * (i as f64 + 1.0),
            escape(&s.name)
        );
    }
    for a in &doc.annotations {
        match a {
            Annotation::Vline { x, label } => {
                let _ = writeln!(
                    out,
                    r#"<line x1="{0:.2}" x2="{0:.2}" y1="{MARGIN}" y2="{1}" stroke="red"><title>{2}</title></line>"#,
                    sx(*x),
                    H - MARGIN,
                    escape(label)
                );
            }
            Annotation::Hline { y, label } => {
                let _ = writeln!(
                    out,
                    r#"<line x1="{MARGIN}" x2="{1}" y1="{0:.2}" y2="{0:.2}" stroke="gray" stroke-dasharray="4 3"><title>{2}</title></line>"#,
                    sy(*y),
                    W - MARGIN,
                    escape(label)
                );
            }
            Annotation::Band { .. } => {}
        }
    }
    out.push_str("</svg>\n");
    out
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if lo.is_finite() {
        (lo, hi)
    } else {
        (0.0, 1.0)
    }
}

fn fmt_tick(v: f64) -> String {
    if v.abs() >= 1e4 || (v != 0.0 && v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        format!("{v:.2}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drift::PValuePoint;

    #[test]
    fn drift_document_shape() {
        let s = PValueSeries {
            window_size: 4,
            step: 1,
            points: vec![PValuePoint {
                center_index: 2,
                d_stat: 0.5,
                p_value: 0.1,
            }],
        };
        let doc = PlotDocument::drift(&[s], 0.01, &[]);
        let v: serde_json::Value = serde_json::from_str(&doc.to_json()).unwrap();
        assert_eq!(v["kind"], "drift");
        assert_eq!(v["axes"]["y"]["scale"], "log10");
        assert_eq!(v["series"][0]["points"][0][1], -1.0);
        assert_eq!(v["annotations"][0]["type"], "hline");
        let back: PlotDocument = serde_json::from_value(v).unwrap();
        assert_eq!(back, doc);
    }

    #[test]
    fn svg_renders_all_marks() {
        let mut doc = PlotDocument::new("t", "x", Scale::Linear, "y<", Scale::Log10);
        doc.series.push(Series {
            name: "a".into(),
            mark: Mark::Points,
            points: vec![[0.0, 1.0], [1.0, f64::NEG_INFINITY]],
            labels: vec![],
        });
        doc.series.push(Series {
            name: "b".into(),
            mark: Mark::Line,
            points: vec![[0.0, 1.0], [1.0, 2.0]],
            labels: vec![],
        });
        doc.annotations.push(Annotation::Vline { x: 0.5, label: "v".into() });
        let svg = doc.to_svg();
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<circle").count(), 1);
        assert!(svg.contains("<polyline"));
        assert!(svg.contains("y&lt;"));
    }
}
