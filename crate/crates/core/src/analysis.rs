//! Root-cause analytics over segments of a scored log.
//!
//! A trace's attribute partial is the mean of that attribute's partial
//! score over the trace's events; all summaries work on its log10.

use serde::{Deserialize, Serialize};

use crate::drift::Segment;
use crate::error::{Error, Result};
use crate::eventlog::EventLog;
use crate::parameters::EdbnModel;
use crate::plot::{Annotation, Mark, PlotDocument, Scale, Series};
use crate::scoring::{log10_floored, score_log, TraceScore};

/// Normal-consistency factor for the median absolute deviation.
pub const MAD_SCALE: f64 = 1.4826;
pub const DEFAULT_MAD_K: f64 = 2.5;

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[mid]
    } else {
        (v[mid - 1] + v[mid]) / 2.0
    })
}

/// `median(|x − median(x)|)`, unscaled.
pub fn mad(values: &[f64], center: f64) -> Option<f64> {
    let dev: Vec<f64> = values.iter().map(|x| (x - center).abs()).collect();
    median(&dev)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeDensity {
    pub attribute: String,
    pub log_scores: Vec<f64>,
    pub median: f64,
    pub mad_raw: f64,
    pub mad_scaled: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensitySummary {
    pub segment_id: usize,
    pub trace_ids: Vec<String>,
    pub per_attribute: Vec<AttributeDensity>,
}

impl DensitySummary {
    pub fn attribute(&self, name: &str) -> Option<&AttributeDensity> {
        self.per_attribute.iter().find(|a| a.attribute == name)
    }

    pub fn plot(&self) -> PlotDocument {
        let mut doc = PlotDocument::new(
            "attribute_density",
            "attribute",
            Scale::Linear,
            "partial trace score",
            Scale::Log10,
        );
        let names: Vec<String> = self.per_attribute.iter().map(|a| a.attribute.clone()).collect();
        doc.series.push(Series {
            name: format!("segment {}", self.segment_id),
            mark: Mark::Points,
            points: self
                .per_attribute
                .iter()
                .enumerate()
                .flat_map(|(i, a)| a.log_scores.iter().map(move |&y| [i as f64, y]))
                .collect(),
            labels: Vec::new(),
        });
        doc.series.push(Series {
            name: "median".into(),
            mark: Mark::Points,
            points: self
                .per_attribute
                .iter()
                .enumerate()
                .map(|(i, a)| [i as f64, a.median])
                .collect(),
            labels: names,
        });
        for (i, a) in self.per_attribute.iter().enumerate() {
            doc.annotations.push(Annotation::Band {
                x0: i as f64 - 0.4,
                x1: i as f64 + 0.4,
                y0: a.median - a.mad_scaled,
                y1: a.median + a.mad_scaled,
                label: format!("{}: median ± MAD", a.attribute),
            });
        }
        doc
    }
}

/// Per-attribute log10 partial scores of the traces, with median and MAD.
pub fn attribute_density(model: &EdbnModel, traces: &[TraceScore], segment_id: usize) -> Result<DensitySummary> {
    if traces.is_empty() {
        return Err(Error::InvalidArgument(format!("segment {segment_id} is empty")));
    }
    let per_attribute = model
        .attributes()
        .iter()
        .enumerate()
        .map(|(a, name)| {
            let log_scores: Vec<f64> = traces
                .iter()
                .map(|t| log10_floored(mean_over_events(t, |e| e.per_attribute[a].partial)))
                .collect();
            let med = median(&log_scores).unwrap_or(0.0);
            let mad_raw = mad(&log_scores, med).unwrap_or(0.0);
            AttributeDensity {
                attribute: name.clone(),
                log_scores,
                median: med,
                mad_raw,
                mad_scaled: MAD_SCALE * mad_raw,
            }
        })
        .collect();
    Ok(DensitySummary {
        segment_id,
        trace_ids: traces.iter().map(|t| t.trace_id.clone()).collect(),
        per_attribute,
    })
}

fn mean_over_events(t: &TraceScore, f: impl Fn(&crate::scoring::EventScore) -> f64) -> f64 {
    let sum: f64 = t.event_scores.iter().map(f).sum();
    sum / t.event_scores.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MedianOverlay {
    pub attributes: Vec<String>,
    pub segment_ids: Vec<usize>,
    pub reference_segment: usize,
    /// `medians[attribute][segment]`
    pub medians: Vec<Vec<f64>>,
    /// `deltas[attribute][segment]`: median minus the reference median.
    pub deltas: Vec<Vec<f64>>,
}

impl MedianOverlay {
    /// Attributes ordered by absolute median change between two segments
    /// (positions in `segment_ids`), largest first.
    pub fn ranked_changes(&self, from: usize, to: usize) -> Vec<(String, f64)> {
        let mut out: Vec<(String, f64)> = self
            .attributes
            .iter()
            .zip(&self.medians)
            .map(|(a, m)| (a.clone(), m[to] - m[from]))
            .collect();
        out.sort_by(|x, y| y.1.abs().total_cmp(&x.1.abs()).then_with(|| x.0.cmp(&y.0)));
        out
    }

    pub fn plot(&self) -> PlotDocument {
        let mut doc = PlotDocument::new("median_overlay", "attribute", Scale::Linear, "median partial score", Scale::Log10);
        for (s, id) in self.segment_ids.iter().enumerate() {
            doc.series.push(Series {
                name: format!("segment {id}"),
                mark: Mark::Line,
                points: self.medians.iter().enumerate().map(|(a, m)| [a as f64, m[s]]).collect(),
                labels: self.attributes.clone(),
            });
        }
        doc
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentComparison {
    pub summaries: Vec<DensitySummary>,
    pub overlay: MedianOverlay,
}

/// Density summaries for every segment of an already-scored log.
pub fn compare_scored(
    model: &EdbnModel,
    scores: &[TraceScore],
    segments: &[Segment],
    reference: usize,
) -> Result<SegmentComparison> {
    if segments.is_empty() {
        return Err(Error::InvalidArgument("no segments to compare".into()));
    }
    let ref_pos = segments
        .iter()
        .position(|s| s.id == reference)
        .ok_or_else(|| Error::InvalidArgument(format!("reference segment {reference} not among segments")))?;
    let summaries = segments
        .iter()
        .map(|s| {
            if s.end_trace > scores.len() {
                return Err(Error::InvalidArgument(format!(
                    "segment {} ends at {} but only {} traces are scored",
                    s.id,
                    s.end_trace,
                    scores.len()
                )));
            }
            attribute_density(model, &scores[s.range()], s.id)
        })
        .collect::<Result<Vec<_>>>()?;
    let attributes = model.attributes().to_vec();
    let medians: Vec<Vec<f64>> = (0..attributes.len())
        .map(|a| summaries.iter().map(|s| s.per_attribute[a].median).collect())
        .collect();
    let deltas = medians
        .iter()
        .map(|row| row.iter().map(|m| m - row[ref_pos]).collect())
        .collect();
    Ok(SegmentComparison {
        overlay: MedianOverlay {
            attributes,
            segment_ids: segments.iter().map(|s| s.id).collect(),
            reference_segment: reference,
            medians,
            deltas,
        },
        summaries,
    })
}

/// Scores `log` against `model` (trained on the reference segment) and
/// summarizes every segment.
pub fn compare_segments(
    model: &EdbnModel,
    log: &EventLog,
    segments: &[Segment],
    reference: usize,
) -> Result<SegmentComparison> {
    let scores = score_log(model, log)?;
    compare_scored(model, &scores, segments, reference)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSeries {
    pub name: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentBreakdown {
    pub attribute: String,
    pub trace_ids: Vec<String>,
    pub value_component: Vec<f64>,
    pub cpt_component: Vec<f64>,
    pub fd_components: Vec<ComponentSeries>,
}

impl ComponentBreakdown {
    pub fn plot(&self) -> PlotDocument {
        let mut doc = PlotDocument::new(
            "component_breakdown",
            "trace",
            Scale::Linear,
            &format!("{} component score", self.attribute),
            Scale::Log10,
        );
        let series = |name: &str, values: &[f64]| Series {
            name: name.to_string(),
            mark: Mark::Points,
            points: values.iter().enumerate().map(|(i, &y)| [i as f64, y]).collect(),
            labels: Vec::new(),
        };
        doc.series.push(series("value", &self.value_component));
        doc.series.push(series("cpt", &self.cpt_component));
        for f in &self.fd_components {
            doc.series.push(series(&f.name, &f.values));
        }
        doc
    }
}

/// Per-trace log10 series of each component of one attribute's score.
pub fn decompose_attribute(model: &EdbnModel, traces: &[TraceScore], attribute: &str) -> Result<ComponentBreakdown> {
    let a = model
        .attribute_index(attribute)
        .ok_or_else(|| Error::UnknownAttribute(attribute.to_string()))?;
    let series = |f: &dyn Fn(&crate::scoring::AttributeScore) -> f64| -> Vec<f64> {
        traces
            .iter()
            .map(|t| log10_floored(mean_over_events(t, |e| f(&e.per_attribute[a]))))
            .collect()
    };
    let fd_components = model
        .fds_of(a)
        .iter()
        .enumerate()
        .map(|(k, &fi)| ComponentSeries {
            name: format!("fd[{}]", model.fd_label(fi)),
            values: series(&|s| s.fd_components[k].1),
        })
        .collect();
    Ok(ComponentBreakdown {
        attribute: attribute.to_string(),
        trace_ids: traces.iter().map(|t| t.trace_id.clone()).collect(),
        value_component: series(&|s| s.value_component),
        cpt_component: series(&|s| s.cpt_component),
        fd_components,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeDeviation {
    pub attribute: String,
    pub log_partial: f64,
    pub segment_median: f64,
    /// `|log_partial − median| / mad_scaled`; infinite when the MAD is 0.
    pub deviation_mads: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierReport {
    pub trace_id: String,
    pub segment_id: usize,
    pub deviations: Vec<AttributeDeviation>,
}

/// Traces whose attribute partial lies more than `k` scaled MADs from the
/// segment median. With a zero MAD any departure from the median counts,
/// unless `k` is infinite.
pub fn flag_outliers(summary: &DensitySummary, k: f64) -> Vec<OutlierReport> {
    let mut out = Vec::new();
    for (t, id) in summary.trace_ids.iter().enumerate() {
        let deviations: Vec<AttributeDeviation> = summary
            .per_attribute
            .iter()
            .filter_map(|a| {
                let x = a.log_scores[t];
                let dev = (x - a.median).abs();
                let flagged = if a.mad_scaled > 0.0 {
                    dev > k * a.mad_scaled
                } else {
                    dev > 0.0 && k.is_finite()
                };
                flagged.then(|| AttributeDeviation {
                    attribute: a.attribute.clone(),
                    log_partial: x,
                    segment_median: a.median,
                    deviation_mads: if a.mad_scaled > 0.0 { dev / a.mad_scaled } else { f64::INFINITY },
                })
            })
            .collect();
        if !deviations.is_empty() {
            out.push(OutlierReport {
                trace_id: id.clone(),
                segment_id: summary.segment_id,
                deviations,
            });
        }
    }
    out
}
