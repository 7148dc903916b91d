//! Event and trace scoring with full decomposition.
//!
//! Each attribute contributes `value × cpt × Π fd` to an event's score and
//! the event total is the product of the attribute partials, multiplied in
//! attribute order. A trace scores the arithmetic mean of its event totals.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::eventlog::{EventLog, Symbol, Trace};
use crate::parameters::EdbnModel;
use crate::structure::{Slice, START};

/// Model-space symbol for a value never seen in training.
pub const UNSEEN: Symbol = Symbol::MAX - 1;

/// Floor applied before taking logarithms for presentation.
pub const LOG_FLOOR: f64 = 1e-300;

pub fn log10_floored(x: f64) -> f64 {
    x.max(LOG_FLOOR).log10()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttributeScore {
    pub attribute: usize,
    pub value_component: f64,
    pub cpt_component: f64,
    /// (index into the model's FD maps, component)
    pub fd_components: Vec<(usize, f64)>,
    pub partial: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventScore {
    pub per_attribute: Vec<AttributeScore>,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceScore {
    pub trace_id: String,
    pub event_scores: Vec<EventScore>,
    pub mean: f64,
    pub first_event_time: Option<i64>,
}

/// Scores an event given in model symbols (`UNSEEN` for novel values).
/// `previous` is `None` for the first event of a trace.
pub fn score_event(model: &EdbnModel, event: &[Symbol], previous: Option<&[Symbol]>) -> Result<EventScore> {
    let n = model.attributes().len();
    if event.len() != n || previous.is_some_and(|p| p.len() != n) {
        return Err(Error::Schema(format!(
            "event has {} values, model expects {n}",
            event.len()
        )));
    }
    let prev_value = |attr: usize| previous.map_or(START, |p| p[attr]);
    let mut per_attribute = Vec::with_capacity(n);
    let mut key: Vec<Symbol> = Vec::new();
    for (a, &v) in event.iter().enumerate() {
        let value_component = if v == UNSEEN { model.rates.new_value[a] } else { 1.0 };

        let cpt_component = match model.cpt_index(a) {
            None => 1.0,
            Some(ci) => {
                let cpt = &model.cpts[ci];
                key.clear();
                key.extend(cpt.parents.iter().map(|p| match p.slice {
                    Slice::Current => event[p.attribute],
                    Slice::Previous => prev_value(p.attribute),
                }));
                let rate = model.rates.cpt_new_relation[ci];
                if key.contains(&UNSEEN) {
                    rate
                } else {
                    match cpt.rows.get(key.as_slice()) {
                        None => rate,
                        Some(row) => row.get(&v).copied().unwrap_or(0.0),
                    }
                }
            }
        };

        let mut partial = value_component * cpt_component;
        let fds = model.fds_of(a);
        let mut fd_components = Vec::with_capacity(fds.len());
        for &fi in fds {
            let fd = &model.fdmaps[fi];
            let ant = match fd.edge.antecedent.slice {
                Slice::Current => Some(event[fd.edge.antecedent.attribute]),
                Slice::Previous => previous.map(|p| p[fd.edge.antecedent.attribute]),
            };
            let c = match ant {
                None => 1.0,
                Some(UNSEEN) => model.rates.fd_new_relation[fi],
                Some(x) => match fd.mapping.get(&x) {
                    None => model.rates.fd_new_relation[fi],
                    Some(allowed) if allowed.binary_search(&v).is_ok() => 1.0,
                    Some(_) => 0.0,
                },
            };
            partial *= c;
            fd_components.push((fi, c));
        }
        per_attribute.push(AttributeScore {
            attribute: a,
            value_component,
            cpt_component,
            fd_components,
            partial,
        });
    }
    let total = per_attribute.iter().fold(1.0, |acc, s| acc * s.partial);
    Ok(EventScore { per_attribute, total })
}

/// Translates a log's symbols into model symbols.
#[derive(Debug)]
pub struct Scorer<'m> {
    model: &'m EdbnModel,
    columns: Vec<usize>,
    translate: Vec<Vec<Symbol>>,
}

impl<'m> Scorer<'m> {
    /// `log` must already carry the model's discretizers
    /// (see [`EventLog::apply_schema_discretizers`]).
    pub fn new(model: &'m EdbnModel, log: &EventLog) -> Result<Self> {
        let mut columns = Vec::new();
        let mut translate = Vec::new();
        for (a, name) in model.attributes().iter().enumerate() {
            let col = log
                .attribute_index(name)
                .ok_or_else(|| Error::Schema(format!("log lacks model attribute '{name}'")))?;
            if model.schema.discretizer(name).is_some() && log.schema.discretizer(name).is_none() {
                return Err(Error::Schema(format!("attribute '{name}' has not been discretized")));
            }
            let dict = &model.dictionaries[a];
            translate.push(
                log.dictionaries()[col]
                    .values()
                    .iter()
                    .map(|v| dict.get(v).unwrap_or(UNSEEN))
                    .collect(),
            );
            columns.push(col);
        }
        Ok(Self {
            model,
            columns,
            translate,
        })
    }

    pub fn encode(&self, values: &[Symbol]) -> Vec<Symbol> {
        self.columns
            .iter()
            .zip(&self.translate)
            .map(|(&c, t)| t[values[c] as usize])
            .collect()
    }

    pub fn score_trace(&self, trace: &Trace) -> Result<TraceScore> {
        if trace.is_empty() {
            return Err(Error::InvalidArgument(format!("trace '{}' is empty", trace.id)));
        }
        let encoded: Vec<Vec<Symbol>> = trace.events.iter().map(|e| self.encode(&e.values)).collect();
        let event_scores = encoded
            .iter()
            .enumerate()
            .map(|(i, e)| score_event(self.model, e, (i > 0).then(|| encoded[i - 1].as_slice())))
            .collect::<Result<Vec<_>>>()?;
        let sum: f64 = event_scores.iter().map(|s| s.total).sum();
        Ok(TraceScore {
            trace_id: trace.id.clone(),
            mean: sum / event_scores.len() as f64,
            event_scores,
            first_event_time: trace.first_event_time(),
        })
    }
}

/// Scores one trace of `log`.
pub fn score_trace(model: &EdbnModel, log: &EventLog, trace: &Trace) -> Result<TraceScore> {
    Scorer::new(model, log)?.score_trace(trace)
}

/// Scores every trace, preserving trace order. Discretizers stored in the
/// model are applied first.
pub fn score_log(model: &EdbnModel, log: &EventLog) -> Result<Vec<TraceScore>> {
    let prepared;
    let log = if model.schema.discretizers.is_empty() {
        log
    } else {
        prepared = log.apply_schema_discretizers(&model.schema)?;
        &prepared
    };
    let scorer = Scorer::new(model, log)?;
    log.traces().par_iter().map(|t| scorer.score_trace(t)).collect()
}

pub fn trace_means(scores: &[TraceScore]) -> Vec<f64> {
    scores.iter().map(|s| s.mean).collect()
}

/// One row per (event, attribute). FD components get one column per FD edge
/// of the model, left empty where the edge does not target the attribute.
pub fn write_scores_csv<W: Write>(model: &EdbnModel, scores: &[TraceScore], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = ["trace_id", "position", "attribute", "value_component", "cpt_component"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((0..model.fdmaps.len()).map(|i| format!("fd[{}]", model.fd_label(i))));
    header.extend(["partial", "event_total", "trace_mean"].iter().map(|s| s.to_string()));
    w.write_record(&header)?;
    let mut row: Vec<String> = Vec::with_capacity(header.len());
    for ts in scores {
        let mean = ts.mean.to_string();
        for (pos, es) in ts.event_scores.iter().enumerate() {
            let total = es.total.to_string();
            for a in &es.per_attribute {
                row.clear();
                row.push(ts.trace_id.clone());
                row.push(pos.to_string());
                row.push(model.attributes()[a.attribute].clone());
                row.push(a.value_component.to_string());
                row.push(a.cpt_component.to_string());
                let mut fds = vec![String::new(); model.fdmaps.len()];
                for &(fi, c) in &a.fd_components {
                    fds[fi] = c.to_string();
                }
                row.extend(fds);
                row.push(a.partial.to_string());
                row.push(total.clone());
                row.push(mean.clone());
                w.write_record(&row)?;
            }
        }
    }
    w.flush().map_err(|e| Error::io("<scores output>", e))?;
    Ok(())
}

/// One row per trace: index, id, first event time, mean score.
pub fn write_trace_scores_csv<W: Write>(scores: &[TraceScore], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["trace_index", "trace_id", "first_event_time", "trace_mean"])?;
    for (i, s) in scores.iter().enumerate() {
        w.write_record([
            i.to_string(),
            s.trace_id.clone(),
            s.first_event_time.map(|t| t.to_string()).unwrap_or_default(),
            s.mean.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<scores output>", e))?;
    Ok(())
}

/// Reads `(trace_id, trace_mean)` pairs in file order from either scores
/// CSV layout; consecutive rows of the same trace collapse to one.
pub fn read_trace_means<R: Read>(reader: R) -> Result<Vec<(String, f64)>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr.headers()?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("scores file lacks column '{name}'")))
    };
    let id_col = col("trace_id")?;
    let mean_col = col("trace_mean")?;
    let mut out: Vec<(String, f64)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let id = &rec[id_col];
        if out.last().is_some_and(|(last, _)| last == id) {
            continue;
        }
        let mean: f64 = rec[mean_col].parse().map_err(|_| Error::Parse {
            line,
            message: format!("bad trace_mean '{}'", &rec[mean_col]),
        })?;
        out.push((id.to_string(), mean));
    }
    Ok(out)
}
