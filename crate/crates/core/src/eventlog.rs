//! Event logs: CSV ingestion, trace grouping, attribute filtering and
//! discretization of numeric columns.
//!
//! Every value attribute is dictionary-encoded; an [`Event`] stores one
//! symbol per value attribute, aligned with [`EventLog::attribute_names`].

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reserved symbol for empty cells.
pub const MISSING: &str = "⟨missing⟩";

pub type Symbol = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttributeKind {
    Categorical,
    Numeric,
    TraceId,
    Timestamp,
}

impl AttributeKind {
    fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "categorical" | "cat" => Some(Self::Categorical),
            "numeric" | "num" => Some(Self::Numeric),
            "trace-id" | "case" | "case-id" => Some(Self::TraceId),
            "timestamp" | "time" => Some(Self::Timestamp),
            _ => None,
        }
    }

    fn is_value(self) -> bool {
        matches!(self, Self::Categorical | Self::Numeric)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeDescriptor {
    pub name: String,
    pub kind: AttributeKind,
}

impl AttributeDescriptor {
    pub fn new(name: impl Into<String>, kind: AttributeKind) -> Self {
        Self {
            name: name.into(),
            kind,
        }
    }
}

/// Frozen equal-frequency bin boundaries for one numeric attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discretizer {
    pub attribute: String,
    pub boundaries: Vec<f64>,
}

impl Discretizer {
    /// Index of the bin holding `x`: the number of boundaries `<= x`.
    pub fn bin(&self, x: f64) -> usize {
        self.boundaries.partition_point(|b| *b <= x)
    }

    pub fn bin_count(&self) -> usize {
        self.boundaries.len() + 1
    }

    pub fn label(&self, bin: usize) -> String {
        let lo = if bin == 0 {
            "-inf".to_string()
        } else {
            self.boundaries[bin - 1].to_string()
        };
        let hi = if bin >= self.boundaries.len() {
            "inf".to_string()
        } else {
            self.boundaries[bin].to_string()
        };
        format!("[{lo},{hi})")
    }

    /// Maps a raw cell to its bin label. Missing cells stay missing.
    pub fn label_for(&self, raw: &str) -> Result<String> {
        if raw == MISSING {
            return Ok(MISSING.to_string());
        }
        let x = parse_number(raw).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "attribute '{}': value '{raw}' is not numeric",
                self.attribute
            ))
        })?;
        Ok(self.label(self.bin(x)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretizerSpec {
    pub attribute: String,
    pub bin_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub attributes: Vec<AttributeDescriptor>,
    pub trace_id_column: String,
    #[serde(default)]
    pub timestamp_column: Option<String>,
    #[serde(default)]
    pub discretizers: Vec<Discretizer>,
}

impl Schema {
    pub fn new(attributes: Vec<AttributeDescriptor>) -> Result<Self> {
        let mut seen = HashSet::new();
        for a in &attributes {
            if !seen.insert(a.name.as_str()) {
                return Err(Error::Schema(format!("duplicate attribute '{}'", a.name)));
            }
        }
        let ids: Vec<_> = attributes
            .iter()
            .filter(|a| a.kind == AttributeKind::TraceId)
            .collect();
        if ids.len() != 1 {
            return Err(Error::Schema(format!(
                "expected exactly one trace-id column, found {}",
                ids.len()
            )));
        }
        let trace_id_column = ids[0].name.clone();
        let stamps: Vec<_> = attributes
            .iter()
            .filter(|a| a.kind == AttributeKind::Timestamp)
            .collect();
        if stamps.len() > 1 {
            return Err(Error::Schema("more than one timestamp column".into()));
        }
        let timestamp_column = stamps.first().map(|a| a.name.clone());
        Ok(Self {
            attributes,
            trace_id_column,
            timestamp_column,
            discretizers: Vec::new(),
        })
    }

    /// Every column other than the trace id and timestamp is categorical.
    pub fn infer(header: &[String], trace_id: &str, timestamp: Option<&str>) -> Result<Self> {
        if !header.iter().any(|h| h == trace_id) {
            return Err(Error::Schema(format!(
                "trace-id column '{trace_id}' not found in header"
            )));
        }
        if let Some(ts) = timestamp {
            if !header.iter().any(|h| h == ts) {
                return Err(Error::Schema(format!(
                    "timestamp column '{ts}' not found in header"
                )));
            }
        }
        let attributes = header
            .iter()
            .map(|h| {
                let kind = if h == trace_id {
                    AttributeKind::TraceId
                } else if Some(h.as_str()) == timestamp {
                    AttributeKind::Timestamp
                } else {
                    AttributeKind::Categorical
                };
                AttributeDescriptor::new(h.clone(), kind)
            })
            .collect();
        Self::new(attributes)
    }

    /// Parses `column = kind` lines. Blank lines and `#` comments are skipped.
    pub fn from_config_str(text: &str) -> Result<Self> {
        let mut attributes = Vec::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (name, kind) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: no as u64 + 1,
                message: format!("expected 'column = kind', got '{line}'"),
            })?;
            let kind = AttributeKind::parse(kind).ok_or_else(|| Error::Parse {
                line: no as u64 + 1,
                message: format!("unknown attribute kind '{}'", kind.trim()),
            })?;
            attributes.push(AttributeDescriptor::new(name.trim(), kind));
        }
        Self::new(attributes)
    }

    pub fn from_config_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_config_str(&text)
    }

    pub fn value_attributes(&self) -> impl Iterator<Item = &AttributeDescriptor> {
        self.attributes.iter().filter(|a| a.kind.is_value())
    }

    pub fn value_attribute_names(&self) -> Vec<String> {
        self.value_attributes().map(|a| a.name.clone()).collect()
    }

    pub fn discretizer(&self, attribute: &str) -> Option<&Discretizer> {
        self.discretizers.iter().find(|d| d.attribute == attribute)
    }

    fn kind_of(&self, name: &str) -> Option<AttributeKind> {
        self.attributes.iter().find(|a| a.name == name).map(|a| a.kind)
    }
}

/// Bijection between original strings and dense symbols.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Dictionary {
    values: Vec<String>,
    index: HashMap<String, Symbol>,
}

impl Dictionary {
    pub fn from_values(values: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(values.len());
        for (i, v) in values.iter().enumerate() {
            if index.insert(v.clone(), i as Symbol).is_some() {
                return Err(Error::Integrity(format!("duplicate dictionary value '{v}'")));
            }
        }
        Ok(Self { values, index })
    }

    pub fn intern(&mut self, value: &str) -> Symbol {
        if let Some(&s) = self.index.get(value) {
            return s;
        }
        let s = self.values.len() as Symbol;
        self.values.push(value.to_string());
        self.index.insert(value.to_string(), s);
        s
    }

    pub fn get(&self, value: &str) -> Option<Symbol> {
        self.index.get(value).copied()
    }

    pub fn decode(&self, symbol: Symbol) -> &str {
        &self.values[symbol as usize]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[String] {
        &self.values
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub position: usize,
    pub timestamp: Option<i64>,
    pub values: Vec<Symbol>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub id: String,
    pub events: Vec<Event>,
}

impl Trace {
    pub fn first_event_time(&self) -> Option<i64> {
        self.events.iter().filter_map(|e| e.timestamp).min()
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventLog {
    pub schema: Schema,
    attribute_names: Vec<String>,
    dictionaries: Vec<Dictionary>,
    traces: Vec<Trace>,
}

impl EventLog {
    pub fn empty(schema: Schema) -> Self {
        let attribute_names = schema.value_attribute_names();
        let dictionaries = vec![Dictionary::default(); attribute_names.len()];
        Self {
            schema,
            attribute_names,
            dictionaries,
            traces: Vec::new(),
        }
    }

    pub fn attribute_names(&self) -> &[String] {
        &self.attribute_names
    }

    pub fn attribute_index(&self, name: &str) -> Option<usize> {
        self.attribute_names.iter().position(|n| n == name)
    }

    pub fn dictionaries(&self) -> &[Dictionary] {
        &self.dictionaries
    }

    pub fn traces(&self) -> &[Trace] {
        &self.traces
    }

    pub fn trace_count(&self) -> usize {
        self.traces.len()
    }

    pub fn event_count(&self) -> usize {
        self.traces.iter().map(Trace::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }

    /// Original string for one cell.
    pub fn cell(&self, trace: usize, event: usize, attribute: usize) -> &str {
        let sym = self.traces[trace].events[event].values[attribute];
        self.dictionaries[attribute].decode(sym)
    }

    /// Removes the named columns. Trace order is untouched.
    pub fn filter_attributes<S: AsRef<str>>(&self, drop: &[S]) -> Result<EventLog> {
        let drop: HashSet<&str> = drop.iter().map(|s| s.as_ref()).collect();
        for name in &drop {
            match self.schema.kind_of(name) {
                None => return Err(Error::UnknownAttribute(name.to_string())),
                Some(AttributeKind::TraceId) => {
                    return Err(Error::Schema(format!(
                        "cannot drop the trace-id column '{name}'"
                    )))
                }
                _ => {}
            }
        }
        if drop.is_empty() {
            return Ok(self.clone());
        }
        let keep: Vec<usize> = (0..self.attribute_names.len())
            .filter(|&i| !drop.contains(self.attribute_names[i].as_str()))
            .collect();
        let mut schema = self.schema.clone();
        schema.attributes.retain(|a| !drop.contains(a.name.as_str()));
        schema.discretizers.retain(|d| !drop.contains(d.attribute.as_str()));
        if let Some(ts) = &schema.timestamp_column {
            if drop.contains(ts.as_str()) {
                schema.timestamp_column = None;
            }
        }
        let traces = self
            .traces
            .iter()
            .map(|t| Trace {
                id: t.id.clone(),
                events: t
                    .events
                    .iter()
                    .map(|e| Event {
                        position: e.position,
                        timestamp: e.timestamp,
                        values: keep.iter().map(|&i| e.values[i]).collect(),
                    })
                    .collect(),
            })
            .collect();
        Ok(EventLog {
            attribute_names: schema.value_attribute_names(),
            dictionaries: keep.iter().map(|&i| self.dictionaries[i].clone()).collect(),
            schema,
            traces,
        })
    }

    /// Learns equal-frequency bin boundaries over every occurrence of the
    /// attribute in this log and replaces its values by bin labels.
    pub fn discretize(&self, spec: &DiscretizerSpec) -> Result<EventLog> {
        if spec.bin_count < 2 {
            return Err(Error::InvalidArgument(format!(
                "bin count must be at least 2, got {}",
                spec.bin_count
            )));
        }
        let attr = self
            .attribute_index(&spec.attribute)
            .ok_or_else(|| Error::UnknownAttribute(spec.attribute.clone()))?;
        if self.schema.kind_of(&spec.attribute) != Some(AttributeKind::Numeric) {
            return Err(Error::Schema(format!(
                "attribute '{}' is not numeric",
                spec.attribute
            )));
        }
        if self.schema.discretizer(&spec.attribute).is_some() {
            return Err(Error::Schema(format!(
                "attribute '{}' is already discretized",
                spec.attribute
            )));
        }
        let dict = &self.dictionaries[attr];
        let parsed: Vec<Option<f64>> = dict
            .values()
            .iter()
            .map(|v| {
                if v == MISSING {
                    Ok(None)
                } else {
                    parse_number(v).map(Some).ok_or_else(|| {
                        Error::InvalidArgument(format!(
                            "attribute '{}': value '{v}' is not numeric",
                            spec.attribute
                        ))
                    })
                }
            })
            .collect::<Result<_>>()?;
        let mut sample: Vec<f64> = self
            .traces
            .iter()
            .flat_map(|t| t.events.iter())
            .filter_map(|e| parsed[e.values[attr] as usize])
            .collect();
        sample.sort_by(f64::total_cmp);
        let boundaries = equal_frequency_boundaries(&sample, spec.bin_count);
        if boundaries.len() + 1 < spec.bin_count {
            log::warn!(
                "attribute '{}': only {} bins possible, requested {}",
                spec.attribute,
                boundaries.len() + 1,
                spec.bin_count
            );
        }
        let disc = Discretizer {
            attribute: spec.attribute.clone(),
            boundaries,
        };
        let mut out = self.apply_discretizer(&disc)?;
        out.schema.discretizers.push(disc);
        Ok(out)
    }

    /// Replaces raw numeric values with bin labels from frozen boundaries.
    /// The schema is not updated; see [`EventLog::discretize`].
    pub fn apply_discretizer(&self, disc: &Discretizer) -> Result<EventLog> {
        let attr = self
            .attribute_index(&disc.attribute)
            .ok_or_else(|| Error::UnknownAttribute(disc.attribute.clone()))?;
        let mut labels = Dictionary::default();
        let remap: Vec<Symbol> = self.dictionaries[attr]
            .values()
            .iter()
            .map(|v| disc.label_for(v).map(|l| labels.intern(&l)))
            .collect::<Result<_>>()?;
        let mut out = self.clone();
        for t in &mut out.traces {
            for e in &mut t.events {
                e.values[attr] = remap[e.values[attr] as usize];
            }
        }
        out.dictionaries[attr] = labels;
        Ok(out)
    }

    /// Applies every discretizer of `schema` that this log has not applied yet.
    pub fn apply_schema_discretizers(&self, schema: &Schema) -> Result<EventLog> {
        let mut out = self.clone();
        for d in &schema.discretizers {
            if out.schema.discretizer(&d.attribute).is_none() {
                out = out.apply_discretizer(d)?;
                out.schema.discretizers.push(d.clone());
            }
        }
        Ok(out)
    }

    /// Splits off the earliest whole traces whose cumulative event count
    /// first reaches `n_events`. The second element is the whole log.
    pub fn split_train(&self, n_events: usize) -> Result<(EventLog, EventLog)> {
        let total = self.event_count();
        if n_events == 0 || n_events > total {
            return Err(Error::InvalidArgument(format!(
                "training size {n_events} outside 1..={total} events"
            )));
        }
        let mut acc = 0;
        let mut take = 0;
        for t in &self.traces {
            acc += t.len();
            take += 1;
            if acc >= n_events {
                break;
            }
        }
        Ok((self.select_traces(0..take), self.clone()))
    }

    /// Sub-log with the given traces, dictionaries compacted to the values
    /// that actually occur in them.
    pub fn select_traces(&self, indices: impl IntoIterator<Item = usize>) -> EventLog {
        let mut dictionaries = vec![Dictionary::default(); self.dictionaries.len()];
        let traces = indices
            .into_iter()
            .map(|i| {
                let t = &self.traces[i];
                Trace {
                    id: t.id.clone(),
                    events: t
                        .events
                        .iter()
                        .map(|e| Event {
                            position: e.position,
                            timestamp: e.timestamp,
                            values: e
                                .values
                                .iter()
                                .enumerate()
                                .map(|(a, &s)| {
                                    dictionaries[a].intern(self.dictionaries[a].decode(s))
                                })
                                .collect(),
                        })
                        .collect(),
                }
            })
            .collect();
        EventLog {
            schema: self.schema.clone(),
            attribute_names: self.attribute_names.clone(),
            dictionaries,
            traces,
        }
    }

    /// Writes the log as CSV: trace id, timestamp (if any), then value attributes.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec![self.schema.trace_id_column.clone()];
        if let Some(ts) = &self.schema.timestamp_column {
            header.push(ts.clone());
        }
        header.extend(self.attribute_names.iter().cloned());
        w.write_record(&header)?;
        let has_ts = self.schema.timestamp_column.is_some();
        let mut row: Vec<String> = Vec::with_capacity(header.len());
        for t in &self.traces {
            for e in &t.events {
                row.clear();
                row.push(t.id.clone());
                if has_ts {
                    row.push(e.timestamp.map(format_timestamp).unwrap_or_default());
                }
                for (a, &s) in e.values.iter().enumerate() {
                    row.push(self.dictionaries[a].decode(s).to_string());
                }
                w.write_record(&row)?;
            }
        }
        w.flush().map_err(|e| Error::io("<csv output>", e))?;
        Ok(())
    }
}

/// Buffered rows of one trace: (timestamp, row order, values).
type PendingRows = Vec<(Option<i64>, usize, Vec<Symbol>)>;

/// Accumulates rows and produces an [`EventLog`] with grouped, ordered traces.
#[derive(Debug)]
pub struct EventLogBuilder {
    schema: Schema,
    dictionaries: Vec<Dictionary>,
    trace_index: HashMap<String, usize>,
    pending: Vec<(String, PendingRows)>,
    rows: usize,
}

impl EventLogBuilder {
    pub fn new(schema: Schema) -> Self {
        let n = schema.value_attributes().count();
        Self {
            schema,
            dictionaries: vec![Dictionary::default(); n],
            trace_index: HashMap::new(),
            pending: Vec::new(),
            rows: 0,
        }
    }

    /// `values` must follow the schema's value-attribute order.
    pub fn push<S: AsRef<str>>(
        &mut self,
        trace_id: &str,
        timestamp: Option<i64>,
        values: &[S],
    ) -> Result<()> {
        if values.len() != self.dictionaries.len() {
            return Err(Error::Schema(format!(
                "expected {} attribute values, got {}",
                self.dictionaries.len(),
                values.len()
            )));
        }
        let symbols = values
            .iter()
            .zip(self.dictionaries.iter_mut())
            .map(|(v, d)| {
                let v = v.as_ref();
                d.intern(if v.is_empty() { MISSING } else { v })
            })
            .collect();
        let slot = match self.trace_index.get(trace_id) {
            Some(&i) => i,
            None => {
                self.pending.push((trace_id.to_string(), Vec::new()));
                self.trace_index
                    .insert(trace_id.to_string(), self.pending.len() - 1);
                self.pending.len() - 1
            }
        };
        self.pending[slot].1.push((timestamp, self.rows, symbols));
        self.rows += 1;
        Ok(())
    }

    pub fn finish(self) -> EventLog {
        let mut traces: Vec<(Option<i64>, usize, Trace)> = self
            .pending
            .into_iter()
            .map(|(id, mut rows)| {
                if rows.iter().all(|r| r.0.is_some()) {
                    rows.sort_by_key(|r| (r.0, r.1));
                }
                let first_row = rows.iter().map(|r| r.1).min().unwrap_or(0);
                let events: Vec<Event> = rows
                    .into_iter()
                    .enumerate()
                    .map(|(position, (timestamp, _, values))| Event {
                        position,
                        timestamp,
                        values,
                    })
                    .collect();
                let trace = Trace { id, events };
                (trace.first_event_time(), first_row, trace)
            })
            .collect();
        if traces.iter().all(|t| t.0.is_some()) {
            traces.sort_by_key(|t| (t.0, t.1));
        } else {
            traces.sort_by_key(|t| t.1);
        }
        EventLog {
            attribute_names: self.schema.value_attribute_names(),
            schema: self.schema,
            dictionaries: self.dictionaries,
            traces: traces.into_iter().map(|t| t.2).collect(),
        }
    }
}

/// Reads a CSV log. Header names must cover every schema column; extra
/// columns are ignored.
pub fn parse_log(path: impl AsRef<Path>, schema: &Schema) -> Result<EventLog> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_reader(file, schema)
}

pub fn parse_reader<R: Read>(reader: R, schema: &Schema) -> Result<EventLog> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = match rdr.headers() {
        Ok(h) => h.iter().map(str::to_string).collect(),
        Err(e) => return Err(csv_error(e)),
    };
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(Error::EmptyLog);
    }
    let column = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("column '{name}' not found in header")))
    };
    let id_col = column(&schema.trace_id_column)?;
    let ts_col = schema.timestamp_column.as_deref().map(column).transpose()?;
    let value_cols: Vec<usize> = schema
        .value_attributes()
        .map(|a| column(&a.name))
        .collect::<Result<_>>()?;

    let mut builder = EventLogBuilder::new(schema.clone());
    let mut record = csv::StringRecord::new();
    loop {
        match rdr.read_record(&mut record) {
            Ok(true) => {}
            Ok(false) => break,
            Err(e) => return Err(csv_error(e)),
        }
        let line = record.position().map_or(0, |p| p.line());
        let trace_id = &record[id_col];
        if trace_id.is_empty() {
            return Err(Error::Parse {
                line,
                message: "empty trace id".into(),
            });
        }
        let timestamp = match ts_col {
            Some(c) if !record[c].is_empty() => {
                Some(parse_timestamp(&record[c]).ok_or_else(|| Error::Parse {
                    line,
                    message: format!("unparseable timestamp '{}'", &record[c]),
                })?)
            }
            _ => None,
        };
        let values: Vec<&str> = value_cols.iter().map(|&c| &record[c]).collect();
        builder.push(trace_id, timestamp, &values)?;
    }
    if builder.rows == 0 {
        return Err(Error::EmptyLog);
    }
    Ok(builder.finish())
}

/// Reads only the header row of a CSV file.
pub fn read_header(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);
    let header: Vec<String> = rdr.headers().map_err(csv_error)?.iter().map(str::to_string).collect();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(Error::EmptyLog);
    }
    Ok(header)
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line());
    match (line, e.kind()) {
        (Some(line), _) => Error::Parse {
            line,
            message: e.to_string(),
        },
        (None, csv::ErrorKind::UnequalLengths { pos, .. }) => Error::Parse {
            line: pos.as_ref().map_or(0, |p| p.line()),
            message: e.to_string(),
        },
        _ => Error::Csv(e),
    }
}

/// Equal-frequency cut points over a sorted sample. Duplicate cut points
/// collapse, so heavily tied data yields fewer bins.
pub fn equal_frequency_boundaries(sorted: &[f64], bins: usize) -> Vec<f64> {
    let n = sorted.len();
    let mut out: Vec<f64> = Vec::with_capacity(bins.saturating_sub(1));
    if n == 0 {
        return out;
    }
    for j in 1..bins {
        let cut = sorted[(j * n) / bins];
        if cut > sorted[0] && out.last().is_none_or(|&b| cut > b) {
            out.push(cut);
        }
    }
    out
}

fn parse_number(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok().filter(|x| x.is_finite())
}

/// Timestamps as milliseconds since the epoch. Plain integers are taken
/// as ordinal keys unchanged.
pub fn parse_timestamp(s: &str) -> Option<i64> {
    let s = s.trim();
    if let Ok(n) = s.parse::<i64>() {
        return Some(n);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp_millis());
    }
    const FORMATS: &[&str] = &[
        "%Y-%m-%dT%H:%M:%S%.f",
        "%Y-%m-%d %H:%M:%S%.f",
        "%Y/%m/%d %H:%M:%S%.f",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M",
        "%d-%m-%Y %H:%M:%S%.f",
        "%d/%m/%Y %H:%M:%S%.f",
    ];
    for f in FORMATS {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, f) {
            return Some(dt.and_utc().timestamp_millis());
        }
    }
    for f in ["%Y-%m-%d", "%Y/%m/%d", "%d-%m-%Y"] {
        if let Ok(d) = NaiveDate::parse_from_str(s, f) {
            return d.and_hms_opt(0, 0, 0).map(|dt| dt.and_utc().timestamp_millis());
        }
    }
    None
}

pub fn format_timestamp(ms: i64) -> String {
    match DateTime::from_timestamp_millis(ms) {
        Some(dt) if ms % 1000 == 0 => dt.format("%Y-%m-%dT%H:%M:%S").to_string(),
        Some(dt) => dt.format("%Y-%m-%dT%H:%M:%S%.3f").to_string(),
        None => ms.to_string(),
    }
}
