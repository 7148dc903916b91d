//! Deterministic synthetic process logs with planted dependencies,
//! Markovian activities and injectable drifts.
//!
//! Every trace belongs to one applicant whose `area`, `young_farmer` and
//! `number_parcels` come from a per-applicant map (planted FDs); each
//! activity belongs to one subprocess (a planted event-level FD); document
//! types are drawn per event given the activity.

use std::collections::HashMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Geometric;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eventlog::{AttributeDescriptor, AttributeKind, EventLog, EventLogBuilder, Schema};
use crate::structure::Slice;

pub const CASE_COLUMN: &str = "case";
pub const TIME_COLUMN: &str = "time";
const BASE_TIME_MS: i64 = 1_420_070_400_000; // 2015-01-01

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode", content = "size")]
pub enum Applicants {
    /// A fresh applicant for every trace.
    Unique,
    /// Applicants drawn uniformly from a fixed pool.
    Pool(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceLength {
    pub min: usize,
    /// Success probability of the geometric tail added to `min`.
    pub p: f64,
    pub max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessSpec {
    pub activities: Vec<String>,
    pub initial: Vec<f64>,
    pub transitions: Vec<Vec<f64>>,
    pub doctypes: Vec<String>,
    pub doctype_given_activity: Vec<Vec<f64>>,
    pub subprocess_of_activity: Vec<String>,
    pub applicants: Applicants,
    pub areas: Vec<String>,
    pub parcel_counts: Vec<String>,
    pub departments: Vec<String>,
    pub young_farmer_rate: f64,
    /// Adds a per-event unique `eventid` column.
    pub event_ids: bool,
    pub trace_length: TraceLength,
    #[serde(default)]
    pub planted_outliers: Vec<PlantedOutlier>,
    pub seed: u64,
}

/// A trace with a fresh applicant whose case attributes are overridden.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedOutlier {
    pub at_trace: usize,
    pub overrides: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DriftChange {
    /// Replaces the activity transition matrix.
    Transitions { matrix: Vec<Vec<f64>> },
    /// Emits `value` for `attribute` with the given probability. Applies
    /// per event for `doctype`, per trace for `department`, and per newly
    /// mapped applicant for `area`, `number_parcels` and `young_farmer`.
    NewValue {
        attribute: String,
        value: String,
        probability: f64,
    },
    /// Forgets the applicant map so applicants get new case attributes.
    RemapApplicants,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftSpec {
    pub at_trace: usize,
    pub changes: Vec<DriftChange>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FdTruth {
    pub antecedent: String,
    pub slice: Slice,
    pub consequent: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub drift_indices: Vec<usize>,
    /// Dependencies that hold exactly before any drift: the planted maps
    /// plus those implied by trace-constant attributes. Exhaustive for
    /// [`Applicants::Unique`]; a small pool may add accidental ones.
    pub fds: Vec<FdTruth>,
    pub planted_outliers: Vec<usize>,
    pub planted_outlier_ids: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct GeneratedLog {
    pub log: EventLog,
    pub truth: GroundTruth,
}

/// Row-stochastic ring matrix: `forward` mass to the next activity,
/// `stay` to itself, the rest spread evenly.
pub fn ring_matrix(n: usize, hop: usize, forward: f64, stay: f64) -> Vec<Vec<f64>> {
    let rest = (1.0 - forward - stay) / (n as f64 - 2.0);
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if j == (i + hop) % n {
                        forward
                    } else if j == i {
                        stay
                    } else {
                        rest
                    }
                })
                .collect()
        })
        .collect()
}

impl ProcessSpec {
    /// A small grant-application process: eight activities over three subprocesses.
    pub fn example(seed: u64) -> Self {
        let activities: Vec<String> = [
            "mail income",
            "mail valid",
            "initialize",
            "begin editing",
            "finish editing",
            "calculate",
            "begin payment",
            "finish payment",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        let n = activities.len();
        let doctypes: Vec<String> = ["Payment application", "Entitlement application", "Parcel document", "Control summary"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let doctype_given_activity = (0..n)
            .map(|i| {
                let mut row = vec![0.1; doctypes.len()];
                row[i % doctypes.len()] = 0.7;
                row
            })
            .collect();
        let subprocess_of_activity = ["Application", "Application", "Main", "Main", "Main", "Main", "Payment", "Payment"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let mut initial = vec![0.0; n];
        initial[0] = 0.8;
        initial[2] = 0.2;
        Self {
            activities,
            initial,
            transitions: ring_matrix(n, 1, 0.6, 0.1),
            doctypes,
            doctype_given_activity,
            subprocess_of_activity,
            applicants: Applicants::Unique,
            areas: (0..148).map(|i| format!("area{i:03}")).collect(),
            parcel_counts: (1..=20).map(|i| i.to_string()).collect(),
            departments: ["e7", "6b", "4e", "d4"].iter().map(|s| s.to_string()).collect(),
            young_farmer_rate: 0.2,
            event_ids: true,
            trace_length: TraceLength {
                min: 5,
                p: 0.2,
                max: 60,
            },
            planted_outliers: Vec::new(),
            seed,
        }
    }

    pub fn attribute_names(&self) -> Vec<&'static str> {
        let mut names = vec![
            "activity",
            "doctype",
            "subprocess",
            "applicant",
            "area",
            "young_farmer",
            "number_parcels",
            "department",
        ];
        if self.event_ids {
            names.push("eventid");
        }
        names
    }

    pub fn schema(&self) -> Schema {
        let mut attrs = vec![
            AttributeDescriptor::new(CASE_COLUMN, AttributeKind::TraceId),
            AttributeDescriptor::new(TIME_COLUMN, AttributeKind::Timestamp),
        ];
        attrs.extend(
            self.attribute_names()
                .into_iter()
                .map(|n| AttributeDescriptor::new(n, AttributeKind::Categorical)),
        );
        Schema::new(attrs).expect("generated schema is valid")
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.activities.len();
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if n < 3 {
            return bad("need at least 3 activities".into());
        }
        check_distribution("initial distribution", &self.initial, n)?;
        check_matrix("transition matrix", &self.transitions, n)?;
        if self.doctypes.is_empty() {
            return bad("need at least one doctype".into());
        }
        if self.doctype_given_activity.len() != n {
            return bad("doctype table needs one row per activity".into());
        }
        for row in &self.doctype_given_activity {
            check_distribution("doctype row", row, self.doctypes.len())?;
        }
        if self.subprocess_of_activity.len() != n {
            return bad("subprocess map needs one entry per activity".into());
        }
        if self.areas.is_empty() || self.parcel_counts.is_empty() || self.departments.is_empty() {
            return bad("case attribute domains must be non-empty".into());
        }
        if !(0.0..=1.0).contains(&self.young_farmer_rate) {
            return bad("young_farmer rate outside [0, 1]".into());
        }
        if let Applicants::Pool(0) = self.applicants {
            return bad("applicant pool must be non-empty".into());
        }
        let tl = &self.trace_length;
        if tl.min == 0 || tl.max < tl.min || !(tl.p > 0.0 && tl.p <= 1.0) {
            return bad("invalid trace length distribution".into());
        }
        for o in &self.planted_outliers {
            for (a, _) in &o.overrides {
                if !["area", "young_farmer", "number_parcels", "department"].contains(&a.as_str()) {
                    return bad(format!("cannot override attribute '{a}'"));
                }
            }
        }
        Ok(())
    }
}

fn check_distribution(what: &str, row: &[f64], len: usize) -> Result<()> {
    if row.len() != len {
        return Err(Error::InvalidArgument(format!("{what} has {} entries, expected {len}", row.len())));
    }
    if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("{what} is not a probability distribution")));
    }
    Ok(())
}

fn check_matrix(what: &str, m: &[Vec<f64>], n: usize) -> Result<()> {
    if m.len() != n {
        return Err(Error::InvalidArgument(format!("{what} has {} rows, expected {n}", m.len())));
    }
    m.iter().try_for_each(|row| check_distribution(what, row, n))
}

#[derive(Clone)]
struct CaseProfile {
    area: String,
    young_farmer: String,
    parcels: String,
}

struct State {
    transitions: Vec<WeightedIndex<f64>>,
    new_values: HashMap<String, Vec<(String, f64)>>,
}

impl State {
    fn novel(&self, rng: &mut ChaCha8Rng, attribute: &str) -> Option<String> {
        for (v, p) in self.new_values.get(attribute)? {
            if rng.gen::<f64>() < *p {
                return Some(v.clone());
            }
        }
        None
    }
}

fn weighted(row: &[f64]) -> Result<WeightedIndex<f64>> {
    WeightedIndex::new(row).map_err(|e| Error::InvalidArgument(e.to_string()))
}

/// Generates `n_traces` traces; drifts apply from their `at_trace` onward.
pub fn generate_log(spec: &ProcessSpec, n_traces: usize, drifts: &[DriftSpec]) -> Result<GeneratedLog> {
    spec.validate()?;
    let n_act = spec.activities.len();
    let mut drifts: Vec<&DriftSpec> = drifts.iter().collect();
    drifts.sort_by_key(|d| d.at_trace);
    for d in &drifts {
        if d.at_trace >= n_traces {
            return Err(Error::InvalidArgument(format!(
                "drift at trace {} outside 0..{n_traces}",
                d.at_trace
            )));
        }
        for c in &d.changes {
            match c {
                DriftChange::Transitions { matrix } => check_matrix("drift transition matrix", matrix, n_act)?,
                DriftChange::NewValue { attribute, probability, .. } => {
                    if !["doctype", "department", "area", "number_parcels", "young_farmer"].contains(&attribute.as_str()) {
                        return Err(Error::InvalidArgument(format!("cannot inject values into '{attribute}'")));
                    }
                    if !(0.0..=1.0).contains(probability) {
                        return Err(Error::InvalidArgument("new-value probability outside [0, 1]".into()));
                    }
                }
                DriftChange::RemapApplicants => {}
            }
        }
    }
    for o in &spec.planted_outliers {
        if o.at_trace >= n_traces {
            return Err(Error::InvalidArgument(format!("planted outlier at {} outside 0..{n_traces}", o.at_trace)));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let initial = weighted(&spec.initial)?;
    let doctype_dists = spec
        .doctype_given_activity
        .iter()
        .map(|r| weighted(r))
        .collect::<Result<Vec<_>>>()?;
    let length_tail = Geometric::new(spec.trace_length.p).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut state = State {
        transitions: spec.transitions.iter().map(|r| weighted(r)).collect::<Result<_>>()?,
        new_values: HashMap::new(),
    };
    let mut profiles: HashMap<String, CaseProfile> = HashMap::new();
    let outliers: HashMap<usize, &PlantedOutlier> = spec.planted_outliers.iter().map(|o| (o.at_trace, o)).collect();

    let mut builder = EventLogBuilder::new(spec.schema());
    let mut next_drift = 0;
    let mut event_counter = 0usize;
    let mut outlier_ids = Vec::new();
    let mut row: Vec<String> = Vec::new();

    for t in 0..n_traces {
        while next_drift < drifts.len() && drifts[next_drift].at_trace == t {
            for c in &drifts[next_drift].changes {
                match c {
                    DriftChange::Transitions { matrix } => {
                        state.transitions = matrix.iter().map(|r| weighted(r)).collect::<Result<_>>()?;
                    }
                    DriftChange::NewValue {
                        attribute,
                        value,
                        probability,
                    } => state
                        .new_values
                        .entry(attribute.clone())
                        .or_default()
                        .push((value.clone(), *probability)),
                    DriftChange::RemapApplicants => profiles.clear(),
                }
            }
            next_drift += 1;
        }

        let trace_id = format!("case{t:06}");
        let planted = outliers.get(&t);
        let applicant = match (planted, spec.applicants) {
            (Some(_), _) => format!("outlier{t:06}"),
            (None, Applicants::Unique) => format!("app{t:06}"),
            (None, Applicants::Pool(n)) => format!("app{:04}", rng.gen_range(0..n)),
        };
        let mut profile = match profiles.get(&applicant) {
            Some(p) => p.clone(),
            None => {
                let p = CaseProfile {
                    area: state
                        .novel(&mut rng, "area")
                        .unwrap_or_else(|| spec.areas[rng.gen_range(0..spec.areas.len())].clone()),
                    young_farmer: state
                        .novel(&mut rng, "young_farmer")
                        .unwrap_or_else(|| (rng.gen::<f64>() < spec.young_farmer_rate).to_string()),
                    parcels: state
                        .novel(&mut rng, "number_parcels")
                        .unwrap_or_else(|| spec.parcel_counts[rng.gen_range(0..spec.parcel_counts.len())].clone()),
                };
                profiles.insert(applicant.clone(), p.clone());
                p
            }
        };
        let mut department = state
            .novel(&mut rng, "department")
            .unwrap_or_else(|| spec.departments[rng.gen_range(0..spec.departments.len())].clone());
        if let Some(o) = planted {
            for (a, v) in &o.overrides {
                match a.as_str() {
                    "area" => profile.area = v.clone(),
                    "young_farmer" => profile.young_farmer = v.clone(),
                    "number_parcels" => profile.parcels = v.clone(),
                    _ => department = v.clone(),
                }
            }
            outlier_ids.push(trace_id.clone());
        }

        let extra = length_tail.sample(&mut rng) as usize;
        let len = (spec.trace_length.min + extra).min(spec.trace_length.max);
        let start = BASE_TIME_MS + t as i64 * 3_600_000;
        let mut activity = initial.sample(&mut rng);
        for e in 0..len {
            if e > 0 {
                activity = state.transitions[activity].sample(&mut rng);
            }
            let doctype = state
                .novel(&mut rng, "doctype")
                .unwrap_or_else(|| spec.doctypes[doctype_dists[activity].sample(&mut rng)].clone());
            row.clear();
            row.push(spec.activities[activity].clone());
            row.push(doctype);
            row.push(spec.subprocess_of_activity[activity].clone());
            row.push(applicant.clone());
            row.push(profile.area.clone());
            row.push(profile.young_farmer.clone());
            row.push(profile.parcels.clone());
            row.push(department.clone());
            if spec.event_ids {
                row.push(format!("ev{event_counter:08}"));
            }
            event_counter += 1;
            builder.push(&trace_id, Some(start + e as i64 * 60_000), &row)?;
        }
    }

    let mut planted_outliers: Vec<usize> = spec.planted_outliers.iter().map(|o| o.at_trace).collect();
    planted_outliers.sort_unstable();
    Ok(GeneratedLog {
        log: builder.finish(),
        truth: GroundTruth {
            drift_indices: drifts.iter().map(|d| d.at_trace).collect(),
            fds: planted_fds(spec),
            planted_outliers,
            planted_outlier_ids: outlier_ids,
        },
    })
}

fn planted_fds(spec: &ProcessSpec) -> Vec<FdTruth> {
    let fd = |a: &str, slice: Slice, c: &str| FdTruth {
        antecedent: a.to_string(),
        slice,
        consequent: c.to_string(),
    };
    let mut determined = vec!["area", "young_farmer", "number_parcels"];
    if spec.applicants == Applicants::Unique {
        determined.push("department");
    }
    let constant = ["applicant", "area", "young_farmer", "number_parcels", "department"];
    let mut out = vec![fd("activity", Slice::Current, "subprocess")];
    for c in &determined {
        out.push(fd("applicant", Slice::Current, c));
        out.push(fd("applicant", Slice::Previous, c));
    }
    for c in constant {
        out.push(fd(c, Slice::Previous, c));
    }
    out.sort();
    out
}
