//! Parameter estimation for a learned structure, and the model file.
//!
//! The model file is a versioned JSON document with the top-level keys
//! `version`, `schema`, `graph`, `cpts`, `fdmaps`, `rates` and `metadata`.
//! Values are stored as their original strings; the previous-slice value of
//! a first event is written as [`START_LABEL`].

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eventlog::{Dictionary, EventLog, Schema, Symbol};
use crate::structure::{
    CdEdge, DependencyGraph, FdEdge, Node, Slice, SliceTable, StructureConfig, START, START_LABEL,
};

pub const FORMAT_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Cpt {
    pub target: usize,
    pub parents: Vec<Node>,
    pub rows: HashMap<Vec<Symbol>, HashMap<Symbol, f64>>,
}

impl Cpt {
    pub fn probability(&self, parents: &[Symbol], child: Symbol) -> Option<f64> {
        self.rows.get(parents).map(|row| row.get(&child).copied().unwrap_or(0.0))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdMap {
    pub edge: FdEdge,
    /// Antecedent value -> sorted permitted consequent values.
    pub mapping: HashMap<Symbol, Vec<Symbol>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rates {
    /// Per attribute, aligned with the model's attributes.
    pub new_value: Vec<f64>,
    /// Per CPT, aligned with `EdbnModel::cpts`.
    pub cpt_new_relation: Vec<f64>,
    /// Per FD map, aligned with `EdbnModel::fdmaps`.
    pub fd_new_relation: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub trace_count: usize,
    pub event_count: usize,
    pub config: StructureConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdbnModel {
    pub schema: Schema,
    pub dictionaries: Vec<Dictionary>,
    pub graph: DependencyGraph,
    pub cpts: Vec<Cpt>,
    pub fdmaps: Vec<FdMap>,
    pub rates: Rates,
    pub metadata: TrainingMetadata,
    cpt_of: Vec<Option<usize>>,
    fds_of: Vec<Vec<usize>>,
}

impl EdbnModel {
    fn assemble(
        schema: Schema,
        dictionaries: Vec<Dictionary>,
        graph: DependencyGraph,
        cpts: Vec<Cpt>,
        fdmaps: Vec<FdMap>,
        rates: Rates,
        metadata: TrainingMetadata,
    ) -> Self {
        let n = graph.attributes.len();
        let mut cpt_of = vec![None; n];
        for (i, c) in cpts.iter().enumerate() {
            cpt_of[c.target] = Some(i);
        }
        let mut fds_of = vec![Vec::new(); n];
        for (i, f) in fdmaps.iter().enumerate() {
            fds_of[f.edge.consequent].push(i);
        }
        Self {
            schema,
            dictionaries,
            graph,
            cpts,
            fdmaps,
            rates,
            metadata,
            cpt_of,
            fds_of,
        }
    }

    pub fn attributes(&self) -> &[String] {
        &self.graph.attributes
    }

    pub fn attribute_index(&self, name: &str) -> Option<usize> {
        self.graph.attributes.iter().position(|a| a == name)
    }

    pub fn cpt_of(&self, attribute: usize) -> Option<&Cpt> {
        self.cpt_of[attribute].map(|i| &self.cpts[i])
    }

    pub(crate) fn cpt_index(&self, attribute: usize) -> Option<usize> {
        self.cpt_of[attribute]
    }

    /// Indices into `fdmaps` of the FDs whose consequent is `attribute`.
    pub fn fds_of(&self, attribute: usize) -> &[usize] {
        &self.fds_of[attribute]
    }

    pub fn fd_label(&self, fd: usize) -> String {
        self.graph.fd_label(&self.fdmaps[fd].edge)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = self.to_json()?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelDocument::from_model(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Integrity(e.to_string()))?;
        let version = value
            .get("version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| Error::Integrity("missing format version".into()))?;
        if version != FORMAT_VERSION {
            return Err(Error::Version {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let doc: ModelDocument =
            serde_json::from_value(value).map_err(|e| Error::Integrity(e.to_string()))?;
        doc.into_model()
    }
}

/// Maximum-likelihood parameters for `graph` over the training log.
pub fn learn_parameters(train: &EventLog, graph: &DependencyGraph) -> Result<EdbnModel> {
    learn_parameters_with(train, graph, StructureConfig::default())
}

pub fn learn_parameters_with(
    train: &EventLog,
    graph: &DependencyGraph,
    config: StructureConfig,
) -> Result<EdbnModel> {
    if train.is_empty() {
        return Err(Error::EmptyLog);
    }
    if graph.attributes != train.attribute_names() {
        return Err(Error::Schema(
            "dependency graph was built for different attributes".into(),
        ));
    }
    // Compact dictionaries so that "seen" means "occurs in training".
    let train = train.select_traces(0..train.trace_count());
    let table = SliceTable::new(&train);
    let n = table.len() as f64;

    let new_value = train
        .dictionaries()
        .iter()
        .map(|d| d.len() as f64 / n)
        .collect();

    let mut cpts = Vec::new();
    let mut cpt_new_relation = Vec::new();
    let mut cd_edges: Vec<&CdEdge> = graph.cd_edges.iter().collect();
    cd_edges.sort_by_key(|e| e.target);
    for edge in cd_edges {
        let child = &table.current[edge.target];
        let columns: Vec<&[Symbol]> = edge.parents.iter().map(|&p| table.column(p)).collect();
        let mut counts: HashMap<Vec<Symbol>, HashMap<Symbol, u64>> = HashMap::new();
        for i in 0..table.len() {
            let key: Vec<Symbol> = columns.iter().map(|c| c[i]).collect();
            *counts.entry(key).or_default().entry(child[i]).or_insert(0) += 1;
        }
        cpt_new_relation.push(counts.len() as f64 / n);
        let rows = counts
            .into_iter()
            .map(|(key, row)| {
                let total: u64 = row.values().sum();
                let probs = row
                    .into_iter()
                    .map(|(v, c)| (v, c as f64 / total as f64))
                    .collect();
                (key, probs)
            })
            .collect();
        cpts.push(Cpt {
            target: edge.target,
            parents: edge.parents.clone(),
            rows,
        });
    }

    let mut fdmaps = Vec::new();
    let mut fd_new_relation = Vec::new();
    for edge in &graph.fd_edges {
        let ant = table.column(edge.antecedent);
        let cons = &table.current[edge.consequent];
        let mut mapping: HashMap<Symbol, Vec<Symbol>> = HashMap::new();
        for i in 0..table.len() {
            // Previous-slice FDs do not apply to first events.
            if edge.antecedent.slice == Slice::Previous && table.first[i] {
                continue;
            }
            let set = mapping.entry(ant[i]).or_default();
            if let Err(pos) = set.binary_search(&cons[i]) {
                set.insert(pos, cons[i]);
            }
        }
        fd_new_relation.push((mapping.len().max(1)) as f64 / n);
        fdmaps.push(FdMap {
            edge: edge.clone(),
            mapping,
        });
    }

    let metadata = TrainingMetadata {
        trace_count: train.trace_count(),
        event_count: table.len(),
        config,
    };
    Ok(EdbnModel::assemble(
        train.schema.clone(),
        train.dictionaries().to_vec(),
        graph.clone(),
        cpts,
        fdmaps,
        Rates {
            new_value,
            cpt_new_relation,
            fd_new_relation,
        },
        metadata,
    ))
}

/// Structure and parameters in one step.
pub fn train_model(train: &EventLog, config: &StructureConfig) -> Result<EdbnModel> {
    let graph = crate::structure::build_structure(train, config)?;
    learn_parameters_with(train, &graph, config.clone())
}

// ---- serialized form ----

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    version: u64,
    schema: SchemaDoc,
    graph: GraphDoc,
    cpts: Vec<CptDoc>,
    fdmaps: Vec<FdMapDoc>,
    rates: RatesDoc,
    metadata: TrainingMetadata,
}

#[derive(Serialize, Deserialize)]
struct SchemaDoc {
    #[serde(flatten)]
    schema: Schema,
    dictionaries: BTreeMap<String, Vec<String>>,
}

#[derive(Serialize, Deserialize, Clone, PartialEq)]
struct NodeDoc {
    attribute: String,
    slice: Slice,
}

#[derive(Serialize, Deserialize)]
struct FdEdgeDoc {
    antecedent: NodeDoc,
    consequent: String,
}

#[derive(Serialize, Deserialize)]
struct CdEdgeDoc {
    parents: Vec<NodeDoc>,
    target: String,
}

#[derive(Serialize, Deserialize)]
struct GraphDoc {
    attributes: Vec<String>,
    fd_edges: Vec<FdEdgeDoc>,
    cd_edges: Vec<CdEdgeDoc>,
}

#[derive(Serialize, Deserialize)]
struct CptRowDoc {
    parents: Vec<String>,
    probabilities: Vec<(String, f64)>,
}

#[derive(Serialize, Deserialize)]
struct CptDoc {
    target: String,
    parents: Vec<NodeDoc>,
    new_relation_rate: f64,
    rows: Vec<CptRowDoc>,
}

#[derive(Serialize, Deserialize)]
struct FdMapDoc {
    antecedent: NodeDoc,
    consequent: String,
    new_relation_rate: f64,
    mapping: Vec<(String, Vec<String>)>,
}

#[derive(Serialize, Deserialize)]
struct RatesDoc {
    new_value_rate: BTreeMap<String, f64>,
    new_relation_rate: BTreeMap<String, f64>,
}

impl ModelDocument {
    fn from_model(m: &EdbnModel) -> Self {
        let names = m.attributes();
        let node = |n: Node| NodeDoc {
            attribute: names[n.attribute].clone(),
            slice: n.slice,
        };
        let decode = |attr: usize, s: Symbol| -> String {
            if s == START {
                START_LABEL.to_string()
            } else {
                m.dictionaries[attr].decode(s).to_string()
            }
        };
        let dictionaries = names
            .iter()
            .zip(&m.dictionaries)
            .map(|(n, d)| (n.clone(), d.values().to_vec()))
            .collect();
        let graph = GraphDoc {
            attributes: names.to_vec(),
            fd_edges: m
                .graph
                .fd_edges
                .iter()
                .map(|e| FdEdgeDoc {
                    antecedent: node(e.antecedent),
                    consequent: names[e.consequent].clone(),
                })
                .collect(),
            cd_edges: m
                .graph
                .cd_edges
                .iter()
                .map(|e| CdEdgeDoc {
                    parents: e.parents.iter().map(|&p| node(p)).collect(),
                    target: names[e.target].clone(),
                })
                .collect(),
        };
        let cpts = m
            .cpts
            .iter()
            .zip(&m.rates.cpt_new_relation)
            .map(|(c, &rate)| {
                let mut keys: Vec<&Vec<Symbol>> = c.rows.keys().collect();
                keys.sort();
                let rows = keys
                    .into_iter()
                    .map(|k| {
                        let row = &c.rows[k];
                        let mut probs: Vec<(&Symbol, &f64)> = row.iter().collect();
                        probs.sort_by_key(|(v, _)| **v);
                        CptRowDoc {
                            parents: k
                                .iter()
                                .zip(&c.parents)
                                .map(|(&s, p)| decode(p.attribute, s))
                                .collect(),
                            probabilities: probs
                                .into_iter()
                                .map(|(&v, &p)| (decode(c.target, v), p))
                                .collect(),
                        }
                    })
                    .collect();
                CptDoc {
                    target: names[c.target].clone(),
                    parents: c.parents.iter().map(|&p| node(p)).collect(),
                    new_relation_rate: rate,
                    rows,
                }
            })
            .collect();
        let fdmaps = m
            .fdmaps
            .iter()
            .zip(&m.rates.fd_new_relation)
            .map(|(f, &rate)| {
                let mut keys: Vec<&Symbol> = f.mapping.keys().collect();
                keys.sort();
                FdMapDoc {
                    antecedent: node(f.edge.antecedent),
                    consequent: names[f.edge.consequent].clone(),
                    new_relation_rate: rate,
                    mapping: keys
                        .into_iter()
                        .map(|&k| {
                            (
                                decode(f.edge.antecedent.attribute, k),
                                f.mapping[&k]
                                    .iter()
                                    .map(|&v| decode(f.edge.consequent, v))
                                    .collect(),
                            )
                        })
                        .collect(),
                }
            })
            .collect();
        let mut new_relation_rate = BTreeMap::new();
        for (c, &r) in m.cpts.iter().zip(&m.rates.cpt_new_relation) {
            new_relation_rate.insert(format!("cpt:{}", names[c.target]), r);
        }
        for (f, &r) in m.fdmaps.iter().zip(&m.rates.fd_new_relation) {
            new_relation_rate.insert(format!("fd:{}", m.graph.fd_label(&f.edge)), r);
        }
        Self {
            version: FORMAT_VERSION,
            schema: SchemaDoc {
                schema: m.schema.clone(),
                dictionaries,
            },
            graph,
            cpts,
            fdmaps,
            rates: RatesDoc {
                new_value_rate: names.iter().cloned().zip(m.rates.new_value.iter().copied()).collect(),
                new_relation_rate,
            },
            metadata: m.metadata.clone(),
        }
    }

    fn into_model(self) -> Result<EdbnModel> {
        let names = self.graph.attributes;
        if names != self.schema.schema.value_attribute_names() {
            return Err(Error::Integrity("graph attributes do not match schema".into()));
        }
        let index: HashMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
        let attr = |name: &str| {
            index
                .get(name)
                .copied()
                .ok_or_else(|| Error::Integrity(format!("unknown attribute '{name}'")))
        };
        let node = |n: &NodeDoc| -> Result<Node> {
            Ok(Node {
                attribute: attr(&n.attribute)?,
                slice: n.slice,
            })
        };
        let mut dictionaries = Vec::with_capacity(names.len());
        for n in &names {
            let values = self
                .schema
                .dictionaries
                .get(n)
                .cloned()
                .ok_or_else(|| Error::Integrity(format!("missing dictionary for '{n}'")))?;
            dictionaries.push(Dictionary::from_values(values)?);
        }
        let encode = |a: usize, s: &str, allow_start: bool| -> Result<Symbol> {
            if allow_start && s == START_LABEL {
                return Ok(START);
            }
            dictionaries[a]
                .get(s)
                .ok_or_else(|| Error::Integrity(format!("value '{s}' not in dictionary of '{}'", names[a])))
        };

        let graph = DependencyGraph {
            attributes: names.clone(),
            fd_edges: self
                .graph
                .fd_edges
                .iter()
                .map(|e| {
                    Ok(FdEdge {
                        antecedent: node(&e.antecedent)?,
                        consequent: attr(&e.consequent)?,
                    })
                })
                .collect::<Result<_>>()?,
            cd_edges: self
                .graph
                .cd_edges
                .iter()
                .map(|e| {
                    Ok(CdEdge {
                        parents: e.parents.iter().map(node).collect::<Result<_>>()?,
                        target: attr(&e.target)?,
                    })
                })
                .collect::<Result<_>>()?,
        };
        graph.validate(self.metadata.config.k_max)?;

        let mut cpts = Vec::new();
        let mut cpt_new_relation = Vec::new();
        for c in &self.cpts {
            let target = attr(&c.target)?;
            let parents: Vec<Node> = c.parents.iter().map(node).collect::<Result<_>>()?;
            let declared = graph.cd_parents_of(target).map(|e| &e.parents);
            if declared != Some(&parents) {
                return Err(Error::Integrity(format!("cpt for '{}' does not match graph", c.target)));
            }
            let mut rows = HashMap::new();
            for r in &c.rows {
                if r.parents.len() != parents.len() {
                    return Err(Error::Integrity(format!("malformed cpt row for '{}'", c.target)));
                }
                let key = r
                    .parents
                    .iter()
                    .zip(&parents)
                    .map(|(s, p)| encode(p.attribute, s, p.slice == Slice::Previous))
                    .collect::<Result<Vec<_>>>()?;
                let probs = r
                    .probabilities
                    .iter()
                    .map(|(v, p)| Ok((encode(target, v, false)?, *p)))
                    .collect::<Result<HashMap<_, _>>>()?;
                let sum: f64 = probs.values().sum();
                if (sum - 1.0).abs() > 1e-9 || probs.values().any(|&p| !(p > 0.0 && p <= 1.0)) {
                    return Err(Error::Integrity(format!(
                        "cpt row for '{}' is not a distribution",
                        c.target
                    )));
                }
                rows.insert(key, probs);
            }
            check_rate(c.new_relation_rate)?;
            cpt_new_relation.push(c.new_relation_rate);
            cpts.push(Cpt {
                target,
                parents,
                rows,
            });
        }
        if cpts.len() != graph.cd_edges.len() {
            return Err(Error::Integrity("cpt count does not match graph".into()));
        }

        let mut fdmaps = Vec::new();
        let mut fd_new_relation = Vec::new();
        for f in &self.fdmaps {
            let edge = FdEdge {
                antecedent: node(&f.antecedent)?,
                consequent: attr(&f.consequent)?,
            };
            if !graph.fd_edges.contains(&edge) {
                return Err(Error::Integrity(format!(
                    "fd map {} not in graph",
                    graph.fd_label(&edge)
                )));
            }
            let mut mapping = HashMap::new();
            for (k, vs) in &f.mapping {
                let mut set = vs
                    .iter()
                    .map(|v| encode(edge.consequent, v, false))
                    .collect::<Result<Vec<_>>>()?;
                set.sort_unstable();
                set.dedup();
                mapping.insert(encode(edge.antecedent.attribute, k, false)?, set);
            }
            check_rate(f.new_relation_rate)?;
            fd_new_relation.push(f.new_relation_rate);
            fdmaps.push(FdMap { edge, mapping });
        }
        if fdmaps.len() != graph.fd_edges.len() {
            return Err(Error::Integrity("fd map count does not match graph".into()));
        }

        let new_value = names
            .iter()
            .map(|n| {
                let r = *self
                    .rates
                    .new_value_rate
                    .get(n)
                    .ok_or_else(|| Error::Integrity(format!("missing new-value rate for '{n}'")))?;
                check_rate(r)?;
                Ok(r)
            })
            .collect::<Result<_>>()?;

        Ok(EdbnModel::assemble(
            self.schema.schema,
            dictionaries,
            graph,
            cpts,
            fdmaps,
            Rates {
                new_value,
                cpt_new_relation,
                fd_new_relation,
            },
            self.metadata,
        ))
    }
}

fn check_rate(r: f64) -> Result<()> {
    if r > 0.0 && r <= 1.0 {
        Ok(())
    } else {
        Err(Error::Integrity(format!("rate {r} outside (0, 1]")))
    }
}
