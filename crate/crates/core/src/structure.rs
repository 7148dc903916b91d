//! Dependency-structure discovery over two time slices: functional
//! dependencies by uniqueness ratio, conditional dependencies by greedy
//! penalized log-likelihood search.

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eventlog::{EventLog, Symbol};

/// Previous-slice value seen by the first event of every trace.
pub const START: Symbol = Symbol::MAX;
pub const START_LABEL: &str = "⟨start⟩";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Slice {
    Previous,
    Current,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Node {
    pub attribute: usize,
    pub slice: Slice,
}

impl Node {
    pub fn current(attribute: usize) -> Self {
        Self {
            attribute,
            slice: Slice::Current,
        }
    }

    pub fn previous(attribute: usize) -> Self {
        Self {
            attribute,
            slice: Slice::Previous,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FdEdge {
    pub antecedent: Node,
    pub consequent: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CdEdge {
    pub parents: Vec<Node>,
    pub target: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureConfig {
    pub fd_threshold: f64,
    pub cardinality_guard: f64,
    pub k_max: usize,
    pub penalized: bool,
}

impl Default for StructureConfig {
    fn default() -> Self {
        Self {
            fd_threshold: 0.99,
            cardinality_guard: 0.95,
            k_max: 2,
            penalized: true,
        }
    }
}

impl StructureConfig {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |x: f64| x > 0.0 && x <= 1.0;
        if !in_unit(self.fd_threshold) {
            return Err(Error::InvalidArgument(format!(
                "fd threshold {} outside (0, 1]",
                self.fd_threshold
            )));
        }
        if !in_unit(self.cardinality_guard) {
            return Err(Error::InvalidArgument(format!(
                "cardinality guard {} outside (0, 1]",
                self.cardinality_guard
            )));
        }
        if self.k_max == 0 {
            return Err(Error::InvalidArgument("k_max must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DependencyGraph {
    pub attributes: Vec<String>,
    pub fd_edges: Vec<FdEdge>,
    pub cd_edges: Vec<CdEdge>,
}

impl DependencyGraph {
    pub fn node_label(&self, node: Node) -> String {
        let name = &self.attributes[node.attribute];
        match node.slice {
            Slice::Current => name.clone(),
            Slice::Previous => format!("{name}@prev"),
        }
    }

    pub fn fd_label(&self, edge: &FdEdge) -> String {
        format!(
            "{} -> {}",
            self.node_label(edge.antecedent),
            self.attributes[edge.consequent]
        )
    }

    pub fn cd_parents_of(&self, target: usize) -> Option<&CdEdge> {
        self.cd_edges.iter().find(|e| e.target == target)
    }

    /// Current-slice adjacency (source -> targets) over both edge kinds.
    fn current_adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.attributes.len()];
        for e in &self.fd_edges {
            if e.antecedent.slice == Slice::Current {
                adj[e.antecedent.attribute].push(e.consequent);
            }
        }
        for e in &self.cd_edges {
            for p in &e.parents {
                if p.slice == Slice::Current {
                    adj[p.attribute].push(e.target);
                }
            }
        }
        adj
    }

    /// Kahn's algorithm over the current slice; `None` on a cycle.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let adj = self.current_adjacency();
        let mut indeg = vec![0usize; adj.len()];
        for targets in &adj {
            for &t in targets {
                indeg[t] += 1;
            }
        }
        let mut ready: Vec<usize> = (0..adj.len()).filter(|&i| indeg[i] == 0).collect();
        let mut order = Vec::with_capacity(adj.len());
        while let Some(n) = ready.pop() {
            order.push(n);
            for &t in &adj[n] {
                indeg[t] -= 1;
                if indeg[t] == 0 {
                    ready.push(t);
                }
            }
        }
        (order.len() == adj.len()).then_some(order)
    }

    pub fn validate(&self, k_max: usize) -> Result<()> {
        let n = self.attributes.len();
        let in_range = |node: Node| node.attribute < n;
        for e in &self.fd_edges {
            if !in_range(e.antecedent) || e.consequent >= n {
                return Err(Error::Integrity("fd edge references unknown attribute".into()));
            }
            if e.antecedent == Node::current(e.consequent) {
                return Err(Error::Integrity("fd self-loop in current slice".into()));
            }
        }
        let mut targets = HashSet::new();
        for e in &self.cd_edges {
            if e.target >= n || !e.parents.iter().all(|&p| in_range(p)) {
                return Err(Error::Integrity("cd edge references unknown attribute".into()));
            }
            if !targets.insert(e.target) {
                return Err(Error::Integrity(format!(
                    "attribute '{}' has two parent sets",
                    self.attributes[e.target]
                )));
            }
            if e.parents.len() > k_max {
                return Err(Error::Integrity(format!(
                    "attribute '{}' has {} parents (max {k_max})",
                    self.attributes[e.target],
                    e.parents.len()
                )));
            }
            for &p in &e.parents {
                if p == Node::current(e.target) {
                    return Err(Error::Integrity("cd self-loop in current slice".into()));
                }
                let fd = FdEdge {
                    antecedent: p,
                    consequent: e.target,
                };
                if self.fd_edges.contains(&fd) {
                    return Err(Error::Integrity(format!(
                        "{} is both a functional and a conditional dependency",
                        self.fd_label(&fd)
                    )));
                }
            }
        }
        if self.topological_order().is_none() {
            return Err(Error::Integrity("current-slice dependency cycle".into()));
        }
        Ok(())
    }
}

/// Column-major view of a log: current and previous-slice symbols per event.
#[derive(Debug)]
pub(crate) struct SliceTable {
    pub current: Vec<Vec<Symbol>>,
    pub previous: Vec<Vec<Symbol>>,
    pub first: Vec<bool>,
}

impl SliceTable {
    pub fn new(log: &EventLog) -> Self {
        let n_attr = log.attribute_names().len();
        let n = log.event_count();
        let mut current = vec![Vec::with_capacity(n); n_attr];
        let mut previous = vec![Vec::with_capacity(n); n_attr];
        let mut first = Vec::with_capacity(n);
        for t in log.traces() {
            for (i, e) in t.events.iter().enumerate() {
                first.push(i == 0);
                for a in 0..n_attr {
                    current[a].push(e.values[a]);
                    previous[a].push(if i == 0 { START } else { t.events[i - 1].values[a] });
                }
            }
        }
        Self {
            current,
            previous,
            first,
        }
    }

    pub fn len(&self) -> usize {
        self.first.len()
    }

    pub fn column(&self, node: Node) -> &[Symbol] {
        match node.slice {
            Slice::Current => &self.current[node.attribute],
            Slice::Previous => &self.previous[node.attribute],
        }
    }
}

fn distinct(values: impl Iterator<Item = Symbol>) -> usize {
    values.collect::<HashSet<_>>().len()
}

fn distinct_pairs(pairs: impl Iterator<Item = (Symbol, Symbol)>) -> usize {
    let mut keys: Vec<u64> = pairs.map(|(a, b)| (u64::from(a) << 32) | u64::from(b)).collect();
    keys.sort_unstable();
    keys.dedup();
    keys.len()
}

fn reaches(adj: &[Vec<usize>], from: usize, to: usize) -> bool {
    let mut stack = vec![from];
    let mut seen = vec![false; adj.len()];
    while let Some(n) = stack.pop() {
        if n == to {
            return true;
        }
        if std::mem::replace(&mut seen[n], true) {
            continue;
        }
        stack.extend(adj[n].iter().copied());
    }
    false
}

/// Uniqueness ratio `|distinct A| / |distinct (A, B)|` for every candidate
/// edge that passes the cardinality guard.
pub fn fd_candidates(train: &EventLog, config: &StructureConfig) -> Vec<(FdEdge, f64)> {
    let table = SliceTable::new(train);
    fd_candidates_in(&table, config)
}

fn fd_candidates_in(table: &SliceTable, config: &StructureConfig) -> Vec<(FdEdge, f64)> {
    let n_attr = table.current.len();
    let n = table.len();
    let eligible: Vec<bool> = (0..n_attr)
        .map(|a| distinct(table.current[a].iter().copied()) as f64 <= config.cardinality_guard * n as f64)
        .collect();
    let inner: Vec<usize> = (0..n).filter(|&i| !table.first[i]).collect();
    let mut out = Vec::new();
    for a in (0..n_attr).filter(|&a| eligible[a]) {
        let cur_a = &table.current[a];
        let prev_a = &table.previous[a];
        let d_cur = distinct(cur_a.iter().copied());
        let d_prev = distinct(inner.iter().map(|&i| prev_a[i]));
        for b in (0..n_attr).filter(|&b| eligible[b]) {
            let cur_b = &table.current[b];
            if a != b {
                let pairs = distinct_pairs(cur_a.iter().copied().zip(cur_b.iter().copied()));
                out.push((
                    FdEdge {
                        antecedent: Node::current(a),
                        consequent: b,
                    },
                    d_cur as f64 / pairs as f64,
                ));
            }
            if !inner.is_empty() {
                let pairs = distinct_pairs(inner.iter().map(|&i| (prev_a[i], cur_b[i])));
                out.push((
                    FdEdge {
                        antecedent: Node::previous(a),
                        consequent: b,
                    },
                    d_prev as f64 / pairs as f64,
                ));
            }
        }
    }
    out
}

/// Functional dependencies whose uniqueness ratio reaches the threshold.
///
/// Current-slice candidates are admitted strongest first (ratio, then
/// attribute names) and skipped when they would close a cycle, so mutual
/// dependencies keep a single direction.
pub fn discover_fds(train: &EventLog, config: &StructureConfig) -> Vec<FdEdge> {
    let table = SliceTable::new(train);
    discover_fds_in(&table, train.attribute_names(), config)
}

fn discover_fds_in(table: &SliceTable, names: &[String], config: &StructureConfig) -> Vec<FdEdge> {
    if table.len() == 0 {
        return Vec::new();
    }
    let mut accepted: Vec<(FdEdge, f64)> = fd_candidates_in(table, config)
        .into_iter()
        .filter(|(_, u)| *u >= config.fd_threshold)
        .collect();
    accepted.sort_by(|(x, ux), (y, uy)| {
        uy.total_cmp(ux)
            .then_with(|| x.antecedent.slice.cmp(&y.antecedent.slice))
            .then_with(|| names[x.antecedent.attribute].cmp(&names[y.antecedent.attribute]))
            .then_with(|| names[x.consequent].cmp(&names[y.consequent]))
    });
    let mut adj = vec![Vec::new(); names.len()];
    let mut out = Vec::new();
    for (edge, _) in accepted {
        if edge.antecedent.slice == Slice::Current {
            let (s, t) = (edge.antecedent.attribute, edge.consequent);
            if reaches(&adj, t, s) {
                continue;
            }
            adj[s].push(t);
        }
        out.push(edge);
    }
    out.sort_by_key(|e| (e.consequent, e.antecedent.slice, e.antecedent.attribute));
    out
}

/// Parent-configuration ids for the events, refined one parent at a time.
struct Configs {
    ids: Vec<u32>,
}

impl Configs {
    fn empty(n: usize) -> Self {
        Self {
            ids: vec![0; n],
        }
    }

    fn refine(&self, column: &[Symbol]) -> Self {
        let mut map: HashMap<u64, u32> = HashMap::new();
        let ids = self
            .ids
            .iter()
            .zip(column)
            .map(|(&id, &v)| {
                let key = (u64::from(id) << 32) | u64::from(v);
                let next = map.len() as u32;
                *map.entry(key).or_insert(next)
            })
            .collect();
        Self { ids }
    }
}

/// `Σ count · ln P(child | parents) − #free parameters`, with the parameter
/// count taken over observed parent configurations.
pub(crate) fn family_score(configs: &[u32], child: &[Symbol], child_card: usize, penalized: bool) -> f64 {
    let mut joint: HashMap<u64, u32> = HashMap::new();
    let mut marg: HashMap<u32, u32> = HashMap::new();
    for (&c, &v) in configs.iter().zip(child) {
        *joint.entry((u64::from(c) << 32) | u64::from(v)).or_insert(0) += 1;
        *marg.entry(c).or_insert(0) += 1;
    }
    let mut entries: Vec<(u64, u32)> = joint.into_iter().collect();
    entries.sort_unstable();
    let ll: f64 = entries
        .iter()
        .map(|&(key, n)| {
            let total = marg[&((key >> 32) as u32)];
            f64::from(n) * (f64::from(n) / f64::from(total)).ln()
        })
        .sum();
    if penalized {
        ll - (marg.len() * child_card.saturating_sub(1)) as f64
    } else {
        ll
    }
}

/// Greedy parent search for every attribute, in attribute order.
pub fn discover_cds(train: &EventLog, fds: &[FdEdge], config: &StructureConfig) -> Vec<CdEdge> {
    let table = SliceTable::new(train);
    discover_cds_in(&table, train.attribute_names(), fds, config)
}

fn discover_cds_in(
    table: &SliceTable,
    names: &[String],
    fds: &[FdEdge],
    config: &StructureConfig,
) -> Vec<CdEdge> {
    let n_attr = names.len();
    let n = table.len();
    if n == 0 {
        return Vec::new();
    }
    let mut adj = vec![Vec::new(); n_attr];
    for e in fds {
        if e.antecedent.slice == Slice::Current {
            adj[e.antecedent.attribute].push(e.consequent);
        }
    }
    let fd_set: HashSet<&FdEdge> = fds.iter().collect();
    // Previous slice first, then attribute name.
    let mut candidates: Vec<Node> = (0..n_attr)
        .map(Node::previous)
        .chain((0..n_attr).map(Node::current))
        .collect();
    candidates.sort_by(|x, y| x.slice.cmp(&y.slice).then_with(|| names[x.attribute].cmp(&names[y.attribute])));

    let mut out = Vec::new();
    for target in 0..n_attr {
        let child = &table.current[target];
        let child_card = distinct(child.iter().copied());
        let mut parents: Vec<Node> = Vec::new();
        let mut configs = Configs::empty(n);
        let mut score = family_score(&configs.ids, child, child_card, config.penalized);
        while parents.len() < config.k_max {
            let mut best: Option<(Node, f64, Configs)> = None;
            for &cand in &candidates {
                if cand == Node::current(target) || parents.contains(&cand) {
                    continue;
                }
                if fd_set.contains(&FdEdge {
                    antecedent: cand,
                    consequent: target,
                }) {
                    continue;
                }
                if cand.slice == Slice::Current && reaches(&adj, target, cand.attribute) {
                    continue;
                }
                let refined = configs.refine(table.column(cand));
                let s = family_score(&refined.ids, child, child_card, config.penalized);
                let better = match &best {
                    None => s > score,
                    Some((_, b, _)) => s > *b,
                };
                if better {
                    best = Some((cand, s, refined));
                }
            }
            match best {
                Some((node, s, refined)) => {
                    if node.slice == Slice::Current {
                        adj[node.attribute].push(target);
                    }
                    parents.push(node);
                    configs = refined;
                    score = s;
                }
                None => break,
            }
        }
        if !parents.is_empty() {
            out.push(CdEdge { parents, target });
        }
    }
    out
}

/// Full structure: functional dependencies, then conditional ones.
pub fn build_structure(train: &EventLog, config: &StructureConfig) -> Result<DependencyGraph> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyLog);
    }
    let table = SliceTable::new(train);
    let names = train.attribute_names();
    let fd_edges = discover_fds_in(&table, names, config);
    let cd_edges = discover_cds_in(&table, names, &fd_edges, config);
    let graph = DependencyGraph {
        attributes: names.to_vec(),
        fd_edges,
        cd_edges,
    };
    graph.validate(config.k_max)?;
    Ok(graph)
}

impl fmt::Display for DependencyGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.fd_edges {
            writeln!(f, "FD {}", self.fd_label(e))?;
        }
        for e in &self.cd_edges {
            let parents: Vec<String> = e.parents.iter().map(|&p| self.node_label(p)).collect();
            writeln!(f, "CD {} -> {}", parents.join(", "), self.attributes[e.target])?;
        }
        Ok(())
    }
}
