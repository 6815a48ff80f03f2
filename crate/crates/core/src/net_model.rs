//! Network data model, document ingestion and validation.
//!
//! Nodes carry external integer ids; internally every node and line is
//! addressed by its 0-based position. Line `l` of a [`Network`] is the
//! `l`-th edge of the source document and has external id `l + 1`.
//! Susceptances and capacities are treated as per-unit quantities on a
//! common base; no unit conversion is performed.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dsu;
use crate::error::{Error, Result};

/// A transmission line. `source` and `target` are node indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub id: usize,
    pub source: usize,
    pub target: usize,
    pub susceptance: f64,
    /// Thermal capacity; `f64::INFINITY` when the line never trips.
    pub capacity: f64,
}

impl Edge {
    pub fn endpoints(&self) -> (usize, usize) {
        (self.source, self.target)
    }
}

/// A validated, connected, simple transmission network.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    node_ids: Vec<u32>,
    edges: Vec<Edge>,
    reference: usize,
}

impl Network {
    /// Builds a network from node ids and `(from, to, susceptance, capacity)`
    /// lines given by node id. The reference defaults to the highest node id.
    pub fn new(
        node_ids: Vec<u32>,
        lines: &[(u32, u32, f64, f64)],
        reference: Option<u32>,
    ) -> Result<Self> {
        let raw = RawNetwork {
            nodes: node_ids,
            reference,
            edges: lines
                .iter()
                .map(|&(from, to, b, cap)| RawEdge {
                    from,
                    to,
                    b,
                    cap: Capacity::from_f64(cap),
                })
                .collect(),
            injections: None,
        };
        raw.into_network()
    }

    /// Network on nodes `1..=n` with infinite capacities.
    pub fn from_lines(n: u32, lines: &[(u32, u32, f64)]) -> Result<Self> {
        let lines: Vec<_> = lines
            .iter()
            .map(|&(a, b, s)| (a, b, s, f64::INFINITY))
            .collect();
        Self::new((1..=n).collect(), &lines, None)
    }

    pub fn n(&self) -> usize {
        self.node_ids.len()
    }

    pub fn m(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, l: usize) -> &Edge {
        &self.edges[l]
    }

    pub fn node_ids(&self) -> &[u32] {
        &self.node_ids
    }

    pub fn node_id(&self, i: usize) -> u32 {
        self.node_ids[i]
    }

    pub fn node_index(&self, id: u32) -> Option<usize> {
        self.node_ids.iter().position(|&x| x == id)
    }

    /// Index of the line with external id `id`.
    pub fn edge_index(&self, id: usize) -> Option<usize> {
        (1..=self.m()).contains(&id).then(|| id - 1)
    }

    /// Converts external line ids to indices.
    pub fn edge_indices(&self, ids: &[usize]) -> Result<Vec<usize>> {
        ids.iter()
            .map(|&id| self.edge_index(id).ok_or(Error::UnknownEdge(id)))
            .collect()
    }

    /// Index of the reference (slack) node, whose angle is fixed at zero.
    pub fn reference(&self) -> usize {
        self.reference
    }

    pub fn susceptances(&self) -> Vec<f64> {
        self.edges.iter().map(|e| e.susceptance).collect()
    }

    pub fn with_reference(&self, id: u32) -> Result<Self> {
        let idx = self.node_index(id).ok_or(Error::UnknownNode(id))?;
        Ok(Self {
            reference: idx,
            ..self.clone()
        })
    }

    /// Same topology with replaced susceptances.
    pub fn with_susceptances(&self, b: &[f64]) -> Result<Self> {
        assert_eq!(b.len(), self.m(), "susceptance vector length");
        let mut out = self.clone();
        for (edge, &value) in out.edges.iter_mut().zip(b) {
            if !(value > 0.0 && value.is_finite()) {
                let mut report = ValidationReport::default();
                report.findings.push(Finding::NonpositiveSusceptance {
                    edge: edge.id,
                    value,
                });
                return Err(Error::Validation(report));
            }
            edge.susceptance = value;
        }
        Ok(out)
    }

    pub fn with_capacities(&self, caps: &[f64]) -> Result<Self> {
        assert_eq!(caps.len(), self.m(), "capacity vector length");
        let mut out = self.clone();
        for (edge, &value) in out.edges.iter_mut().zip(caps) {
            if value.is_nan() || value <= 0.0 {
                let mut report = ValidationReport::default();
                report.findings.push(Finding::NonpositiveCapacity {
                    edge: edge.id,
                    value,
                });
                return Err(Error::Validation(report));
            }
            edge.capacity = value;
        }
        Ok(out)
    }

    /// Converts back to the document representation.
    pub fn to_raw(&self, injections: Option<&Injections>) -> RawNetwork {
        RawNetwork {
            nodes: self.node_ids.clone(),
            reference: Some(self.node_ids[self.reference]),
            edges: self
                .edges
                .iter()
                .map(|e| RawEdge {
                    from: self.node_ids[e.source],
                    to: self.node_ids[e.target],
                    b: e.susceptance,
                    cap: Capacity::from_f64(e.capacity),
                })
                .collect(),
            injections: injections.map(|p| {
                self.node_ids
                    .iter()
                    .zip(p.values())
                    .map(|(id, &v)| (id.to_string(), v))
                    .collect()
            }),
        }
    }
}

/// Nodal real-power injections, one per node index, summing to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Injections(Vec<f64>);

impl Injections {
    pub fn new(network: &Network, values: Vec<f64>) -> Result<Self> {
        if values.len() != network.n() {
            return Err(Error::InjectionLength {
                expected: network.n(),
                got: values.len(),
            });
        }
        let sum: f64 = values.iter().sum();
        let scale = values.iter().fold(1.0_f64, |acc, v| acc.max(v.abs()));
        if sum.abs() > 1e-9 * scale {
            return Err(Error::UnbalancedInjection { sum });
        }
        Ok(Self(values))
    }

    pub fn zeros(network: &Network) -> Self {
        Self(vec![0.0; network.n()])
    }

    /// Unit injection at `source`, unit withdrawal at `target`.
    pub fn transfer(network: &Network, source: usize, target: usize) -> Self {
        let mut p = vec![0.0; network.n()];
        p[source] += 1.0;
        p[target] -= 1.0;
        Self(p)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// Signed node-line incidence matrix, `n × m`.
#[derive(Debug, Clone, PartialEq)]
pub struct IncidenceMatrix(DMatrix<f64>);

impl IncidenceMatrix {
    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }
}

/// `C[i][l] = +1` at the source of line `l`, `-1` at its target.
pub fn incidence_matrix(network: &Network) -> IncidenceMatrix {
    let mut c = DMatrix::zeros(network.n(), network.m());
    for (l, e) in network.edges().iter().enumerate() {
        c[(e.source, l)] = 1.0;
        c[(e.target, l)] = -1.0;
    }
    IncidenceMatrix(c)
}

/// A network paired with the injections its document carried, if any.
#[derive(Debug, Clone)]
pub struct Case {
    pub network: Network,
    pub injections: Option<Injections>,
}

/// Line capacity as it appears in a document: a number or the literal `inf`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Capacity(pub f64);

impl Capacity {
    fn from_f64(v: f64) -> Option<Self> {
        v.is_finite().then_some(Self(v))
    }
}

impl Serialize for Capacity {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_infinite() && self.0 > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Capacity {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Number(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Number(v) => Ok(Capacity(v)),
            Repr::Text(s) => parse_capacity(&s)
                .map(Capacity)
                .ok_or_else(|| serde::de::Error::custom(format!("invalid capacity {s:?}"))),
        }
    }
}

fn parse_capacity(s: &str) -> Option<f64> {
    let t = s.trim();
    if t.eq_ignore_ascii_case("inf") || t.is_empty() {
        Some(f64::INFINITY)
    } else {
        t.parse().ok()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawEdge {
    pub from: u32,
    pub to: u32,
    pub b: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap: Option<Capacity>,
}

/// Unvalidated network document (the canonical JSON schema).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawNetwork {
    pub nodes: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<u32>,
    pub edges: Vec<RawEdge>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub injections: Option<BTreeMap<String, f64>>,
}

impl RawNetwork {
    pub fn into_network(self) -> Result<Network> {
        self.into_case().map(|c| c.network)
    }

    pub fn into_case(self) -> Result<Case> {
        let report = validate(&self);
        if !report.is_empty() {
            return Err(Error::Validation(report));
        }
        let node_ids = self.nodes.clone();
        let index = |id: u32| node_ids.iter().position(|&x| x == id).unwrap();
        let edges = self
            .edges
            .iter()
            .enumerate()
            .map(|(l, e)| Edge {
                id: l + 1,
                source: index(e.from),
                target: index(e.to),
                susceptance: e.b,
                capacity: e.cap.map_or(f64::INFINITY, |c| c.0),
            })
            .collect();
        let reference = match self.reference {
            Some(id) => index(id),
            None => (0..node_ids.len()).max_by_key(|&i| node_ids[i]).unwrap(),
        };
        let network = Network {
            node_ids,
            edges,
            reference,
        };
        let injections = match &self.injections {
            None => None,
            Some(map) => {
                let mut p = vec![0.0; network.n()];
                for (key, &value) in map {
                    let id: u32 = key
                        .trim()
                        .parse()
                        .map_err(|_| Error::Parse(format!("injection key {key:?} is not a node id")))?;
                    let i = network.node_index(id).ok_or(Error::UnknownNode(id))?;
                    p[i] = value;
                }
                Some(Injections::new(&network, p)?)
            }
        };
        Ok(Case {
            network,
            injections,
        })
    }
}

/// A single violated network invariant.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Finding {
    TooFewNodes { count: usize },
    NoEdges,
    DuplicateNode { node: u32 },
    UnknownNode { edge: usize, node: u32 },
    UnknownReference { node: u32 },
    SelfLoop { edge: usize, node: u32 },
    DuplicateEdge { edge: usize, first: usize },
    NonpositiveSusceptance { edge: usize, value: f64 },
    NonpositiveCapacity { edge: usize, value: f64 },
    Disconnected { components: usize },
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Finding::TooFewNodes { count } => write!(f, "network needs at least 2 nodes, got {count}"),
            Finding::NoEdges => write!(f, "network has no edges"),
            Finding::DuplicateNode { node } => write!(f, "duplicate node {node}"),
            Finding::UnknownNode { edge, node } => write!(f, "edge {edge} references unknown node {node}"),
            Finding::UnknownReference { node } => write!(f, "reference node {node} is not in the node list"),
            Finding::SelfLoop { edge, node } => write!(f, "edge {edge} is a self-loop at node {node}"),
            Finding::DuplicateEdge { edge, first } => {
                write!(f, "edge {edge} duplicates edge {first} (graph must be simple)")
            }
            Finding::NonpositiveSusceptance { edge, value } => {
                write!(f, "edge {edge} has nonpositive susceptance {value}")
            }
            Finding::NonpositiveCapacity { edge, value } => {
                write!(f, "edge {edge} has nonpositive capacity {value}")
            }
            Finding::Disconnected { components } => {
                write!(f, "network is disconnected ({components} components)")
            }
        }
    }
}

/// Findings from [`validate`]; empty iff every network invariant holds.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.findings.is_empty()
    }

    pub fn is_disconnected(&self) -> bool {
        self.findings
            .iter()
            .any(|f| matches!(f, Finding::Disconnected { .. }))
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.findings.iter().map(|x| x.to_string()).collect();
        f.write_str(&parts.join("; "))
    }
}

/// Checks connectivity, simplicity and positivity of a network document.
pub fn validate(raw: &RawNetwork) -> ValidationReport {
    let mut findings = Vec::new();
    if raw.nodes.len() < 2 {
        findings.push(Finding::TooFewNodes {
            count: raw.nodes.len(),
        });
    }
    if raw.edges.is_empty() {
        findings.push(Finding::NoEdges);
    }
    let mut seen = HashSet::new();
    for &id in &raw.nodes {
        if !seen.insert(id) {
            findings.push(Finding::DuplicateNode { node: id });
        }
    }
    if let Some(r) = raw.reference {
        if !seen.contains(&r) {
            findings.push(Finding::UnknownReference { node: r });
        }
    }
    let index: BTreeMap<u32, usize> = raw.nodes.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let mut pairs: BTreeMap<(u32, u32), usize> = BTreeMap::new();
    let mut links = Vec::new();
    for (l, e) in raw.edges.iter().enumerate() {
        let id = l + 1;
        let mut endpoints_known = true;
        for node in [e.from, e.to] {
            if !index.contains_key(&node) {
                findings.push(Finding::UnknownNode { edge: id, node });
                endpoints_known = false;
            }
        }
        if e.from == e.to {
            findings.push(Finding::SelfLoop { edge: id, node: e.from });
        } else {
            let key = (e.from.min(e.to), e.from.max(e.to));
            if let Some(&first) = pairs.get(&key) {
                findings.push(Finding::DuplicateEdge { edge: id, first });
            } else {
                pairs.insert(key, id);
            }
            if endpoints_known {
                links.push((index[&e.from], index[&e.to]));
            }
        }
        if !(e.b > 0.0 && e.b.is_finite()) {
            findings.push(Finding::NonpositiveSusceptance { edge: id, value: e.b });
        }
        if let Some(cap) = e.cap {
            if cap.0.is_nan() || cap.0 <= 0.0 {
                findings.push(Finding::NonpositiveCapacity { edge: id, value: cap.0 });
            }
        }
    }
    if !raw.nodes.is_empty() {
        let components = dsu::component_count(raw.nodes.len(), links);
        if components > 1 {
            findings.push(Finding::Disconnected { components });
        }
    }
    ValidationReport { findings }
}

/// Parses the canonical JSON document.
pub fn load_json_str(text: &str) -> Result<Case> {
    let raw: RawNetwork = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    raw.into_case()
}

pub fn to_json_string(network: &Network, injections: Option<&Injections>) -> String {
    serde_json::to_string_pretty(&network.to_raw(injections)).expect("network serializes")
}

#[derive(Debug, Deserialize)]
struct CsvEdge {
    from: u32,
    to: u32,
    b: f64,
    #[serde(default)]
    cap: Option<String>,
}

#[derive(Debug, Deserialize)]
struct CsvInjection {
    node: u32,
    p: f64,
}

/// Parses `edges.csv` (`from,to,b,cap`) and optional `injections.csv`
/// (`node,p`) contents. Nodes are the ids mentioned in either file,
/// sorted ascending.
pub fn load_csv_str(edges: &str, injections: Option<&str>) -> Result<Case> {
    let parse_err = |e: csv::Error| Error::Parse(e.to_string());
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(edges.as_bytes());
    let mut raw_edges = Vec::new();
    let mut nodes = BTreeSet::new();
    for row in rdr.deserialize() {
        let row: CsvEdge = row.map_err(parse_err)?;
        let cap = match row.cap.as_deref() {
            None => None,
            Some(s) => Some(Capacity(
                parse_capacity(s).ok_or_else(|| Error::Parse(format!("invalid capacity {s:?}")))?,
            )),
        };
        nodes.insert(row.from);
        nodes.insert(row.to);
        raw_edges.push(RawEdge {
            from: row.from,
            to: row.to,
            b: row.b,
            cap,
        });
    }
    let injections = match injections {
        None => None,
        Some(text) => {
            let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
            let mut map = BTreeMap::new();
            for row in rdr.deserialize() {
                let row: CsvInjection = row.map_err(parse_err)?;
                nodes.insert(row.node);
                map.insert(row.node.to_string(), row.p);
            }
            Some(map)
        }
    };
    RawNetwork {
        nodes: nodes.into_iter().collect(),
        reference: None,
        edges: raw_edges,
        injections,
    }
    .into_case()
}

/// Loads a network from a `.json` file, an edges `.csv` file (with an
/// optional sibling `injections.csv`), or a directory holding `edges.csv`.
pub fn load_path(path: &Path) -> Result<Case> {
    if path.is_dir() {
        return load_csv_dir(path, &path.join("edges.csv"));
    }
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("csv") => {
            let dir = path.parent().unwrap_or_else(|| Path::new("."));
            load_csv_dir(dir, path)
        }
        _ => load_json_str(&std::fs::read_to_string(path)?),
    }
}

fn load_csv_dir(dir: &Path, edges: &Path) -> Result<Case> {
    let edges_text = std::fs::read_to_string(edges)?;
    let inj_path = dir.join("injections.csv");
    let inj_text = if inj_path.exists() && inj_path != edges {
        Some(std::fs::read_to_string(inj_path)?)
    } else {
        None
    };
    load_csv_str(&edges_text, inj_text.as_deref())
}
