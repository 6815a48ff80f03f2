//! Stage-wise cascading failures and the influence graph.

use serde::Serialize;

use crate::dcpf::{self, FlowState};
use crate::error::{Error, Result};
use crate::factors::PtdfMatrix;
use crate::graph_algos::{self, BlockDecomposition};
use crate::net_model::{Injections, Network};

/// Lines removed in one stage and the flows that result.
///
/// `flow` is `None` when the removal disconnected the grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CascadeStage {
    pub tripped: Vec<usize>,
    pub flow: Option<FlowState>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CascadeStatus {
    /// Stage 0 left every line within capacity.
    NoInitialOverload,
    /// Later stages ran and the flows settled within capacity.
    Converged,
    /// The trips of `stage` disconnected the grid; the simulation halts.
    Islanded { stage: usize },
    /// Overloads remained after the stage limit.
    MaxStages,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CascadeTrace {
    pub initial_outage: Vec<usize>,
    pub stages: Vec<CascadeStage>,
    pub status: CascadeStatus,
}

impl CascadeTrace {
    /// Lines removed up to and including the last stage.
    pub fn cumulative_outage(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self.stages.iter().flat_map(|s| s.tripped.iter().copied()).collect();
        all.sort_unstable();
        all
    }
}

fn overloaded(network: &Network, flow: &FlowState, removed: &[bool]) -> Vec<usize> {
    network
        .edges()
        .iter()
        .enumerate()
        .filter(|&(l, e)| !removed[l] && flow.flows[l].abs() > e.capacity)
        .map(|(l, _)| l)
        .collect()
}

/// Runs the cascade started by `initial_outage` (line indices).
///
/// Each stage removes every line whose flow magnitude strictly exceeded
/// its capacity in the previous stage. `max_stages` bounds the number of
/// stages after stage 0 and defaults to the line count.
pub fn run_cascade(
    network: &Network,
    p: &Injections,
    initial_outage: &[usize],
    max_stages: Option<usize>,
) -> Result<CascadeTrace> {
    graph_algos::check_edges(network, initial_outage)?;
    if p.values().len() != network.n() {
        return Err(Error::InjectionLength {
            expected: network.n(),
            got: p.values().len(),
        });
    }
    let mut initial = initial_outage.to_vec();
    initial.sort_unstable();
    initial.dedup();
    if initial.is_empty() {
        return Err(Error::InvalidOutage("initial outage is empty".into()));
    }
    if initial.len() != initial_outage.len() {
        return Err(Error::InvalidOutage("repeated line".into()));
    }
    let max_stages = max_stages.unwrap_or(network.m());

    let mut removed = vec![false; network.m()];
    let mut trace = CascadeTrace {
        initial_outage: initial.iter().map(|l| l + 1).collect(),
        stages: Vec::new(),
        status: CascadeStatus::NoInitialOverload,
    };
    let mut trip = initial;
    loop {
        let stage = trace.stages.len();
        for &l in &trip {
            removed[l] = true;
        }
        let tripped = trip.iter().map(|l| l + 1).collect();
        if !graph_algos::surviving_connected(network, &removed) {
            trace.stages.push(CascadeStage { tripped, flow: None });
            trace.status = CascadeStatus::Islanded { stage };
            return Ok(trace);
        }
        let bundle = dcpf::build_surviving(network, &removed)?;
        let flow = dcpf::solve_surviving(&bundle, network, p, &removed);
        trip = overloaded(network, &flow, &removed);
        trace.stages.push(CascadeStage {
            tripped,
            flow: Some(flow),
        });
        if trip.is_empty() {
            trace.status = if stage == 0 {
                CascadeStatus::NoInitialOverload
            } else {
                CascadeStatus::Converged
            };
            return Ok(trace);
        }
        if stage >= max_stages {
            trace.status = CascadeStatus::MaxStages;
            return Err(Error::MaxStages(Box::new(trace)));
        }
    }
}

/// An undirected influence edge between two lines.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InfluencePair {
    pub a: usize,
    pub b: usize,
    /// Largest `|K|` over the directions in which an outage is defined.
    pub weight: f64,
}

/// Pairs `{e, ê}` with `e` a non-bridge and `|K_{ê e}| ≥ threshold`.
///
/// Factors below `1e-9` times the largest factor of their column count as
/// zero, so a zero threshold does not pick up rounding noise.
pub fn influence_graph(ptdf: &PtdfMatrix, decomposition: &BlockDecomposition, threshold: f64) -> Vec<InfluencePair> {
    assert!(threshold >= 0.0, "threshold must be nonnegative");
    let m = ptdf.m();
    let mut weight = vec![vec![None::<f64>; m]; m];
    for e in (0..m).filter(|&e| !decomposition.is_bridge(e)) {
        let denom = 1.0 - ptdf.get(e, e);
        let col: Vec<f64> = (0..m).map(|l| if l == e { 0.0 } else { ptdf.get(l, e) / denom }).collect();
        let floor = 1e-9 * col.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
        for (l, k) in col.iter().enumerate() {
            let k = k.abs();
            if l != e && k >= threshold && k > floor {
                let (a, b) = (l.min(e), l.max(e));
                let w = weight[a][b].get_or_insert(0.0);
                *w = w.max(k);
            }
        }
    }
    let mut pairs = Vec::new();
    for (a, row) in weight.iter().enumerate() {
        for (b, w) in row.iter().enumerate() {
            if let Some(w) = w {
                pairs.push(InfluencePair {
                    a: a + 1,
                    b: b + 1,
                    weight: *w,
                });
            }
        }
    }
    pairs
}

/// Graphviz rendering of an influence graph; nodes are line ids.
pub fn influence_dot(pairs: &[InfluencePair]) -> String {
    let mut out = String::from("graph influence {\n");
    for p in pairs {
        out.push_str(&format!("  {} -- {} [weight={}];\n", p.a, p.b, p.weight));
    }
    out.push_str("}\n");
    out
}
