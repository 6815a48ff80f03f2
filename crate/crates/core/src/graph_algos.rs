//! Block (biconnected component) decomposition and cut-set queries.

use serde::Serialize;

use crate::dsu;
use crate::error::{Error, Result};
use crate::net_model::Network;

/// Partition of the lines into blocks.
///
/// Two distinct lines share a block iff some simple cycle contains both.
/// Blocks are numbered in order of their lowest line index.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockDecomposition {
    /// Line indices of each block, ascending.
    pub blocks: Vec<Vec<usize>>,
    /// Lines forming singleton blocks, ascending.
    pub bridges: Vec<usize>,
    /// Node indices belonging to two or more blocks, ascending.
    pub cut_vertices: Vec<usize>,
    /// Block index of every line.
    pub block_of: Vec<usize>,
}

impl BlockDecomposition {
    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_bridge(&self, l: usize) -> bool {
        self.blocks[self.block_of[l]].len() == 1
    }

    pub fn same_block(&self, a: usize, b: usize) -> bool {
        self.block_of[a] == self.block_of[b]
    }

    /// Whether a simple cycle passes through both lines.
    pub fn shares_simple_cycle(&self, l: usize, l_hat: usize) -> bool {
        self.same_block(l, l_hat) && !self.is_bridge(l)
    }
}

/// Linear-time block decomposition (iterative DFS with an edge stack).
pub fn block_decomposition(network: &Network) -> Result<BlockDecomposition> {
    let n = network.n();
    let m = network.m();
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (l, e) in network.edges().iter().enumerate() {
        adj[e.source].push((e.target, l));
        adj[e.target].push((e.source, l));
    }

    const UNSEEN: usize = usize::MAX;
    let mut disc = vec![UNSEEN; n];
    let mut low = vec![0usize; n];
    let mut timer = 0;
    let mut edge_stack: Vec<usize> = Vec::with_capacity(m);
    let mut raw_blocks: Vec<Vec<usize>> = Vec::new();

    // frame: (node, parent edge, next adjacency position)
    let mut stack: Vec<(usize, usize, usize)> = Vec::new();
    disc[0] = timer;
    low[0] = timer;
    timer += 1;
    stack.push((0, UNSEEN, 0));
    while let Some(frame) = stack.last_mut() {
        let (u, parent_edge, pos) = *frame;
        if pos < adj[u].len() {
            frame.2 += 1;
            let (v, l) = adj[u][pos];
            if l == parent_edge {
                continue;
            }
            if disc[v] == UNSEEN {
                edge_stack.push(l);
                disc[v] = timer;
                low[v] = timer;
                timer += 1;
                stack.push((v, l, 0));
            } else if disc[v] < disc[u] {
                edge_stack.push(l);
                low[u] = low[u].min(disc[v]);
            }
        } else {
            stack.pop();
            if let Some(&(p, _, _)) = stack.last() {
                low[p] = low[p].min(low[u]);
                if low[u] >= disc[p] {
                    let mut block = Vec::new();
                    while let Some(l) = edge_stack.pop() {
                        block.push(l);
                        if l == parent_edge {
                            break;
                        }
                    }
                    raw_blocks.push(block);
                }
            }
        }
    }
    if disc.contains(&UNSEEN) {
        return Err(Error::Disconnected);
    }

    for b in &mut raw_blocks {
        b.sort_unstable();
    }
    raw_blocks.sort_by_key(|b| b[0]);
    let mut block_of = vec![0; m];
    for (k, b) in raw_blocks.iter().enumerate() {
        for &l in b {
            block_of[l] = k;
        }
    }
    let bridges: Vec<usize> = raw_blocks
        .iter()
        .filter(|b| b.len() == 1)
        .map(|b| b[0])
        .collect();
    let mut blocks_at_node: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (k, b) in raw_blocks.iter().enumerate() {
        for &l in b {
            let e = network.edge(l);
            for x in [e.source, e.target] {
                if blocks_at_node[x].last() != Some(&k) {
                    blocks_at_node[x].push(k);
                }
            }
        }
    }
    let cut_vertices = (0..n)
        .filter(|&x| {
            let mut ks = blocks_at_node[x].clone();
            ks.sort_unstable();
            ks.dedup();
            ks.len() >= 2
        })
        .collect();
    Ok(BlockDecomposition {
        blocks: raw_blocks,
        bridges,
        cut_vertices,
        block_of,
    })
}

pub(crate) fn check_edges(network: &Network, lines: &[usize]) -> Result<()> {
    match lines.iter().find(|&&l| l >= network.m()) {
        Some(&l) => Err(Error::UnknownEdge(l + 1)),
        None => Ok(()),
    }
}

/// Whether removing `outage` (line indices) disconnects the network.
pub fn is_cut_set(network: &Network, outage: &[usize]) -> Result<bool> {
    check_edges(network, outage)?;
    let mut removed = vec![false; network.m()];
    for &l in outage {
        removed[l] = true;
    }
    Ok(!surviving_connected(network, &removed))
}

/// Connectivity of the graph with the flagged lines removed.
pub(crate) fn surviving_connected(network: &Network, removed: &[bool]) -> bool {
    let links = network
        .edges()
        .iter()
        .zip(removed)
        .filter(|(_, &r)| !r)
        .map(|(e, _)| e.endpoints());
    dsu::component_count(network.n(), links) == 1
}

/// Whether some simple cycle contains both lines.
pub fn shares_simple_cycle(network: &Network, l: usize, l_hat: usize) -> Result<bool> {
    check_edges(network, &[l, l_hat])?;
    Ok(block_decomposition(network)?.shares_simple_cycle(l, l_hat))
}
