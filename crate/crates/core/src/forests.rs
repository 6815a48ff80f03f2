//! Brute-force spanning-tree and two-tree-forest enumeration.
//!
//! This module is an oracle: every quantity is computed by summing forest
//! weights `β(F) = Π_{l∈F} B_l` over explicitly enumerated edge sets and
//! never touches the inverse of the Laplacian. It is meant for small
//! networks (at most 14 nodes, 64 lines, 10^7 forests).
//!
//! `𝒯(N₁, N₂)` denotes the spanning forests with exactly two trees, one
//! containing every node of `N₁` and the other every node of `N₂`.

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::Serialize;

use crate::dcpf;
use crate::error::{Error, Result};
use crate::net_model::Network;

pub const MAX_NODES: usize = 14;
pub const MAX_LINES: usize = 64;
pub const MAX_FORESTS: usize = 10_000_000;

/// Largest numerator/denominator for exact-rational susceptances.
const RATIONAL_BOUND: i64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    SpanningTrees,
    TwoTreeForests,
}

/// An enumerated family of spanning trees or two-tree forests.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForestFamily {
    pub kind: FamilyKind,
    /// Line indices of each member, ascending; members sorted lexicographically.
    pub members: Vec<Vec<usize>>,
    pub weight_sum: f64,
}

impl ForestFamily {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

fn check_size(network: &Network) -> Result<()> {
    if network.n() > MAX_NODES {
        return Err(Error::TooLarge(format!(
            "{} nodes exceeds the enumeration limit of {MAX_NODES}",
            network.n()
        )));
    }
    if network.m() > MAX_LINES {
        return Err(Error::TooLarge(format!(
            "{} lines exceeds the enumeration limit of {MAX_LINES}",
            network.m()
        )));
    }
    Ok(())
}

/// All acyclic subsets of exactly `size` allowed lines, as bitmasks.
///
/// Backtracks over lines in index order; a line is included only if it
/// joins two different components.
fn acyclic_subsets(network: &Network, allowed: u64, size: usize) -> Result<Vec<u64>> {
    let ends: Vec<(usize, usize)> = network.edges().iter().map(|e| e.endpoints()).collect();
    let candidates: Vec<usize> = (0..network.m()).filter(|&l| allowed >> l & 1 == 1).collect();
    let mut out = Vec::new();
    let labels: Vec<u8> = (0..network.n() as u8).collect();

    struct Search<'a> {
        ends: &'a [(usize, usize)],
        candidates: &'a [usize],
        size: usize,
        out: &'a mut Vec<u64>,
    }

    impl Search<'_> {
        fn go(&mut self, pos: usize, chosen: usize, mask: u64, labels: &[u8]) -> Result<()> {
            if chosen == self.size {
                if self.out.len() >= MAX_FORESTS {
                    return Err(Error::TooLarge(format!(
                        "more than {MAX_FORESTS} forests"
                    )));
                }
                self.out.push(mask);
                return Ok(());
            }
            if self.candidates.len() - pos < self.size - chosen {
                return Ok(());
            }
            let l = self.candidates[pos];
            let (a, b) = self.ends[l];
            let (la, lb) = (labels[a], labels[b]);
            if la != lb {
                let merged: Vec<u8> = labels.iter().map(|&x| if x == lb { la } else { x }).collect();
                self.go(pos + 1, chosen + 1, mask | 1 << l, &merged)?;
            }
            self.go(pos + 1, chosen, mask, labels)
        }
    }

    if size <= candidates.len() {
        Search {
            ends: &ends,
            candidates: &candidates,
            size,
            out: &mut out,
        }
        .go(0, 0, 0, &labels)?;
    }
    Ok(out)
}

fn members_of(masks: impl Iterator<Item = u64>) -> Vec<Vec<usize>> {
    let mut members: Vec<Vec<usize>> = masks
        .map(|mask| (0..64).filter(|&l| mask >> l & 1 == 1).collect())
        .collect();
    members.sort();
    members
}

fn mask_of(lines: &[usize]) -> u64 {
    lines.iter().fold(0, |acc, &l| acc | 1 << l)
}

fn node_mask(network: &Network, nodes: &[usize]) -> Result<u32> {
    nodes.iter().try_fold(0u32, |acc, &i| {
        if i >= network.n() {
            Err(Error::UnknownNode(i as u32))
        } else {
            Ok(acc | 1 << i)
        }
    })
}

/// Nodes in the tree of a two-tree forest that contains node 0.
fn side_of(network: &Network, mask: u64) -> u32 {
    let n = network.n();
    let mut adj = vec![Vec::new(); n];
    for l in (0..network.m()).filter(|&l| mask >> l & 1 == 1) {
        let (a, b) = network.edge(l).endpoints();
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut seen = 1u32;
    let mut stack = vec![0usize];
    while let Some(u) = stack.pop() {
        for &v in &adj[u] {
            if seen >> v & 1 == 0 {
                seen |= 1 << v;
                stack.push(v);
            }
        }
    }
    seen
}

fn separates(side: u32, n1: u32, n2: u32) -> bool {
    (n1 & side == n1 && n2 & side == 0) || (n1 & side == 0 && n2 & side == n2)
}

/// All spanning trees using only `allowed` lines.
pub fn enumerate_spanning_trees(network: &Network, allowed: &[usize]) -> Result<ForestFamily> {
    check_size(network)?;
    crate::graph_algos::check_edges(network, allowed)?;
    let masks = acyclic_subsets(network, mask_of(allowed), network.n() - 1)?;
    let b = network.susceptances();
    let weight_sum = masks.iter().map(|&mk| beta(&b, mk)).sum();
    Ok(ForestFamily {
        kind: FamilyKind::SpanningTrees,
        members: members_of(masks.into_iter()),
        weight_sum,
    })
}

/// All two-tree spanning forests separating `n1` from `n2` (node indices).
/// Empty when the sets intersect.
pub fn enumerate_two_tree_forests(network: &Network, n1: &[usize], n2: &[usize]) -> Result<ForestFamily> {
    check_size(network)?;
    let (m1, m2) = (node_mask(network, n1)?, node_mask(network, n2)?);
    let b = network.susceptances();
    let masks: Vec<u64> = if m1 & m2 != 0 || network.n() < 2 {
        Vec::new()
    } else {
        acyclic_subsets(network, u64::MAX, network.n() - 2)?
            .into_iter()
            .filter(|&mk| separates(side_of(network, mk), m1, m2))
            .collect()
    };
    let weight_sum = masks.iter().map(|&mk| beta(&b, mk)).sum();
    Ok(ForestFamily {
        kind: FamilyKind::TwoTreeForests,
        members: members_of(masks.into_iter()),
        weight_sum,
    })
}

fn beta(b: &[f64], mask: u64) -> f64 {
    b.iter()
        .enumerate()
        .filter(|(l, _)| mask >> l & 1 == 1)
        .map(|(_, &x)| x)
        .product()
}

/// Best rational `p/q` with `|p|, q ≤ bound` that reproduces `x` exactly.
fn exact_ratio(x: f64, bound: i64) -> Option<BigRational> {
    if !x.is_finite() {
        return None;
    }
    // continued-fraction convergents
    let (mut h0, mut h1) = (0i128, 1i128);
    let (mut k0, mut k1) = (1i128, 0i128);
    let mut r = x;
    for _ in 0..64 {
        let a = r.floor();
        if a.abs() > bound as f64 * 2.0 {
            return None;
        }
        let a = a as i128;
        let h2 = a * h1 + h0;
        let k2 = a * k1 + k0;
        if h2.abs() > bound as i128 || k2 > bound as i128 {
            return None;
        }
        if h2 as f64 / k2 as f64 == x {
            return Some(BigRational::new(BigInt::from(h2), BigInt::from(k2)));
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        let frac = r - a as f64;
        if frac == 0.0 {
            return None;
        }
        r = 1.0 / frac;
    }
    None
}

/// Cached enumeration of all spanning trees and two-tree forests of a
/// network, answering forest-sum queries by filtering.
#[derive(Debug, Clone)]
pub struct ForestOracle {
    network: Network,
    trees: Vec<(u64, f64)>,
    // (lines, nodes on node 0's side, weight)
    two_forests: Vec<(u64, u32, f64)>,
    exact_b: Option<Vec<BigRational>>,
}

impl ForestOracle {
    pub fn new(network: &Network) -> Result<Self> {
        check_size(network)?;
        let b = network.susceptances();
        let trees = acyclic_subsets(network, u64::MAX, network.n() - 1)?
            .into_iter()
            .map(|mk| (mk, beta(&b, mk)))
            .collect();
        let two_forests = acyclic_subsets(network, u64::MAX, network.n() - 2)?
            .into_iter()
            .map(|mk| (mk, side_of(network, mk), beta(&b, mk)))
            .collect();
        Ok(Self {
            network: network.clone(),
            trees,
            two_forests,
            exact_b: None,
        })
    }

    /// Like [`ForestOracle::new`], with forest sums in exact rational
    /// arithmetic when every susceptance is a ratio of integers ≤ 10^6.
    pub fn with_exact(network: &Network) -> Result<Self> {
        let mut oracle = Self::new(network)?;
        oracle.exact_b = network
            .susceptances()
            .into_iter()
            .map(|x| exact_ratio(x, RATIONAL_BOUND))
            .collect();
        Ok(oracle)
    }

    pub fn is_exact(&self) -> bool {
        self.exact_b.is_some()
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn tree_count(&self) -> usize {
        self.trees.len()
    }

    fn exact_beta(&self, b: &[BigRational], mask: u64) -> BigRational {
        let mut acc = BigRational::one();
        for (l, x) in b.iter().enumerate() {
            if mask >> l & 1 == 1 {
                acc *= x;
            }
        }
        acc
    }

    fn tree_masks(&self, excluded: u64) -> impl Iterator<Item = &(u64, f64)> {
        self.trees.iter().filter(move |(mk, _)| mk & excluded == 0)
    }

    fn forest_masks(&self, n1: u32, n2: u32) -> impl Iterator<Item = &(u64, u32, f64)> {
        let ok = n1 & n2 == 0;
        self.two_forests
            .iter()
            .filter(move |(_, side, _)| ok && separates(*side, n1, n2))
    }

    /// `Σ β` over spanning trees avoiding the `excluded` lines.
    fn tree_sum(&self, excluded: u64) -> Sum {
        match &self.exact_b {
            Some(b) => Sum::Exact(
                self.tree_masks(excluded)
                    .fold(BigRational::zero(), |acc, (mk, _)| acc + self.exact_beta(b, *mk)),
            ),
            None => Sum::Float(self.tree_masks(excluded).map(|(_, w)| w).sum()),
        }
    }

    fn forest_sum(&self, n1: u32, n2: u32) -> Sum {
        match &self.exact_b {
            Some(b) => Sum::Exact(
                self.forest_masks(n1, n2)
                    .fold(BigRational::zero(), |acc, (mk, _, _)| acc + self.exact_beta(b, *mk)),
            ),
            None => Sum::Float(self.forest_masks(n1, n2).map(|(_, _, w)| w).sum()),
        }
    }

    /// `Σ_{𝒯_ℰ} β`.
    pub fn total_tree_weight(&self) -> f64 {
        self.tree_sum(0).to_f64()
    }

    /// `Σ_{𝒯(N₁,N₂)} β` for node-index sets.
    pub fn two_forest_weight(&self, n1: &[usize], n2: &[usize]) -> Result<f64> {
        let (m1, m2) = (node_mask(&self.network, n1)?, node_mask(&self.network, n2)?);
        Ok(self.forest_sum(m1, m2).to_f64())
    }

    pub fn spanning_trees(&self, allowed: &[usize]) -> Result<ForestFamily> {
        crate::graph_algos::check_edges(&self.network, allowed)?;
        let excluded = !mask_of(allowed);
        Ok(ForestFamily {
            kind: FamilyKind::SpanningTrees,
            members: members_of(self.tree_masks(excluded).map(|(mk, _)| *mk)),
            weight_sum: self.tree_sum(excluded).to_f64(),
        })
    }

    pub fn two_tree_forests(&self, n1: &[usize], n2: &[usize]) -> Result<ForestFamily> {
        let (m1, m2) = (node_mask(&self.network, n1)?, node_mask(&self.network, n2)?);
        Ok(ForestFamily {
            kind: FamilyKind::TwoTreeForests,
            members: members_of(self.forest_masks(m1, m2).map(|(mk, _, _)| *mk)),
            weight_sum: self.forest_sum(m1, m2).to_f64(),
        })
    }

    /// `A_ij = Σ_{𝒯(ij, ref)} β / Σ_{𝒯_ℰ} β`; zero on the reference row and column.
    pub fn a_entry(&self, i: usize, j: usize) -> Result<f64> {
        let r = self.network.reference();
        node_mask(&self.network, &[i, j])?;
        if i == r || j == r {
            return Ok(0.0);
        }
        let num = self.forest_sum(1 << i | 1 << j, 1 << r);
        Ok(num.ratio(&self.tree_sum(0)))
    }

    /// Numerator `Σ_{𝒯(iî, jĵ)} β − Σ_{𝒯(iĵ, jî)} β` shared by PTDF and LODF.
    fn oriented_difference(&self, l: usize, i_hat: usize, j_hat: usize) -> Sum {
        let (i, j) = self.network.edge(l).endpoints();
        let plus = self.forest_sum(1 << i | 1 << i_hat, 1 << j | 1 << j_hat);
        let minus = self.forest_sum(1 << i | 1 << j_hat, 1 << j | 1 << i_hat);
        plus.sub(minus)
    }

    /// PTDF of line `l` for a unit transfer from `i_hat` to `j_hat`.
    pub fn ptdf(&self, l: usize, i_hat: usize, j_hat: usize) -> Result<f64> {
        crate::graph_algos::check_edges(&self.network, &[l])?;
        node_mask(&self.network, &[i_hat, j_hat])?;
        let b = self.network.edge(l).susceptance;
        Ok(b * self.oriented_difference(l, i_hat, j_hat).ratio(&self.tree_sum(0)))
    }

    /// LODF `K_{l l̂}` from forests; the denominator sums trees avoiding `l̂`.
    pub fn lodf(&self, l: usize, l_hat: usize) -> Result<f64> {
        crate::graph_algos::check_edges(&self.network, &[l, l_hat])?;
        if l == l_hat {
            return Err(Error::InvalidOutage(format!(
                "surviving line {} equals the outaged line",
                l + 1
            )));
        }
        let denom = self.tree_sum(1 << l_hat);
        if denom.is_zero() {
            return Err(Error::BridgeOutage(l_hat + 1));
        }
        let (i_hat, j_hat) = self.network.edge(l_hat).endpoints();
        let b = self.network.edge(l).susceptance;
        Ok(b * self.oriented_difference(l, i_hat, j_hat).ratio(&denom))
    }

    /// Effective reactance between the endpoints of `edge`.
    pub fn effective_reactance(&self, edge: usize) -> Result<EffectiveReactance> {
        crate::graph_algos::check_edges(&self.network, &[edge])?;
        let e = self.network.edge(edge);
        let total = self.tree_sum(0);
        let r = self.forest_sum(1 << e.source, 1 << e.target).ratio(&total);
        let ratio = self.tree_sum(1 << edge).ratio(&total);
        let x = 1.0 / e.susceptance;
        Ok(EffectiveReactance {
            edge: edge + 1,
            reactance: x,
            effective: r,
            reduction_ratio: ratio,
            reduction: x * ratio,
        })
    }

    /// Compares `det(L̄)` and every first minor with the forest sums.
    pub fn matrix_tree_check(&self, tol: f64) -> Result<MatrixTreeReport> {
        let bundle = dcpf::build_laplacian(&self.network)?;
        let reduced = bundle.reduced_laplacian();
        let r = self.network.reference();
        let node_of = |k: usize| if k < r { k } else { k + 1 };
        let determinant = reduced.determinant();
        let tree_weight = self.total_tree_weight();
        let det_error = (determinant - tree_weight).abs() / determinant.abs().max(tree_weight.abs());
        let size = reduced.nrows();
        let mut minors = DMatrix::zeros(size, size);
        let mut forest = DMatrix::zeros(size, size);
        for a in 0..size {
            for c in 0..size {
                let sub = reduced.clone().remove_row(a).remove_column(c);
                minors[(a, c)] = if sub.is_empty() { 1.0 } else { sub.determinant() };
                let (i, j) = (node_of(a), node_of(c));
                let sign = if (a + c) % 2 == 0 { 1.0 } else { -1.0 };
                forest[(a, c)] = sign * self.forest_sum(1 << i | 1 << j, 1 << r).to_f64();
            }
        }
        let scale = forest.amax().max(minors.amax());
        let minor_error = if scale == 0.0 {
            0.0
        } else {
            crate::linalg::max_abs_diff(&minors, &forest) / scale
        };
        Ok(MatrixTreeReport {
            determinant,
            tree_weight,
            tree_count: self.trees.len(),
            determinant_rel_error: det_error,
            minor_rel_error: minor_error,
            pass: det_error <= tol && minor_error <= tol,
        })
    }
}

/// Sum of forest weights in floating or exact arithmetic.
enum Sum {
    Float(f64),
    Exact(BigRational),
}

impl Sum {
    fn to_f64(&self) -> f64 {
        match self {
            Sum::Float(x) => *x,
            Sum::Exact(q) => q.to_f64().unwrap_or(f64::NAN),
        }
    }

    fn is_zero(&self) -> bool {
        match self {
            Sum::Float(x) => *x == 0.0,
            Sum::Exact(q) => q.is_zero(),
        }
    }

    fn sub(self, other: Sum) -> Sum {
        match (self, other) {
            (Sum::Exact(a), Sum::Exact(b)) => Sum::Exact(a - b),
            (a, b) => Sum::Float(a.to_f64() - b.to_f64()),
        }
    }

    fn ratio(&self, denom: &Sum) -> f64 {
        match (self, denom) {
            (Sum::Exact(a), Sum::Exact(b)) => (a / b).to_f64().unwrap_or(f64::NAN),
            _ => self.to_f64() / denom.to_f64(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffectiveReactance {
    pub edge: usize,
    /// Line reactance `X = 1/B`.
    pub reactance: f64,
    /// Effective reactance `R` between the line's endpoints.
    pub effective: f64,
    /// `Σ_{𝒯_{ℰ∖e}} β / Σ_{𝒯_ℰ} β`.
    pub reduction_ratio: f64,
    /// `X − R = X · reduction_ratio`.
    pub reduction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatrixTreeReport {
    pub determinant: f64,
    pub tree_weight: f64,
    pub tree_count: usize,
    pub determinant_rel_error: f64,
    pub minor_rel_error: f64,
    pub pass: bool,
}

pub fn a_entry_via_forests(network: &Network, i: usize, j: usize) -> Result<f64> {
    ForestOracle::new(network)?.a_entry(i, j)
}

pub fn ptdf_via_forests(network: &Network, l: usize, i_hat: usize, j_hat: usize) -> Result<f64> {
    ForestOracle::new(network)?.ptdf(l, i_hat, j_hat)
}

pub fn lodf_via_forests(network: &Network, l: usize, l_hat: usize) -> Result<f64> {
    ForestOracle::new(network)?.lodf(l, l_hat)
}

pub fn matrix_tree_check(network: &Network, tol: f64) -> Result<MatrixTreeReport> {
    ForestOracle::new(network)?.matrix_tree_check(tol)
}

pub fn effective_reactance(network: &Network, edge: usize) -> Result<EffectiveReactance> {
    ForestOracle::new(network)?.effective_reactance(edge)
}
