//! Laplacian assembly, the reference-padded inverse `A`, and DC power flow.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph_algos;
use crate::linalg;
use crate::net_model::{Injections, Network};

/// Laplacian `L = C B Cᵀ` and the matrix `A`: the inverse of the reduced
/// Laplacian (reference row and column deleted), padded back to `n × n`
/// with zeros at the reference.
#[derive(Debug, Clone)]
pub struct LaplacianBundle {
    laplacian: DMatrix<f64>,
    a: DMatrix<f64>,
    reference: usize,
    pinv: OnceLock<DMatrix<f64>>,
}

impl LaplacianBundle {
    pub fn laplacian(&self) -> &DMatrix<f64> {
        &self.laplacian
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn reference(&self) -> usize {
        self.reference
    }

    pub fn n(&self) -> usize {
        self.laplacian.nrows()
    }

    /// `L` with the reference row and column removed.
    pub fn reduced_laplacian(&self) -> DMatrix<f64> {
        self.laplacian
            .clone()
            .remove_row(self.reference)
            .remove_column(self.reference)
    }

    /// `L† = (L + 11ᵀ/n)⁻¹ − 11ᵀ/n`, computed on first use.
    pub fn pseudo_inverse(&self) -> &DMatrix<f64> {
        self.pinv.get_or_init(|| {
            let n = self.n();
            let j = DMatrix::from_element(n, n, 1.0 / n as f64);
            let shifted = &self.laplacian + &j;
            let inv = linalg::lu_inverse(&shifted, "L + 11ᵀ/n")
                .expect("shifted Laplacian of a connected graph is nonsingular");
            symmetrize(inv - j)
        })
    }

    /// `(e_i − e_j)ᵀ A (e_k − e_l) = A_ik + A_jl − A_il − A_jk`.
    pub fn cross(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        let a = &self.a;
        a[(i, k)] + a[(j, l)] - a[(i, l)] - a[(j, k)]
    }
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

fn assemble(network: &Network, removed: Option<&[bool]>) -> DMatrix<f64> {
    let n = network.n();
    let mut lap = DMatrix::zeros(n, n);
    for (l, e) in network.edges().iter().enumerate() {
        if removed.is_some_and(|r| r[l]) {
            continue;
        }
        let (s, t, b) = (e.source, e.target, e.susceptance);
        lap[(s, s)] += b;
        lap[(t, t)] += b;
        lap[(s, t)] -= b;
        lap[(t, s)] -= b;
    }
    lap
}

fn bundle_from_laplacian(laplacian: DMatrix<f64>, reference: usize) -> Result<LaplacianBundle> {
    let n = laplacian.nrows();
    let reduced = laplacian.clone().remove_row(reference).remove_column(reference);
    let inv = symmetrize(linalg::lu_inverse(&reduced, "reduced Laplacian")?);
    let mut a = DMatrix::zeros(n, n);
    let idx = |k: usize| if k < reference { k } else { k + 1 };
    for r in 0..n - 1 {
        for c in 0..n - 1 {
            a[(idx(r), idx(c))] = inv[(r, c)];
        }
    }
    Ok(LaplacianBundle {
        laplacian,
        a,
        reference,
        pinv: OnceLock::new(),
    })
}

/// Assembles `L` and factors the reduced Laplacian into `A`.
pub fn build_laplacian(network: &Network) -> Result<LaplacianBundle> {
    bundle_from_laplacian(assemble(network, None), network.reference())
}

/// Bundle of the post-contingency graph with the flagged lines removed.
pub fn build_surviving(network: &Network, removed: &[bool]) -> Result<LaplacianBundle> {
    assert_eq!(removed.len(), network.m());
    if !graph_algos::surviving_connected(network, removed) {
        return Err(Error::Disconnected);
    }
    bundle_from_laplacian(assemble(network, Some(removed)), network.reference())
}

/// Phase angles and signed line flows of a DC power-flow solution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowState {
    pub theta: Vec<f64>,
    pub flows: Vec<f64>,
}

impl FlowState {
    /// Flows `f_l = B_l (θ_source − θ_target)`; removed lines carry zero.
    pub fn from_angles(network: &Network, theta: Vec<f64>, removed: Option<&[bool]>) -> Self {
        let flows = network
            .edges()
            .iter()
            .enumerate()
            .map(|(l, e)| {
                if removed.is_some_and(|r| r[l]) {
                    0.0
                } else {
                    e.susceptance * (theta[e.source] - theta[e.target])
                }
            })
            .collect();
        Self { theta, flows }
    }

    /// Net injection at each node implied by the flows (`C f`).
    pub fn nodal_balance(&self, network: &Network) -> Vec<f64> {
        let mut out = vec![0.0; network.n()];
        for (e, f) in network.edges().iter().zip(&self.flows) {
            out[e.source] += f;
            out[e.target] -= f;
        }
        out
    }
}

fn check_len(bundle: &LaplacianBundle, network: &Network, p: &Injections) {
    assert_eq!(bundle.n(), network.n(), "bundle built for a different network");
    assert_eq!(p.values().len(), network.n());
}

/// `θ = A p` (reference angle zero) and `f = B Cᵀ θ`.
pub fn solve_flow(bundle: &LaplacianBundle, network: &Network, p: &Injections) -> FlowState {
    check_len(bundle, network, p);
    let theta = bundle.a() * DVector::from_column_slice(p.values());
    FlowState::from_angles(network, theta.as_slice().to_vec(), None)
}

/// Solves on the surviving graph of a post-contingency bundle.
pub fn solve_surviving(
    bundle: &LaplacianBundle,
    network: &Network,
    p: &Injections,
    removed: &[bool],
) -> FlowState {
    check_len(bundle, network, p);
    let theta = bundle.a() * DVector::from_column_slice(p.values());
    FlowState::from_angles(network, theta.as_slice().to_vec(), Some(removed))
}

/// `θ = L† p`, `f = B Cᵀ θ`. Flows agree with [`solve_flow`]; angles differ
/// by a constant.
pub fn pseudo_inverse_flow(bundle: &LaplacianBundle, network: &Network, p: &Injections) -> FlowState {
    check_len(bundle, network, p);
    let theta = bundle.pseudo_inverse() * DVector::from_column_slice(p.values());
    FlowState::from_angles(network, theta.as_slice().to_vec(), None)
}
