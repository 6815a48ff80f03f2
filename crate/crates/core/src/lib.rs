//! DC power-flow contingency analysis: distribution factors, block
//! decomposition, failure localization and cascade simulation.
//!
//! Nodes and lines are addressed internally by 0-based indices. External
//! ids are the node ids of the input document and 1-based line ids in
//! document order; errors and serialized reports use external ids.

mod dsu;
pub mod error;
pub mod linalg;
pub mod net_model;
pub mod graph_algos;
pub mod dcpf;
pub mod forests;
pub mod factors;
pub mod localization;
pub mod cascade;
pub mod testnets;

pub use cascade::{CascadeStatus, CascadeTrace, run_cascade};
pub use dcpf::{FlowState, LaplacianBundle, build_laplacian, solve_flow};
pub use error::{Error, Result};
pub use factors::{GlodfMethod, GlodfResult, OutageSet, PtdfMatrix, glodf, ptdf_matrix};
pub use graph_algos::{BlockDecomposition, block_decomposition};
pub use net_model::{Injections, Network};
