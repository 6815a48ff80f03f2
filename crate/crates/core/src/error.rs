use thiserror::Error;

use crate::cascade::CascadeTrace;
use crate::net_model::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors produced by network loading and analysis.
///
/// Edge and node identifiers carried in variants are the external
/// (document) ids, not internal indices.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid network: {0}")]
    Validation(ValidationReport),

    #[error("network is disconnected")]
    Disconnected,

    #[error("unknown edge id {0}")]
    UnknownEdge(usize),

    #[error("unknown node id {0}")]
    UnknownNode(u32),

    #[error("invalid outage set: {0}")]
    InvalidOutage(String),

    #[error("matrix is numerically singular: {0}")]
    Singular(String),

    #[error("injections are not balanced (sum = {sum:e})")]
    UnbalancedInjection { sum: f64 },

    #[error("injection vector has length {got}, expected {expected}")]
    InjectionLength { expected: usize, got: usize },

    #[error("enumeration too large: {0}")]
    TooLarge(String),

    #[error("bridge outage: line {0} is a bridge")]
    BridgeOutage(usize),

    #[error("cut set outage: removing lines {0:?} disconnects the network")]
    CutSet(Vec<usize>),

    #[error("distribution factor K[{line}][{outaged}] is zero; construction inapplicable")]
    ZeroFactor { line: usize, outaged: usize },

    #[error("cascade did not terminate within {} stages", .0.stages.len())]
    MaxStages(Box<CascadeTrace>),
}

impl Error {
    /// True for errors caused by the input document rather than the analysis.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Io(_)
                | Error::Parse(_)
                | Error::Validation(_)
                | Error::Disconnected
                | Error::UnknownEdge(_)
                | Error::UnknownNode(_)
                | Error::InvalidOutage(_)
                | Error::UnbalancedInjection { .. }
                | Error::InjectionLength { .. }
        )
    }
}
