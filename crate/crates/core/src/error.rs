use std::fmt;

use thiserror::Error;

/// Assumption labels used when a configuration is rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize)]
pub enum Assumption {
    C1,
    C2,
    C3,
    C4,
    C5,
    C6,
    C7,
    C8,
    /// Structural problems that are not tied to a modelling assumption.
    Schema,
}

impl fmt::Display for Assumption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Assumption::C1 => "C1",
            Assumption::C2 => "C2",
            Assumption::C3 => "C3",
            Assumption::C4 => "C4",
            Assumption::C5 => "C5",
            Assumption::C6 => "C6",
            Assumption::C7 => "C7",
            Assumption::C8 => "C8",
            Assumption::Schema => "config",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported dimension {0}")]
    UnsupportedDimension(usize),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("non-finite value in field at node {node}")]
    NonFinite { node: usize },

    #[error("dense operator with {nodes} nodes exceeds the node cap {cap}")]
    DenseTooLarge { nodes: usize, cap: usize },

    #[error("input to the inverse Neumann Laplacian has mean {mean:e}, expected zero")]
    NonzeroMean { mean: f64 },

    #[error("scalar solve did not converge for target {target} after {iterations} iterations")]
    ScalarNonConvergence { target: f64, iterations: usize },

    #[error("conjugate gradient stalled after {iterations} iterations (relative residual {residual:e})")]
    LinearSolve { iterations: usize, residual: f64 },

    #[error("Newton failed in the {stage} subproblem at step {step} (residual {residual:e})")]
    Newton {
        stage: &'static str,
        step: usize,
        residual: f64,
    },

    #[error("temperature lost positivity at step {step} (min {min:e}); reduce the time step")]
    Positivity { step: usize, min: f64 },

    #[error("Picard iteration cap {iterations} exceeded (last distance {distance:e}, ratios {ratios:?})")]
    PicardCap {
        iterations: usize,
        distance: f64,
        ratios: Vec<f64>,
    },

    #[error("{label}: {message}")]
    Config { label: Assumption, message: String },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(label: Assumption, message: impl Into<String>) -> Self {
        Error::Config {
            label,
            message: message.into(),
        }
    }

    /// The assumption label for configuration rejections.
    pub fn assumption(&self) -> Option<Assumption> {
        match self {
            Error::Config { label, .. } => Some(*label),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
