use thiserror::Error;

use crate::hamiltonian::Violation;

#[derive(Debug, Error)]
pub enum Error {
    #[error("site {site} out of range for {n_sites} sites")]
    SiteOutOfRange { site: usize, n_sites: usize },

    #[error("mode {mode} out of range for {n_modes} modes")]
    ModeOutOfRange { mode: usize, n_modes: usize },

    #[error("{n_sites} sites exceeds the dense-storage guard of {max} sites")]
    TooManySites { n_sites: usize, max: usize },

    #[error("state has {found} amplitudes, expected {expected}")]
    BadLength { expected: usize, found: usize },

    #[error("states live on {left} and {right} sites")]
    SiteCountMismatch { left: usize, right: usize },

    #[error("supports overlap on site {site}")]
    OverlappingSupports { site: usize },

    #[error("invalid projector: {0}")]
    InvalidProjector(String),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("edge ({0}, {1}) is not in the interaction graph")]
    EdgeAbsent(usize, usize),

    #[error("model validation failed: {0:?}")]
    InvalidModel(Vec<Violation>),

    #[error("operator is not Hermitian (max deviation {0:e})")]
    NonHermitian(f64),

    #[error("dimension mismatch: operator {operator}, state {state}")]
    DimensionMismatch { operator: usize, state: usize },

    #[error("evolution did not converge: {0}")]
    NoConvergence(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("signal is zero at level {0}; its argument is undefined")]
    ZeroSignal(usize),

    #[error("color {color} out of range ({num_colors} colors)")]
    ColorOutOfRange { color: usize, num_colors: usize },

    #[error("observable support touches twirled site {0}")]
    ObservableOnTwirledSite(usize),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("document error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
