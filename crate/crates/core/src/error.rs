use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("empty ensemble: no dopant ions were drawn")]
    EmptyEnsemble,

    #[error("coincident ions: displacement has zero length")]
    CoincidentIons,

    #[error("spin dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("eigensolver did not converge for Hamiltonian:\n{0}")]
    EigenNonConvergence(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("label crossing: hyperfine pairs interleave at field {field_mt:?} mT")]
    LabelCrossing { field_mt: [f64; 3] },

    #[error("ion {id}: {source}")]
    Ion {
        id: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("burn frequency {frequency} MHz is not resonant with any prepared class; nearest: {nearest}")]
    NoResonance { frequency: f64, nearest: String },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::EigenNonConvergence(_) | Error::Numerical(_) | Error::LabelCrossing { .. } => {
                true
            }
            Error::Ion { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
