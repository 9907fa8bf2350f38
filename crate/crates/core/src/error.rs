use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("width mismatch: {0} vs {1}")]
    WidthMismatch(usize, usize),
    #[error("operator is not Hermitian: imaginary residue {0:e}")]
    NonHermitian(f64),
    #[error("complex coefficient {0} cannot be stored in a real Pauli sum")]
    ComplexCoefficient(String),
    #[error("index {index} out of range for {limit} {what}")]
    IndexOutOfRange { what: &'static str, index: usize, limit: usize },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("term {term} anticommutes with symmetry {symmetry}")]
    Anticommuting { term: String, symmetry: String },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("mitigation failure: {0}")]
    Mitigation(String),
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

pub type Result<T> = std::result::Result<T, Error>;
