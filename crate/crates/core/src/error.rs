use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown annotation `{0}`")]
    UnknownAnnotation(String),

    #[error("duplicate annotation `{0}`")]
    DuplicateAnnotation(String),

    #[error("relation `{relation}`: expected arity {expected}, found {found}")]
    ArityMismatch {
        relation: String,
        expected: usize,
        found: usize,
    },

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("parse error at {position}: {message}")]
    Parse { position: usize, message: String },

    #[error("tree leaf `{0}` does not annotate any database tuple")]
    LeafNotInDatabase(String),

    #[error("tree is incompatible with the database: inner node `{0}` is a tuple annotation")]
    Incompatible(String),

    #[error("invalid tree: {0}")]
    InvalidTree(String),

    #[error("invalid K-example: {0}")]
    InvalidExample(String),

    #[error("`{node}` is not an ancestor-or-self of `{leaf}`")]
    InvalidAncestor { leaf: String, node: String },

    #[error("{what} count {count} exceeds cap {cap}")]
    CapExceeded {
        what: &'static str,
        count: u128,
        cap: u128,
    },

    #[error("alignment count {count} exceeds cap {cap}")]
    AlignmentExplosion { count: u128, cap: u128 },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("infeasible workload: {0}")]
    InfeasibleSpec(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Cap errors signal an incomplete search rather than bad input.
    pub fn is_cap(&self) -> bool {
        matches!(
            self,
            Error::CapExceeded { .. } | Error::AlignmentExplosion { .. }
        )
    }
}
