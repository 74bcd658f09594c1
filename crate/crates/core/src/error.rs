use thiserror::Error;

use crate::cnf::Var;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("pivot {pivot} does not occur positively in the first clause and negatively in the second")]
    PivotAbsent { pivot: Var },

    #[error("proof does not derive the empty clause")]
    NoEmptyClause,

    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },

    #[error("line {line}: literal {lit} exceeds declared variable count {num_vars}")]
    VarOutOfRange { line: usize, lit: i64, num_vars: usize },

    #[error("line {line}: parent clause {parent} is not defined")]
    DanglingParent { line: usize, parent: u64 },

    #[error("flipped variant of the final clause is not satisfiable")]
    GenerationStall,

    #[error("solver exceeded the decision limit of {0}")]
    ResourceLimit(u64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("certificate check failed: {0}")]
    Certificate(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn syntax(line: usize, msg: impl Into<String>) -> Self {
        Error::Syntax {
            line,
            msg: msg.into(),
        }
    }
}
