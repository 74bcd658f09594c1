//! Symbolic foundation for resolution-based SAT certification.
//!
//! Formulas, clauses and literals live in [`cnf`]; the resolution rule,
//! proofs and the two certificate checkers live in [`resolution`]. File
//! formats (DIMACS, TRACECHECK-style traces, assignment files) and the
//! SR(n) dataset pipeline with its reference DPLL solver round it out.

pub mod cnf;
pub mod dataset;
pub mod dimacs;
pub mod error;
pub mod resolution;
pub mod srgen;
pub mod teacher;
pub mod trace;

pub use cnf::{Assignment, Clause, ClauseId, CnfFormula, Lit, Var};
pub use error::{Error, Result};
pub use resolution::{
    check_assignment, check_proof, dedup_proof, prune_proof_dag, resolvable_pivots, resolve,
    CheckReport, ResolutionProof, ResolutionStep,
};
