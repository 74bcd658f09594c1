//! Neural resolution prover: formula embedding, clause-pair selection,
//! assignment decoding, training and evaluation.

pub mod cli;
pub mod config;
pub mod embedder;
pub mod error;
pub mod graph;
pub mod harness;
pub mod model;
pub mod policy;
pub mod pool;
pub mod training;

pub use config::{EmbedMode, EvalConfig, ModelConfig, Settings, TrainConfig, Variant};
pub use error::{ModelError, Result};
pub use model::{Model, Session, SessionOptions};
