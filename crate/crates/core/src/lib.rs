//! Causal-reasoning benchmark generation, a semantic consistency loss, a toy
//! text classifier, and evaluation with prediction-collapse detection.
//!
//! Modules, in dependency order:
//! - [`graph`]: DAGs, generators, reachability and d-separation oracles.
//! - [`text`]: premise/hypothesis templates and the character tokenizer.
//! - [`dataset`]: validated benchmark suites and JSONL I/O.
//! - [`semantic`]: consistency scores, the semantic loss and the λ schedule.
//! - [`model`]: the toy classifier, its gradients and its file format.
//! - [`trainer`]: AdamW training with the combined objective.
//! - [`eval`]: confusion matrices, metrics and collapse detection.

pub mod dataset;
pub mod eval;
pub mod graph;
pub mod model;
pub mod semantic;
pub mod text;
pub mod trainer;

pub use graph::{Dag, Edge, GraphError, NodeName};
pub use text::{Example, Label, Query};
