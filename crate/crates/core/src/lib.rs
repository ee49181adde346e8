//! Dialogue workflow graphs: an ontology-backed specification language for
//! task-oriented dialogue, its compiler to a graph IR, and an interpreter.
//!
//! The pipeline is [`ontology::load_ontology`] → [`dsl::parse_model`] →
//! [`compiler::compile`] → [`runtime::Engine`].

pub mod compiler;
pub mod conditions;
pub mod dsl;
pub mod ontology;
pub mod replay;
pub mod runtime;
pub mod sexpr;
