//! Two-stage relation extraction over mixed text and table documents.
//!
//! [`retriever`] ranks document components for a query, [`graph`] links every
//! entity of a document into one graph, and [`extractor`] picks the answer
//! entity inside that graph. [`harness`] wires the stages together for
//! training, evaluation and ablations.

pub mod config;
pub mod corpus;
pub mod embed;
pub mod extractor;
pub mod graph;
pub mod harness;
pub mod nn;
pub mod retriever;
pub mod text;
