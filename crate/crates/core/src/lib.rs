//! Open-domain question answering over a paragraph corpus: a BM25 retriever,
//! a ranker, an optional ranker-gated query expansion pass and an extractive
//! reader, combined by weighted score fusion.

pub mod cli;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod expansion;
pub mod fusion;
pub mod index;
pub mod jsonl;
pub mod pipeline;
pub mod scorers;

pub use error::{Error, Result, Stage};
