//! Biomedical question-answering pipeline.
//!
//! Takes challenge-style question batches (yes/no, factoid, list, summary),
//! ranks the supporting snippets by embedding similarity, retrieves few-shot
//! examples from a store of past questions, renders per-type prompts, queries
//! one or more chat-completion backends, fuses the answers (majority voting
//! and frequency aggregation), reranks candidate summaries, and scores
//! submissions with the challenge's exact-answer and ROUGE metrics.

pub mod config;
pub mod corpus;
pub mod ensemble;
pub mod error;
pub mod fewshot;
pub mod gateway;
pub mod metrics;
pub mod pipeline;
pub mod prompting;
pub mod retrieval;
pub mod summary;

pub use error::{Error, Result};
