//! Access-controlled retrieval-augmented assistant toolkit.
//!
//! The crate covers the whole data path of a RAFT-style assistant:
//!
//! - [`corpus`]: ingestion, character chunking, persistence, Q&A history
//! - [`retrieval`]: access-filtered BM25 + vector search fused with RRF
//! - [`gateway`]: generation / embedding / scoring clients and offline stubs
//! - [`synth`]: Q2A refinement and synthetic Q&A generation with RAFS
//! - [`raft`]: RAFT example assembly, splits, missing-context and IDK data
//! - [`eval`]: normalized likelihood precision/recall/F1 and leakage reports
//! - [`service`]: the query service tying retrieval and generation together

pub mod config;
pub mod corpus;
pub mod eval;
pub mod gateway;
pub mod raft;
pub mod retrieval;
pub mod service;
pub mod stubs;
pub mod synth;
pub mod templates;
pub mod tokenize;
