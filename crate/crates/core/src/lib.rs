//! Predicting next-year neighbourhood cultural dimensions ("scenes") from
//! socio-economic profiles and review-platform mobility graphs.
//!
//! The crate covers the full pipeline: raw record ingestion, reviewer group
//! profiling, venue scene scoring, yearly mobility graph construction, a
//! graph neural network with its own reverse-mode autodiff, classical
//! baselines, and a reproducible evaluation harness.

pub mod autodiff;
pub mod baselines;
pub mod cluster;
pub mod eval;
pub mod gnn;
pub mod graph;
pub mod ingest;
pub mod lasso;
pub mod lda;
pub mod linalg;
pub mod profiling;
pub mod scenes;
pub mod seeds;
pub mod synth;
pub mod tree;
