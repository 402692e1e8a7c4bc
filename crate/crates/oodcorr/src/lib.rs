//! Partial out-of-distribution correlation analysis over finetuning
//! evaluation traces.
//!
//! The pipeline: ingest per-checkpoint accuracy traces ([`ingest`]), fit a
//! regressor from in-domain to OOD accuracy per OOD testset ([`regressors`]),
//! correlate the residuals pairwise ([`partial_corr`]), and render tables,
//! heatmaps and correlation graphs ([`summary`], [`export`]). A synthetic
//! trace generator with analytically known correlation structure ([`synth`])
//! backs the test oracles.

mod linalg;

pub mod export;
pub mod ingest;
pub mod partial_corr;
pub mod regressors;
pub mod summary;
pub mod synth;
pub mod trace;

pub mod cli;
