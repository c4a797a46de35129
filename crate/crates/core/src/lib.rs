//! Sparse Bayesian multi-view subject model.
//!
//! A three-level hierarchical latent-variable model over heterogeneous
//! per-subject views (continuous assay panels, binary and ordinal
//! questionnaires), with:
//!
//! - a generative simulator with ancestral sampling and ground-truth capture,
//! - an owned gradient-based MCMC engine (NUTS with dual-averaging step-size
//!   and diagonal mass adaptation), plus MAP warm starts,
//! - a prediction path that infers latent coordinates for unseen subjects
//!   from their views and scores continuous / ordinal responses,
//! - a cross-validation pipeline (z-normalization, minority oversampling,
//!   stratified folds, classification and regression metrics).
//!
//! Levels: observed views at the bottom; view-specific latents (factor
//! coordinates for continuous views, scalar traits for item views) in the
//! middle; a shared low-dimensional subject subspace at the top. Background
//! views drive the mean of the shared subspace through linear maps; marker
//! views load on it through sparsity-penalized projections; responses are
//! mediated by a scalar summary regressed on the shared coordinates.

pub mod error;
pub mod fit;
pub mod math;
pub mod model;
pub mod linalg;
pub mod inference;
pub mod pipeline;
pub mod predict;
pub mod simulate;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
