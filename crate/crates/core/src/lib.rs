//! Imbalance-aware domain adaptation at desk scale.
//!
//! The crate bundles a small reverse-mode differentiation engine, a synthetic
//! generator of shifted source/target domains, class-balanced sampling, the
//! attention/discriminator/threshold model with its objectives, a multi-seed
//! trainer, evaluation metrics and numerical checks of the accompanying
//! generalization, convergence and complexity results.

pub mod autodiff;
pub mod checkpoint;
pub mod config;
pub mod domains;
pub mod error;
pub mod metrics;
pub mod model;
pub mod objectives;
pub mod proportions;
pub mod sampling;
pub mod theory;
pub mod trainer;

pub use error::{Error, Result};
