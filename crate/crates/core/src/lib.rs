//! Causal InfoGAN for 2D particle domains.

pub mod grad;
pub mod env;
pub mod model;
pub mod plan;
pub mod train;
pub mod baselines;
pub mod eval;
pub mod pipeline;
