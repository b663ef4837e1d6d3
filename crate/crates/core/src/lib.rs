//! Adaptive subgradient optimization (OGD, AdaGrad, Adam) for dense ReLU
//! networks, with a closed-form diagonal Gaussian posterior over the weights
//! read directly off the optimizer's moment estimates.
//!
//! The posterior for each weight is
//! `N( N*s/(N*s + 1/sigma^2) * theta,  1/(N*s + 1/sigma^2) )` with
//! `s = sqrt(v_hat)` the bias-corrected curvature estimate, and is validated
//! three ways: signal-to-noise weight pruning, predictive uncertainty on a
//! synthetic regression task, and Thompson-sampling contextual bandits.
//!
//! The `badam` binary runs the experiments from declarative TOML configs; see
//! the crate README for the CLI surface and output formats.

pub mod bandit;
pub mod config;
pub mod data;
pub mod error;
pub mod experiment;
pub mod nn;
pub mod optim;
pub mod posterior;
pub mod pruning;
pub mod seed;

pub use error::{Error, Result};
pub use nn::{Gradient, Network, ParamVector};
pub use optim::{MomentState, OptimizerConfig};
pub use posterior::{extract_posterior, EffectiveN, GaussianPosterior, PriorConfig};
