//! Bias-aware performance estimation for data-driven policies.
//!
//! A policy is trained on a finite labeled sample and then evaluated with a
//! predictor trained on the same sample. This crate measures and corrects the
//! two resulting biases — misspecification and reuse of the sample — on
//! finite-horizon MDPs whose ground-truth property function is known exactly.

pub mod bias;
pub mod dist;
pub mod env;
pub mod error;
pub mod estimators;
pub mod models;
pub mod policy;
pub mod ratio;
pub mod seed;

pub use error::{Error, Result};
