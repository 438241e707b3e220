//! Learned linear (Koopman) models of nonlinear vehicle-platoon dynamics.
//!
//! A platoon state `[spacings; speeds; approach rates]` is lifted by a small
//! neural network into a space where it evolves linearly under the leader's
//! acceleration. The crate covers synthetic data generation, training,
//! DMDc and IDM baselines, trajectory evaluation, and local and string
//! stability analysis of the learned operator.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod koopman;
pub mod model_io;
pub mod stability;

pub use error::{Error, Result};
