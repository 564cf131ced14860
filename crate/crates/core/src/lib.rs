//! Barrier-function safety filters for control-affine systems with a
//! Gaussian-process model of the unknown drift and input gain, updated only
//! when the model can no longer certify feasibility.

pub mod filter;
pub mod gp;
pub mod commands;
pub mod config;
pub mod sampled;
pub mod sim;
pub mod trigger;
