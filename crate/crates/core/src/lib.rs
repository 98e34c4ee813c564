//! Parallel-restarted SPIDER for distributed nonconvex optimization, with
//! distributed SGD baselines, run inside a simulated worker-server fabric that
//! meters oracle calls and communication rounds exactly.

pub mod algorithms;
pub mod cli;
pub mod config;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod numerics;
pub mod problems;
pub mod verify;

pub use error::{Error, Result};
