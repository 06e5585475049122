//! Design toolchain and simulator for hybrid distributed observers of
//! multi-channel continuous-time LTI systems over time-varying directed
//! neighbor graphs: per-agent observer synthesis, convergence
//! certification via contraction of projected averaging products, and a
//! deterministic hybrid closed-loop simulator with dropout and
//! disturbance experiments.

pub mod analysis;
pub mod design;
pub mod error;
pub mod io;
pub mod network;
pub mod numerics;
pub mod presets;
pub mod sim;

pub use error::{Error, Result};
