//! Pipeline scheduling of kernel chains over heterogeneous FPGA/GPU pools.

pub mod comm;
pub mod energy;
pub mod error;
pub mod model;
pub mod perf;
pub mod schedule;
pub mod sim;
pub mod synth;
pub mod workload;

pub use error::{Error, Issue, Result};
