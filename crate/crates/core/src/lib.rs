//! Training-latency model and resource management for cluster-based
//! parallel split learning (CPSL) over wireless networks.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, the command line
//! and thread pools live in the `cpsl-sim` companion crate.
//!
//! Layout:
//!
//! * [`profile`]: per-cut sizes and workloads of a chain-topology network.
//! * [`env`]: device populations and per-subcarrier rates.
//! * [`latency`]: phase-structured per-round latency for CPSL, vanilla SL and FL.
//! * [`spectrum`]: greedy and exhaustive subcarrier allocation inside a cluster.
//! * [`cluster`]: Gibbs-sampling device clustering and its exhaustive oracle.
//! * [`cut`]: sample-average cut-layer selection.
//! * [`train`]: a small dense split network that executes the learning protocol.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod cluster;
pub mod cut;
pub mod env;
mod error;
pub mod latency;
mod math;
pub mod profile;
pub mod rng;
pub mod spectrum;
pub mod train;

pub use error::{Error, Result};
