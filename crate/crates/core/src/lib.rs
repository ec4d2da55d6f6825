//! Simulator and training stack for the multi-UAV downlink Markov game.
//!
//! UAV base stations pick ground-user pairings, 3-D velocities and
//! power/bandwidth allocation schemes; agents are trained with sequential
//! multi-agent trust-region updates whose critics read a graph-attention
//! encoding of the UAV/GU topology.

pub mod autodiff;
pub mod dist;
pub mod env;
pub mod graph;
pub mod harness;
pub mod trainer;

pub use autodiff::{AutodiffError, Tensor};
