//! Topology encoding, attention and graph-recurrent message passing used by
//! the critics.

mod attention;
mod gat;
mod grn;
mod topology;

pub use attention::{attention_weights, batched_attention, scaled_dot_attention, AttentionHead};
pub use gat::gat_edge_weights;
pub use grn::{GraphBatch, GrnEncoder, MASKED_SCORE};
pub use topology::{encode_topology, GraphTopology, NODE_FEATURES};

use crate::autodiff::AutodiffError;

#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}
