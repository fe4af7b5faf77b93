//! Forward-only network graphs.
//!
//! A [`GraphSpec`] is a JSON-serializable list of named layers. Compiling it
//! gives a [`Graph`] with resolved edges and shape inference; binding
//! [`Weights`] gives a [`Network`] that runs inference. [`count_params`]
//! sums closed-form per-layer counts.

pub mod decode;
pub mod graph;
pub mod gru;
pub mod layers;
pub mod network;
pub mod params;
pub mod train;
pub mod trinity;
pub mod weights;

pub use decode::{decode_output, decode_sequence, vector_norm, Detection};
pub use graph::{Graph, GraphSpec, InputSpec, Layer, Node};
pub use network::Network;
pub use params::{count_params, ParamCount, ParamSpec};
pub use train::{loss_bce, loss_mse, Adam, SgdMomentum};
pub use trinity::{
    biseldnet_v4, trinity_allocation, GraphBuilder, KernelAllocation, V4Config, DEFAULT_PIVOT,
};
pub use weights::Weights;
