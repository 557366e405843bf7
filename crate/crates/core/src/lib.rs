pub mod complexity;
pub mod data;
pub mod ensemble;
pub mod error;
pub mod kernels;
pub mod layers;
pub mod logits;
pub mod metrics;
pub mod model;
pub mod network;
pub mod report;
pub mod search;
pub mod slowfast;
pub mod task;
pub mod train;
pub mod x3d;

pub use error::{Error, Result};
pub use model::{CheckpointMeta, Model, ModelSpec};
pub use network::VideoNetwork;
pub use task::{HeadKind, Task};
