//! Models, datasets and synthetic objectives for exercising the optimizers.
//!
//! Networks are plain MLPs and a two-block CNN with hand-derived gradients,
//! evaluated in `f64`. Datasets are stored as `f32` and widened per batch.

pub mod data;
pub mod error;
pub mod model;
pub mod synthetic;

pub use data::{
    load_cifar_binary, load_fashion_mnist, load_idx, minibatch_indices, parse_cifar, parse_idx, read_idx,
    Dataset, IdxArray, Normalization, Split,
};
pub use error::{Result, ZooError};
pub use model::{fd_check, Arch, Batch, LayerParams, Loss, Model, ModelState};
pub use synthetic::SyntheticQuadraticTask;
