//! Backbone networks: forward/backward passes, training of the in-class model,
//! probabilities, temperature scaling, embeddings and class centers.

mod centers;
mod checkpoint;
mod matrix;
mod model;
mod network;
mod real;
mod softmax;
mod train;

pub use centers::{compute_centers, ClassCenters};
pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
pub(crate) use matrix::argmax;
pub use matrix::Matrix;
pub use model::{batch_input, Model, Output};
pub use network::{Arch, ForwardPass, Network};
pub use real::Real;
pub use softmax::{entropy, log_softmax_rows, softmax_rows, softmax_t};
pub use train::{cross_entropy, pretrain_f, Sgd, TrainConfig, TrainLog};
