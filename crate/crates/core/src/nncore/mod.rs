//! A small convolutional classifier with a shared extractor, a main head and
//! one linear bias head per artifact kind, trained by momentum SGD.

mod checkpoint;
mod layers;
mod loss;
mod network;
mod optim;

pub use checkpoint::Checkpoint;
pub use layers::{Conv2d, Linear};
pub use loss::{cross_entropy, grad_reverse_backward, grad_reverse_forward};
pub use network::{
    softmax2, Batch, Extractor, Group, BIAS_GRID, InputNorm, LossSpec, Losses, MainHead, Network, Outputs,
    Params, DEFAULT_CHANNELS,
};
pub use optim::{clip_grad_norm, lr_at, sgd_step, Sgd, TrainConfig};
