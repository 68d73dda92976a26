//! Minimal feed-forward network engine.

pub mod adam;
pub mod layer;
pub mod loss;
pub mod model;
pub mod train;

pub use adam::{AdamState, ParamBlock};
pub use layer::{sigmoid, BatchNorm, Dense, Layer, LayerSpec};
pub use loss::{loss_bce, loss_mse};
pub use model::{
    Architecture, ForwardCache, Gradients, MlpModel, Mode, ModelFile, ParamInfo, ParamKind, Task,
};
pub use train::{train, TrainConfig, TrainReport};
