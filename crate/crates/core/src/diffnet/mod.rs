//! Differentiable building blocks shared by the actor-critic heads and the
//! forecaster: flat parameter storage, dense/VQC/LSTM layers, a gradient tape
//! and first-order optimizers.

mod layers;
mod optim;
mod params;
mod tape;

pub use layers::{
    argmax, categorical_sample, sigmoid, softmax, tanh_forward, DenseLayer, LstmCell, LstmState,
    VqcLayer,
};
pub use optim::{clip_global_norm, Optimizer, OptimizerKind};
pub use params::{Block, BlockInfo, Init, Layout, ParamSet};
pub use tape::{NodeId, Tape};
