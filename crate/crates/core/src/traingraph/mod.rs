//! The training link as a computation graph: two trainable complex
//! convolution layers around static channel layers, reverse-mode
//! gradients, Adam and the epoch loop.

mod conv;
mod graph;
mod optim;
mod train;

pub use conv::{
    complex_conv_forward, conv1d_backward, conv1d_forward, ComplexConvLayer, ConvLayerParams, Tensor3,
};
pub use graph::{loss_mse, Gradients, Graph, Tape};
pub use optim::{adam_step, AdamHyper, AdamState, Optimizer};
pub use train::{
    align_rx_phase, format_curves, held_out_loss, initialize, train, write_curves, EpochRecord, TrainConfig, TrainOutcome,
};
