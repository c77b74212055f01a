//! LSTM sequence predictor: cell, unrolled network with backpropagation
//! through time, Adam, training loop and the model artifact format.

pub mod adam;
pub mod artifact;
pub mod cell;
pub mod network;
pub mod params;
pub mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use cell::{cell_forward, GateActivations, LstmState};
pub use network::{loss_and_gradients, ForwardCache, NetworkParams, TrainingWindow};
pub use params::{Dense, Dims, GateParams, LstmCellParams, Matrix, NormStats, Weights};
pub use train::{raw_window, train, TrainConfig, TrainedModel};
