//! From-scratch recurrent-network engine: SRNN/LSTM/GRU cells, bidirectional
//! composition, exact BPTT, Adam, weight-averaging ensembles, and a portable
//! binary model format.

pub mod cell;
pub mod io;
pub mod model;
pub mod train;

pub use cell::{gru_step, lstm_step, srnn_step, CellGrads, CellKind, CellParams};
pub use io::{load_model, save_model, ModelIoError};
pub use model::{ensemble_average, CellState, ModelError, NetworkModel};
pub use train::{
    bptt_gradients, train, AdamState, ModelGrads, Sequence, TrainConfig, TrainError, TrainReport,
    TrainStatus,
};
