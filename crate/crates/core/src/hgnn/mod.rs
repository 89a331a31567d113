//! Hierarchical gated network over fractal series: four layers of BiLSTM
//! and convolutional encoders fused by learned gates, then a softmax head.

mod adam;
mod checkpoint;
mod config;
mod conv;
mod gmbc;
mod lstm;
mod network;
mod params;
mod train;

pub use adam::Adam;
pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use config::{HgnnConfig, RhoMode};
pub use conv::conv_maxpool;
pub use gmbc::{gmbc_fuse, gmbc_weight, GateTrace};
pub use lstm::{bilstm_encode, lstm_cell_step};
pub use network::{
    cross_entropy, hgnn_forward, loss_and_gradient, predict, softmax, ForwardTrace, LayerTrace,
};
pub use params::{BiLstm, Conv1d, Gate, HgnnParams, Layer, Linear, Lstm, NUM_LAYERS};
pub use train::{
    evaluate, history_csv, train, EpochRecord, Sample, TrainOutcome, TrainSchedule,
    HISTORY_CSV_HEADER,
};
