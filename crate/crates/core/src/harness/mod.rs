//! Evaluation harness: configuration, dataset generation, Monte Carlo
//! sweeps, operation counting, and result emission.

pub mod complexity;
pub mod config;
pub mod csvio;
pub mod dataset;
pub mod sweep;
pub mod training;

pub use complexity::{count_ops, ComplexityParams, OpCount, OpStage};
pub use config::{ChannelProfile, ConfigError, EstimatorKind, ScenarioConfig, SweepConfig};
pub use dataset::{
    fbf_training_sequence, fbf_training_set, frame_channel, sbs_training_sequence,
    sbs_training_set, simulate_frame, Corpus,
};
pub use sweep::{run_ber_sweep, throughput_from_counts, ModelStore, ResultRow, SweepError};
pub use training::{init_model, train_estimator, TrainBudget, TrainingError, DESK_SCALE, PAPER_SCALE};
