//! Training orchestration: build the corpus for an estimator, size the
//! network, run the optimizer, and hand back the trained model.

use super::complexity::default_hidden;
use super::config::{EstimatorKind, ScenarioConfig};
use super::dataset::{fbf_training_set, sbs_training_set, Corpus, DatasetError};
use crate::ofdm::{build_constellation, FrameLayout, PilotAllocation};
use crate::pipeline::FbfPipelineConfig;
use crate::rnn::{train, CellKind, NetworkModel, TrainConfig, TrainError, TrainReport};
use crate::rng::stream_rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainingError {
    #[error("estimator {0} is not trainable")]
    NotTrainable(EstimatorKind),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

/// Training scale: sequence count and optimizer schedule.
#[derive(Debug, Clone, Copy)]
pub struct TrainBudget {
    pub n_train: usize,
    pub epochs: usize,
    pub batch_size: usize,
}

/// Desk-scale defaults: small enough for a workstation run.
pub const DESK_SCALE: TrainBudget = TrainBudget { n_train: 2000, epochs: 100, batch_size: 128 };

/// Reference scale (16000 sequences, 500 epochs, batch 128).
pub const PAPER_SCALE: TrainBudget = TrainBudget { n_train: 16000, epochs: 500, batch_size: 128 };

pub fn cell_kind_of(est: EstimatorKind) -> Option<CellKind> {
    match est {
        EstimatorKind::SrnnDpaTa | EstimatorKind::AlsBiSrnn => Some(CellKind::Srnn),
        EstimatorKind::GruDpaTa | EstimatorKind::AlsBiGru => Some(CellKind::Gru),
        EstimatorKind::LstmDpaTa | EstimatorKind::AlsBiLstm => Some(CellKind::Lstm),
        _ => None,
    }
}

/// Fresh, seeded model sized for an estimator on the given layout.
pub fn init_model(est: EstimatorKind, layout: &FrameLayout, seed: u64) -> Option<NetworkModel> {
    let kind = cell_kind_of(est)?;
    let hidden = default_hidden(est) as usize;
    let mut rng = stream_rng(seed, &[0x1417, est as u64]);
    let model = if est.is_fbf() {
        NetworkModel::new(kind, 2 * layout.kon(), hidden, 2 * layout.kon(), true, &mut rng)
    } else {
        NetworkModel::new(kind, 2 * layout.kon(), hidden, 2 * layout.kd(), false, &mut rng)
    };
    Some(model)
}

/// Train a network-backed estimator on frames of the given scenario at the
/// configured training SNR. Returns the training report.
pub fn train_estimator(
    est: EstimatorKind,
    scenario: &ScenarioConfig,
    modulation: usize,
    n_data_symbols: usize,
    budget: TrainBudget,
    train_snr_db: f64,
    seed: u64,
) -> Result<TrainReport, TrainingError> {
    if cell_kind_of(est).is_none() {
        return Err(TrainingError::NotTrainable(est));
    }
    let mode = if est.is_fbf() { PilotAllocation::FbfBlock } else { PilotAllocation::SbsComb };
    let corpus = Corpus {
        scenario: scenario.clone(),
        mode,
        modulation,
        n_data_symbols,
        snr_db: train_snr_db,
        n_frames: budget.n_train,
        master_seed: seed,
    };
    let layout = corpus.layout();
    let model = init_model(est, &layout, seed).expect("trainable estimator");
    let cfg = TrainConfig {
        epochs: budget.epochs,
        batch_size: budget.batch_size,
        train_snr_db,
        n_train: budget.n_train,
        ..TrainConfig::default()
    };
    let report = if est.is_fbf() {
        let n_taps = corpus.taps().map(|t| t.len()).unwrap_or(1);
        let fbf_cfg = FbfPipelineConfig {
            layout,
            constellation: build_constellation(modulation).expect("validated order"),
            n_taps,
            include_preamble_column: true,
        };
        let (seqs, mask) = fbf_training_set(&corpus, &fbf_cfg)?;
        train(model, &seqs, Some(&mask), &cfg, seed)?
    } else {
        let seqs = sbs_training_set(&corpus);
        train(model, &seqs, None, &cfg, seed)?
    };
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn non_trainable_rejected() {
        let err = train_estimator(
            EstimatorKind::Genie,
            &ScenarioConfig::low_mobility(),
            4,
            4,
            TrainBudget { n_train: 1, epochs: 1, batch_size: 1 },
            40.0,
            1,
        );
        assert!(matches!(err, Err(TrainingError::NotTrainable(_))));
    }

    #[test]
    fn tiny_training_run_completes_deterministically() {
        let budget = TrainBudget { n_train: 3, epochs: 2, batch_size: 2 };
        let mk = || {
            train_estimator(
                EstimatorKind::GruDpaTa,
                &ScenarioConfig::very_high_mobility(),
                4,
                6,
                budget,
                40.0,
                5,
            )
            .unwrap()
        };
        let a = mk();
        let b = mk();
        assert_eq!(a.model, b.model);
        assert_eq!(a.loss_history, b.loss_history);
    }
}
