//! Dataset generation: seeded frame simulation and the training-sequence
//! views consumed by the network trainer.
//!
//! A corpus is a deterministic generator description (scenario, layout,
//! modulation, SNR, frame count, master seed); frames materialize on demand
//! from per-frame derived seeds, so corpora of any size serialize as a small
//! text descriptor and reload bit-identically.

use super::config::{ChannelProfile, ScenarioConfig};
use crate::channel::{generate_channel, map_delays_to_taps, ChannelRealization, TapSet};
use crate::ofdm::{
    assemble_frame, build_constellation, random_payload, transmit, Constellation, Frame,
    FrameLayout, PilotAllocation, ReceivedFrame,
};
use crate::pipeline::{fbf_input_sequence, fbf_pilot_estimates, stack_real, FbfPipelineConfig};
use crate::rng::stream_rng;
use crate::rnn::Sequence;
use ndarray::{Array1, Array2};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad corpus file: {0}")]
    BadCorpus(String),
    #[error(transparent)]
    Config(#[from] super::config::ConfigError),
    #[error(transparent)]
    Channel(#[from] crate::channel::ChannelError),
    #[error(transparent)]
    Ofdm(#[from] crate::ofdm::OfdmError),
    #[error(transparent)]
    Pipeline(#[from] crate::pipeline::PipelineError),
}

const CORPUS_FORMAT: &str = "corpus-v1";

/// Deterministic frame-set description.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub scenario: ScenarioConfig,
    pub mode: PilotAllocation,
    pub modulation: usize,
    pub n_data_symbols: usize,
    pub snr_db: f64,
    pub n_frames: usize,
    pub master_seed: u64,
}

impl Corpus {
    pub fn layout(&self) -> FrameLayout {
        match self.mode {
            PilotAllocation::SbsComb => FrameLayout::sbs_80211p(self.n_data_symbols),
            PilotAllocation::FbfBlock => FrameLayout::fbf_80211p(self.n_data_symbols, self.scenario.q),
        }
    }

    pub fn constellation(&self) -> Constellation {
        build_constellation(self.modulation).expect("validated modulation order")
    }

    pub fn taps(&self) -> Option<TapSet> {
        self.scenario
            .profile
            .pdp()
            .map(|pdp| map_delays_to_taps(&pdp, self.scenario.sample_period_ns).expect("non-empty pdp"))
    }

    /// Materialize frame `idx`: channel, payload, and noisy reception, all
    /// derived from `(master_seed, idx)`.
    pub fn frame(&self, idx: usize) -> (Frame, ReceivedFrame) {
        let layout = self.layout();
        let c = self.constellation();
        simulate_frame(&self.scenario, &layout, &c, self.snr_db, self.master_seed, idx)
    }

    /// Serialize the descriptor as deterministic text.
    pub fn save(&self, path: &Path) -> Result<(), DatasetError> {
        let mut text = String::new();
        text.push_str(&format!("format={CORPUS_FORMAT}\n"));
        text.push_str(&format!("profile={}\n", self.scenario.profile.name()));
        text.push_str(&format!("fd={}\n", fmt_f64(self.scenario.fd)));
        text.push_str(&format!("symbol_duration={}\n", fmt_f64(self.scenario.symbol_duration)));
        text.push_str(&format!("sample_period_ns={}\n", fmt_f64(self.scenario.sample_period_ns)));
        text.push_str(&format!("n_sinusoids={}\n", self.scenario.n_sinusoids));
        text.push_str(&format!("q={}\n", self.scenario.q));
        text.push_str(&format!(
            "mode={}\n",
            match self.mode {
                PilotAllocation::SbsComb => "sbs",
                PilotAllocation::FbfBlock => "fbf",
            }
        ));
        text.push_str(&format!("modulation={}\n", self.modulation));
        text.push_str(&format!("i={}\n", self.n_data_symbols));
        text.push_str(&format!("snr_db={}\n", fmt_f64(self.snr_db)));
        text.push_str(&format!("n_frames={}\n", self.n_frames));
        text.push_str(&format!("seed={}\n", self.master_seed));
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        let text = std::fs::read_to_string(path)?;
        let kv = super::config::parse_kv(&text)?;
        let get = |k: &str| kv.get(k).ok_or_else(|| DatasetError::BadCorpus(format!("missing {k}")));
        if get("format")? != CORPUS_FORMAT {
            return Err(DatasetError::BadCorpus(format!("unsupported format {:?}", kv.get("format"))));
        }
        let profile: ChannelProfile = get("profile")?.parse()?;
        let parse_f = |k: &str| -> Result<f64, DatasetError> {
            get(k)?.parse::<f64>().map_err(|e| DatasetError::BadCorpus(format!("{k}: {e}")))
        };
        let parse_u = |k: &str| -> Result<usize, DatasetError> {
            get(k)?.parse::<usize>().map_err(|e| DatasetError::BadCorpus(format!("{k}: {e}")))
        };
        let scenario = ScenarioConfig {
            profile,
            fd: parse_f("fd")?,
            symbol_duration: parse_f("symbol_duration")?,
            sample_period_ns: parse_f("sample_period_ns")?,
            n_sinusoids: parse_u("n_sinusoids")?,
            q: parse_u("q")?,
        };
        let mode = match get("mode")?.as_str() {
            "sbs" => PilotAllocation::SbsComb,
            "fbf" => PilotAllocation::FbfBlock,
            other => return Err(DatasetError::BadCorpus(format!("mode {other:?}"))),
        };
        Ok(Corpus {
            scenario,
            mode,
            modulation: parse_u("modulation")?,
            n_data_symbols: parse_u("i")?,
            snr_db: parse_f("snr_db")?,
            n_frames: parse_u("n_frames")?,
            master_seed: get("seed")?
                .parse::<u64>()
                .map_err(|e| DatasetError::BadCorpus(format!("seed: {e}")))?,
        })
    }
}

fn fmt_f64(x: f64) -> String {
    super::csvio::fmt_f64(x)
}

/// Channel realization for one frame, honoring the AWGN (identity) profile.
pub fn frame_channel(
    scenario: &ScenarioConfig,
    layout: &FrameLayout,
    master_seed: u64,
    idx: usize,
) -> ChannelRealization {
    match scenario.profile.pdp() {
        None => ChannelRealization::identity(layout.kon(), layout.total_symbols()),
        Some(pdp) => {
            let taps = map_delays_to_taps(&pdp, scenario.sample_period_ns).expect("non-empty pdp");
            let mut rng = stream_rng(master_seed, &[0x10, idx as u64]);
            generate_channel(
                &taps,
                scenario.fd,
                layout.total_symbols(),
                scenario.symbol_duration,
                &layout.row_bins,
                layout.k_total,
                scenario.n_sinusoids,
                &mut rng,
            )
        }
    }
}

/// Simulate one frame end to end with per-frame derived randomness
/// (channel, payload, and noise draw independent streams).
pub fn simulate_frame(
    scenario: &ScenarioConfig,
    layout: &FrameLayout,
    c: &Constellation,
    snr_db: f64,
    master_seed: u64,
    idx: usize,
) -> (Frame, ReceivedFrame) {
    let ch = frame_channel(scenario, layout, master_seed, idx);
    let mut bits_rng = stream_rng(master_seed, &[0x11, idx as u64]);
    let bits = random_payload(layout, c, &mut bits_rng);
    let frame = assemble_frame(&bits, layout, c).expect("payload sized for layout");
    let mut noise_rng = stream_rng(master_seed, &[0x12, idx as u64]);
    let rx = transmit(&frame, &ch, snr_db, &mut noise_rng).expect("channel spans frame");
    (frame, rx)
}

/// Teacher-forced SBS training sequence.
///
/// Step i consumes the stacked noisy LS pilot estimates of symbol i-1 and the
/// stacked true channel at the data rows of symbol i-1 (preamble LS for both
/// at i = 1); the target is the true channel at the data rows of symbol i.
pub fn sbs_training_sequence(rx: &ReceivedFrame) -> Sequence {
    let layout = &rx.layout;
    let genie = rx.genie_grid.as_ref().expect("training frames carry the true channel");
    let kon = layout.kon();
    let kp = layout.kp();
    let kd = layout.kd();
    let n_sym = layout.n_data_symbols;
    let pilot_seq = Array1::from_elem(kon, layout.pilot_value);
    let pre_ls = crate::classic::ls_preamble(&rx.rx_preamble, &pilot_seq).expect("unit pilots");

    let mut xs = Array2::zeros((n_sym, 2 * kon));
    let mut ys = Array2::zeros((n_sym, 2 * kd));
    let mut pilots_prev: Array1<num_complex::Complex64> =
        Array1::from_iter(layout.pilot_rows.iter().map(|&r| pre_ls[r]));
    let mut data_prev: Array1<num_complex::Complex64> =
        Array1::from_iter(layout.data_rows.iter().map(|&r| pre_ls[r]));
    let pilot_vals = Array1::from_elem(kp, layout.pilot_value);
    for i in 0..n_sym {
        let sp = stack_real(pilots_prev.as_slice().unwrap());
        let sd = stack_real(data_prev.as_slice().unwrap());
        for (j, v) in sp.iter().chain(sd.iter()).enumerate() {
            xs[[i, j]] = *v;
        }
        let truth_i = Array1::from_iter(layout.data_rows.iter().map(|&r| genie[[r, i]]));
        let st = stack_real(truth_i.as_slice().unwrap());
        for (j, v) in st.iter().enumerate() {
            ys[[i, j]] = *v;
        }
        data_prev = truth_i;
        let y_p = crate::ofdm::column_at_rows(&rx.y_grid, &layout.pilot_rows, i);
        pilots_prev = crate::classic::ls_pilot(&y_p, &pilot_vals).expect("unit pilots");
    }
    Sequence { xs, ys }
}

/// FBF training sequence: the network input of the frame plus the stacked
/// true channel per column. Returns the sequence and the loss mask (true on
/// data columns only).
pub fn fbf_training_sequence(
    rx: &ReceivedFrame,
    cfg: &FbfPipelineConfig,
) -> Result<(Sequence, Vec<bool>), DatasetError> {
    let layout = &rx.layout;
    let genie = rx.genie_grid.as_ref().expect("training frames carry the true channel");
    let ests = fbf_pilot_estimates(rx, cfg)?;
    let inputs = fbf_input_sequence(&ests, layout, cfg.include_preamble_column);
    let t_len = inputs.len();
    let kon = layout.kon();
    let offset = usize::from(cfg.include_preamble_column);
    let mut xs = Array2::zeros((t_len, 2 * kon));
    let mut ys = Array2::zeros((t_len, 2 * kon));
    let mut mask = vec![false; t_len];
    let data_cols = layout.data_cols();
    for (t, x) in inputs.iter().enumerate() {
        for (j, v) in x.iter().enumerate() {
            xs[[t, j]] = *v;
        }
    }
    for &col in &data_cols {
        let t = offset + col;
        mask[t] = true;
        let truth = genie.column(col).to_owned();
        let st = stack_real(truth.as_slice().unwrap());
        for (j, v) in st.iter().enumerate() {
            ys[[t, j]] = *v;
        }
    }
    Ok((Sequence { xs, ys }, mask))
}

/// Materialize the SBS training set of a corpus.
pub fn sbs_training_set(corpus: &Corpus) -> Vec<Sequence> {
    (0..corpus.n_frames).map(|idx| sbs_training_sequence(&corpus.frame(idx).1)).collect()
}

/// Materialize the FBF training set of a corpus.
pub fn fbf_training_set(
    corpus: &Corpus,
    cfg: &FbfPipelineConfig,
) -> Result<(Vec<Sequence>, Vec<bool>), DatasetError> {
    let mut seqs = Vec::with_capacity(corpus.n_frames);
    let mut mask = Vec::new();
    for idx in 0..corpus.n_frames {
        let (seq, m) = fbf_training_sequence(&corpus.frame(idx).1, cfg)?;
        mask = m;
        seqs.push(seq);
    }
    Ok((seqs, mask))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_corpus() -> Corpus {
        Corpus {
            scenario: ScenarioConfig::very_high_mobility(),
            mode: PilotAllocation::SbsComb,
            modulation: 4,
            n_data_symbols: 10,
            snr_db: 40.0,
            n_frames: 3,
            master_seed: 99,
        }
    }

    #[test]
    fn corpus_frames_are_deterministic() {
        let c = small_corpus();
        let (f1, r1) = c.frame(1);
        let (f2, r2) = c.frame(1);
        assert_eq!(f1.tx_bits, f2.tx_bits);
        assert_eq!(r1.y_grid, r2.y_grid);
        let (_, other) = c.frame(2);
        assert_ne!(r1.y_grid, other.y_grid);
    }

    #[test]
    fn corpus_descriptor_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.corpus");
        let c = small_corpus();
        c.save(&path).unwrap();
        let bytes1 = std::fs::read(&path).unwrap();
        c.save(&path).unwrap();
        let bytes2 = std::fs::read(&path).unwrap();
        assert_eq!(bytes1, bytes2, "descriptor bytes must be reproducible");
        let back = Corpus::load(&path).unwrap();
        let (f1, r1) = c.frame(0);
        let (f2, r2) = back.frame(0);
        assert_eq!(f1.tx_bits, f2.tx_bits);
        assert_eq!(r1.y_grid, r2.y_grid);
    }

    #[test]
    fn static_single_frame_corpus() {
        let mut c = small_corpus();
        c.scenario.fd = 0.0;
        c.n_frames = 1;
        let (_, rx) = c.frame(0);
        let genie = rx.genie_grid.unwrap();
        for k in 0..genie.nrows() {
            for s in 1..genie.ncols() {
                assert!((genie[[k, s]] - genie[[k, 0]]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn sbs_sequence_shapes_and_teacher_forcing() {
        let c = small_corpus();
        let (_, rx) = c.frame(0);
        let seq = sbs_training_sequence(&rx);
        assert_eq!(seq.xs.dim(), (10, 104));
        assert_eq!(seq.ys.dim(), (10, 96));
        // the data part of step i+1's input is the target of step i
        for i in 0..9 {
            for j in 0..96 {
                assert_eq!(seq.xs[[i + 1, 8 + j]], seq.ys[[i, j]]);
            }
        }
    }

    #[test]
    fn fbf_sequence_mask_covers_data_columns() {
        let mut c = small_corpus();
        c.mode = PilotAllocation::FbfBlock;
        c.n_data_symbols = 9;
        let (_, rx) = c.frame(0);
        let cfg = FbfPipelineConfig {
            layout: rx.layout.clone(),
            constellation: c.constellation(),
            n_taps: 8,
            include_preamble_column: true,
        };
        let (seq, mask) = fbf_training_sequence(&rx, &cfg).unwrap();
        assert_eq!(seq.xs.nrows(), 1 + 9 + 3);
        assert_eq!(mask.iter().filter(|&&m| m).count(), 9);
        assert!(!mask[0], "preamble column excluded from the loss");
    }
}
