//! End-to-end estimators.
//!
//! Symbol-by-symbol (SBS): per received symbol, a recurrent cell maps the
//! previous symbol's LS pilot estimates and fed-back time-averaged data
//! estimate to a fresh channel prior; DPA refreshes it against the hard
//! decisions and time averaging smooths the result. Strictly causal.
//!
//! Frame-by-frame (FBF): ALS estimates at the preamble and the inserted
//! full-pilot symbols are laid out on the frame axis with zeros at data
//! columns; a bidirectional cell interpolates the data-column channels in one
//! pass over the whole frame.

use crate::classic::{
    als_pilot_symbol, dpa_step, ls_pilot, ls_preamble, ta_step, DftBasis, EstimateMatrix,
    Provenance, Subframes, WiWeights, DEGENERATE_THRESHOLD,
};
use crate::ofdm::{column_at_rows, Constellation, FrameLayout, PilotAllocation, ReceivedFrame};
use crate::rnn::{CellState, NetworkModel};
use ndarray::{Array1, Array2};
use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("layout mode does not match the pipeline")]
    ModeMismatch,
    #[error("model dims {got_in}->{got_out} do not match the layout ({want_in}->{want_out})")]
    ModelDims { got_in: usize, got_out: usize, want_in: usize, want_out: usize },
    #[error("unstack requires an even length, got {0}")]
    OddLength(usize),
    #[error("received frame carries no genie channel")]
    MissingGenie,
    #[error(transparent)]
    Classic(#[from] crate::classic::ClassicError),
    #[error(transparent)]
    Model(#[from] crate::rnn::ModelError),
}

/// Stack a complex vector as `[Re; Im]`.
pub fn stack_real(h: &[Complex64]) -> Array1<f64> {
    let n = h.len();
    Array1::from_shape_fn(2 * n, |i| if i < n { h[i].re } else { h[i - n].im })
}

/// Inverse of [`stack_real`].
pub fn unstack_real(v: &[f64]) -> Result<Array1<Complex64>, PipelineError> {
    if v.len() % 2 != 0 {
        return Err(PipelineError::OddLength(v.len()));
    }
    let n = v.len() / 2;
    Ok(Array1::from_shape_fn(n, |i| Complex64::new(v[i], v[n + i])))
}

/// Output of one frame's estimation run.
#[derive(Debug, Clone)]
pub struct FrameEstimate {
    pub estimate: EstimateMatrix,
    pub bits: Vec<u8>,
    /// Subcarrier-steps where a degenerate (near-zero) divisor was replaced
    /// by the most recent valid estimate.
    pub degenerate_count: usize,
}

/// Symbol-by-symbol pipeline configuration.
#[derive(Debug, Clone)]
pub struct SbsPipelineConfig {
    pub layout: FrameLayout,
    pub constellation: Constellation,
    /// Time-averaging weight; 2 gives equal weight to the previous and
    /// current estimates.
    pub alpha: f64,
}

impl SbsPipelineConfig {
    pub fn input_dim(&self) -> usize {
        2 * self.layout.kon()
    }

    pub fn output_dim(&self) -> usize {
        2 * self.layout.kd()
    }
}

/// Equalize a symbol by a channel estimate and demap to bits.
///
/// Estimate entries below the degenerate threshold are substituted from
/// `fallback` and counted.
pub fn equalize_detect(
    y: &Array1<Complex64>,
    hhat: &Array1<Complex64>,
    fallback: Option<&Array1<Complex64>>,
    c: &Constellation,
) -> (Vec<u8>, usize) {
    let mut eq = Array1::from_elem(y.len(), Complex64::default());
    let mut degenerate = 0usize;
    for k in 0..y.len() {
        let mut h = hhat[k];
        if h.norm() < DEGENERATE_THRESHOLD {
            degenerate += 1;
            if let Some(f) = fallback {
                h = f[k];
            }
            if h.norm() < DEGENERATE_THRESHOLD {
                h = Complex64::new(1.0, 0.0);
            }
        }
        eq[k] = y[k] / h;
    }
    (c.demap_bits(eq.as_slice().unwrap()), degenerate)
}

fn pilot_vec(layout: &FrameLayout, n: usize) -> Array1<Complex64> {
    Array1::from_elem(n, layout.pilot_value)
}

/// Network-aided SBS estimation (the Φ-DPA-TA recursion).
///
/// Per symbol i: the cell consumes the stacked LS pilot estimates and the
/// stacked TA data estimate of symbol i-1 (the preamble LS for i = 1), its
/// readout is the DPA prior, DPA refreshes the estimate, TA smooths it, and
/// the smoothed estimate both equalizes symbol i and feeds symbol i+1.
pub fn sbs_estimate_frame(
    rx: &ReceivedFrame,
    model: &NetworkModel,
    cfg: &SbsPipelineConfig,
) -> Result<FrameEstimate, PipelineError> {
    let layout = &cfg.layout;
    if layout.mode != PilotAllocation::SbsComb {
        return Err(PipelineError::ModeMismatch);
    }
    if model.input_dim() != cfg.input_dim() || model.out_dim() != cfg.output_dim() || model.bidirectional() {
        return Err(PipelineError::ModelDims {
            got_in: model.input_dim(),
            got_out: model.out_dim(),
            want_in: cfg.input_dim(),
            want_out: cfg.output_dim(),
        });
    }
    let c = &cfg.constellation;
    let kd = layout.kd();
    let n_sym = layout.n_data_symbols;

    let pre_ls = ls_preamble(&rx.rx_preamble, &pilot_vec(layout, layout.kon()))?;
    let mut ta_prev = Array1::from_iter(layout.data_rows.iter().map(|&r| pre_ls[r]));
    let mut pilots_prev = Array1::from_iter(layout.pilot_rows.iter().map(|&r| pre_ls[r]));
    let mut last_valid = ta_prev.clone();

    let mut state = CellState::zeros(&model.cell);
    let mut estimate = Array2::from_elem((kd, n_sym), Complex64::default());
    let mut bits = Vec::with_capacity(layout.payload_bits(c.bits_per_symbol()));
    let mut degenerate = 0usize;

    for i in 0..n_sym {
        let mut input = Array1::zeros(2 * layout.kon());
        input.slice_mut(ndarray::s![..2 * layout.kp()]).assign(&stack_real(pilots_prev.as_slice().unwrap()));
        input.slice_mut(ndarray::s![2 * layout.kp()..]).assign(&stack_real(ta_prev.as_slice().unwrap()));
        let out = model.step(&mut state, &input);
        let prior = unstack_real(out.as_slice().unwrap())?;

        let y_d = column_at_rows(&rx.y_grid, &layout.data_rows, i);
        let step = dpa_step(&y_d, &prior, Some(&last_valid), c);
        degenerate += step.degenerate.len();
        let ta = ta_step(&ta_prev, &step.estimate, cfg.alpha)?;

        let (sym_bits, deg) = equalize_detect(&y_d, &ta, Some(&last_valid), c);
        degenerate += deg;
        bits.extend(sym_bits);
        for k in 0..kd {
            estimate[[k, i]] = ta[k];
            if ta[k].norm() >= DEGENERATE_THRESHOLD {
                last_valid[k] = ta[k];
            }
        }
        ta_prev = ta;
        let y_p = column_at_rows(&rx.y_grid, &layout.pilot_rows, i);
        pilots_prev = ls_pilot(&y_p, &pilot_vec(layout, layout.kp()))?;
    }
    Ok(FrameEstimate {
        estimate: EstimateMatrix::new(estimate, Provenance::RnnDpaTa),
        bits,
        degenerate_count: degenerate,
    })
}

/// Plain decision-directed DPA over a frame: the prior of symbol i is the
/// DPA estimate of symbol i-1 (preamble LS for i = 1). No network, no TA.
pub fn dpa_estimate_frame(
    rx: &ReceivedFrame,
    cfg: &SbsPipelineConfig,
) -> Result<FrameEstimate, PipelineError> {
    let layout = &cfg.layout;
    if layout.mode != PilotAllocation::SbsComb {
        return Err(PipelineError::ModeMismatch);
    }
    let c = &cfg.constellation;
    let kd = layout.kd();
    let n_sym = layout.n_data_symbols;
    let pre_ls = ls_preamble(&rx.rx_preamble, &pilot_vec(layout, layout.kon()))?;
    let mut prior = Array1::from_iter(layout.data_rows.iter().map(|&r| pre_ls[r]));
    let mut last_valid = prior.clone();
    let mut estimate = Array2::from_elem((kd, n_sym), Complex64::default());
    let mut bits = Vec::new();
    let mut degenerate = 0usize;
    for i in 0..n_sym {
        let y_d = column_at_rows(&rx.y_grid, &layout.data_rows, i);
        let step = dpa_step(&y_d, &prior, Some(&last_valid), c);
        degenerate += step.degenerate.len();
        bits.extend(c.demap_bits(step.hard.as_slice().unwrap()));
        for k in 0..kd {
            estimate[[k, i]] = step.estimate[k];
            if step.estimate[k].norm() >= DEGENERATE_THRESHOLD {
                last_valid[k] = step.estimate[k];
            }
        }
        prior = step.estimate;
    }
    Ok(FrameEstimate {
        estimate: EstimateMatrix::new(estimate, Provenance::Dpa),
        bits,
        degenerate_count: degenerate,
    })
}

/// Genie estimator: equalize with the true channel (performance lower bound).
pub fn genie_estimate_frame_with(
    rx: &ReceivedFrame,
    c: &Constellation,
) -> Result<FrameEstimate, PipelineError> {
    let layout = &rx.layout;
    let genie = rx.genie_grid.as_ref().ok_or(PipelineError::MissingGenie)?;
    let data_cols: Vec<usize> = match layout.mode {
        PilotAllocation::SbsComb => (0..layout.n_data_symbols).collect(),
        PilotAllocation::FbfBlock => layout.data_cols(),
    };
    let rows: &[usize] = &layout.data_rows;
    let mut estimate = Array2::from_elem((rows.len(), data_cols.len()), Complex64::default());
    let mut bits = Vec::new();
    let mut degenerate = 0usize;
    for (j, &col) in data_cols.iter().enumerate() {
        let y = column_at_rows(&rx.y_grid, rows, col);
        let h = column_at_rows(genie, rows, col);
        let (b, deg) = equalize_detect(&y, &h, None, c);
        degenerate += deg;
        bits.extend(b);
        for k in 0..rows.len() {
            estimate[[k, j]] = h[k];
        }
    }
    Ok(FrameEstimate {
        estimate: EstimateMatrix::new(estimate, Provenance::Genie),
        bits,
        degenerate_count: degenerate,
    })
}

/// Frame-by-frame pipeline configuration.
#[derive(Debug, Clone)]
pub struct FbfPipelineConfig {
    pub layout: FrameLayout,
    pub constellation: Constellation,
    /// Channel tap count assumed by the ALS projection.
    pub n_taps: usize,
    /// Feed the preamble ALS estimate as a leading known column so the first
    /// data block is bounded on both sides.
    pub include_preamble_column: bool,
}

impl FbfPipelineConfig {
    pub fn step_dim(&self) -> usize {
        2 * self.layout.kon()
    }

    pub fn basis(&self) -> Result<DftBasis, crate::classic::ClassicError> {
        DftBasis::new(&self.layout.row_bins, self.layout.k_total, self.n_taps)
    }
}

/// ALS estimates at the preamble and every full-pilot symbol, preamble first.
pub fn fbf_pilot_estimates(
    rx: &ReceivedFrame,
    cfg: &FbfPipelineConfig,
) -> Result<Vec<Array1<Complex64>>, PipelineError> {
    let layout = &cfg.layout;
    let basis = cfg.basis()?;
    let kon_pilots = pilot_vec(layout, layout.kon());
    let pre_ls = ls_preamble(&rx.rx_preamble, &kon_pilots)?;
    let mut ests = vec![basis.project(&pre_ls)];
    for &col in &layout.pilot_cols() {
        let y = rx.y_grid.column(col).to_owned();
        ests.push(als_pilot_symbol(&y, &kon_pilots, &basis)?);
    }
    Ok(ests)
}

/// Bi-RNN FBF estimation: ALS at the known columns, zeros at data columns,
/// one bidirectional pass, readout per data column, equalize and demap.
pub fn fbf_estimate_frame(
    rx: &ReceivedFrame,
    model: &NetworkModel,
    cfg: &FbfPipelineConfig,
) -> Result<FrameEstimate, PipelineError> {
    let layout = &cfg.layout;
    if layout.mode != PilotAllocation::FbfBlock {
        return Err(PipelineError::ModeMismatch);
    }
    if model.input_dim() != cfg.step_dim() || model.out_dim() != cfg.step_dim() || !model.bidirectional() {
        return Err(PipelineError::ModelDims {
            got_in: model.input_dim(),
            got_out: model.out_dim(),
            want_in: cfg.step_dim(),
            want_out: cfg.step_dim(),
        });
    }
    let ests = fbf_pilot_estimates(rx, cfg)?;
    let xs = fbf_input_sequence(&ests, layout, cfg.include_preamble_column);
    let outs = model.run_sequence(&xs)?;
    let offset = usize::from(cfg.include_preamble_column);
    let c = &cfg.constellation;
    let kon = layout.kon();
    let data_cols = layout.data_cols();
    let mut estimate = Array2::from_elem((kon, data_cols.len()), Complex64::default());
    let mut bits = Vec::new();
    let mut degenerate = 0usize;
    for (j, &col) in data_cols.iter().enumerate() {
        let hhat = unstack_real(outs[offset + col].as_slice().unwrap())?;
        let y = rx.y_grid.column(col).to_owned();
        let (b, deg) = equalize_detect(&y, &hhat, None, c);
        degenerate += deg;
        bits.extend(b);
        for k in 0..kon {
            estimate[[k, j]] = hhat[k];
        }
    }
    Ok(FrameEstimate {
        estimate: EstimateMatrix::new(estimate, Provenance::BiRnn),
        bits,
        degenerate_count: degenerate,
    })
}

/// Input sequence of the FBF network: pilot columns carry stacked ALS
/// estimates, data columns carry zeros, optionally preceded by the stacked
/// preamble ALS estimate.
pub fn fbf_input_sequence(
    pilot_ests: &[Array1<Complex64>],
    layout: &FrameLayout,
    include_preamble: bool,
) -> Vec<Array1<f64>> {
    let kon = layout.kon();
    let pilot_cols = layout.pilot_cols();
    let mut xs = Vec::with_capacity(layout.grid_len() + 1);
    if include_preamble {
        xs.push(stack_real(pilot_ests[0].as_slice().unwrap()));
    }
    for col in 0..layout.grid_len() {
        match pilot_cols.iter().position(|&p| p == col) {
            Some(q) => xs.push(stack_real(pilot_ests[q + 1].as_slice().unwrap())),
            None => xs.push(Array1::zeros(2 * kon)),
        }
    }
    xs
}

/// Classic ALS + weighted-interpolation estimator over one frame.
pub fn wi_estimate_frame(
    rx: &ReceivedFrame,
    weights: &WiWeights,
    cfg: &FbfPipelineConfig,
) -> Result<FrameEstimate, PipelineError> {
    let layout = &cfg.layout;
    if layout.mode != PilotAllocation::FbfBlock {
        return Err(PipelineError::ModeMismatch);
    }
    let ests = fbf_pilot_estimates(rx, cfg)?;
    let sub = Subframes { geometry: crate::classic::subframe_geometry(layout)?, estimates: ests };
    let wi = crate::classic::wi_interpolate(&sub, weights)?;
    let c = &cfg.constellation;
    let data_cols = layout.data_cols();
    let mut bits = Vec::new();
    let mut degenerate = 0usize;
    for (j, &col) in data_cols.iter().enumerate() {
        let y = rx.y_grid.column(col).to_owned();
        let hhat = wi.hhat.column(j).to_owned();
        let (b, deg) = equalize_detect(&y, &hhat, None, c);
        degenerate += deg;
        bits.extend(b);
    }
    Ok(FrameEstimate { estimate: wi, bits, degenerate_count: degenerate })
}
