//! Network composition: a recurrent cell (optionally paired with a backward
//! cell for bidirectional runs) followed by an affine readout.
//!
//! The readout is linear by default so the network can emit arbitrary real
//! values (stacked channel coefficients are signed); `sigma_head` squashes it
//! through a sigmoid for comparison against the plain SRNN output equation.

use super::cell::{cell_forward, CellKind, CellParams};
use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("sequence is empty")]
    EmptySequence,
    #[error("ensemble requires at least one model")]
    EmptyEnsemble,
    #[error("ensemble members have mismatched architectures")]
    ArchitectureMismatch,
}

/// Recurrent state threaded through a streamed unidirectional run.
#[derive(Debug, Clone)]
pub struct CellState {
    pub h: Array1<f64>,
    pub c: Option<Array1<f64>>,
}

impl CellState {
    /// Zero state, the sequence-start convention.
    pub fn zeros(p: &CellParams) -> Self {
        CellState {
            h: Array1::zeros(p.hidden_dim),
            c: match p.kind {
                CellKind::Lstm => Some(Array1::zeros(p.hidden_dim)),
                _ => None,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    pub cell: CellParams,
    /// Backward-direction cell; present iff the model is bidirectional.
    pub cell_bwd: Option<CellParams>,
    /// Readout weights, `out_dim x readout_width`.
    pub w_out: Array2<f64>,
    pub b_out: Array1<f64>,
    /// Apply a sigmoid after the readout (paper-style SRNN output head).
    pub sigma_head: bool,
}

impl NetworkModel {
    pub fn new(
        kind: CellKind,
        input_dim: usize,
        hidden_dim: usize,
        out_dim: usize,
        bidirectional: bool,
        rng: &mut ChaCha12Rng,
    ) -> Self {
        let cell = CellParams::init(kind, input_dim, hidden_dim, rng);
        let cell_bwd = bidirectional.then(|| CellParams::init(kind, input_dim, hidden_dim, rng));
        let width = if bidirectional { 2 * hidden_dim } else { hidden_dim };
        let bound = 1.0 / (width as f64).sqrt();
        let w_out = Array2::from_shape_fn((out_dim, width), |_| rng.gen::<f64>() * 2.0 * bound - bound);
        let b_out = Array1::zeros(out_dim);
        NetworkModel { cell, cell_bwd, w_out, b_out, sigma_head: false }
    }

    pub fn bidirectional(&self) -> bool {
        self.cell_bwd.is_some()
    }

    pub fn input_dim(&self) -> usize {
        self.cell.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.cell.hidden_dim
    }

    pub fn out_dim(&self) -> usize {
        self.w_out.nrows()
    }

    pub fn readout_width(&self) -> usize {
        self.w_out.ncols()
    }

    pub fn same_architecture(&self, other: &NetworkModel) -> bool {
        self.cell.same_shape(&other.cell)
            && self.bidirectional() == other.bidirectional()
            && self.w_out.dim() == other.w_out.dim()
            && self.sigma_head == other.sigma_head
    }

    fn apply_head(&self, mut pre: Array1<f64>) -> Array1<f64> {
        if self.sigma_head {
            pre.mapv_inplace(super::cell::sigmoid);
        }
        pre
    }

    /// Readout of a hidden (or concatenated) vector.
    pub fn readout(&self, h: &Array1<f64>) -> Array1<f64> {
        self.apply_head(self.w_out.dot(h) + &self.b_out)
    }

    /// One streamed step of a unidirectional model: advance the state, return
    /// the readout output.
    pub fn step(&self, state: &mut CellState, x: &Array1<f64>) -> Array1<f64> {
        assert!(!self.bidirectional(), "streamed steps are unidirectional");
        let x2 = x.view().insert_axis(Axis(0)).to_owned();
        let h2 = state.h.view().insert_axis(Axis(0)).to_owned();
        let c2 = state.c.as_ref().map(|c| c.view().insert_axis(Axis(0)).to_owned());
        let cache = cell_forward(&self.cell, &x2, &h2, c2.as_ref());
        state.h = cache.h.index_axis(Axis(0), 0).to_owned();
        if let Some(c) = cache.c {
            state.c = Some(c.index_axis(Axis(0), 0).to_owned());
        }
        self.readout(&state.h)
    }

    /// Hidden states of one direction over a batched sequence (inference).
    fn direction_pass(&self, params: &CellParams, xs: &[Array2<f64>], reverse: bool) -> Vec<Array2<f64>> {
        let batch = xs[0].nrows();
        let mut h = Array2::zeros((batch, params.hidden_dim));
        let mut c = match params.kind {
            CellKind::Lstm => Some(Array2::zeros((batch, params.hidden_dim))),
            _ => None,
        };
        let mut out = vec![Array2::zeros((0, 0)); xs.len()];
        let order: Vec<usize> =
            if reverse { (0..xs.len()).rev().collect() } else { (0..xs.len()).collect() };
        for t in order {
            let cache = cell_forward(params, &xs[t], &h, c.as_ref());
            h = cache.h.clone();
            if let Some(cc) = cache.c {
                c = Some(cc);
            }
            out[t] = cache.h;
        }
        out
    }

    /// Run a batched sequence; returns one `(batch, out_dim)` matrix per step.
    /// Bidirectional models concatenate forward and backward hidden states
    /// before the readout.
    pub fn run_sequence_batch(&self, xs: &[Array2<f64>]) -> Result<Vec<Array2<f64>>, ModelError> {
        if xs.is_empty() {
            return Err(ModelError::EmptySequence);
        }
        let fwd = self.direction_pass(&self.cell, xs, false);
        let bwd = self.cell_bwd.as_ref().map(|p| self.direction_pass(p, xs, true));
        let mut outs = Vec::with_capacity(xs.len());
        for t in 0..xs.len() {
            let joined = match &bwd {
                Some(b) => ndarray::concatenate(Axis(1), &[fwd[t].view(), b[t].view()]).unwrap(),
                None => fwd[t].clone(),
            };
            let mut o = joined.dot(&self.w_out.t());
            o += &self.b_out;
            if self.sigma_head {
                o.mapv_inplace(super::cell::sigmoid);
            }
            outs.push(o);
        }
        Ok(outs)
    }

    /// Run a single sequence of vectors.
    pub fn run_sequence(&self, xs: &[Array1<f64>]) -> Result<Vec<Array1<f64>>, ModelError> {
        let batched: Vec<Array2<f64>> =
            xs.iter().map(|x| x.view().insert_axis(Axis(0)).to_owned()).collect();
        let outs = self.run_sequence_batch(&batched)?;
        Ok(outs.into_iter().map(|o| o.index_axis(Axis(0), 0).to_owned()).collect())
    }

    /// Iterate over every parameter tensor (flattened views) in the
    /// serialization order.
    pub fn for_each_tensor(&self, mut f: impl FnMut(&[f64])) {
        let cells: Vec<&CellParams> =
            std::iter::once(&self.cell).chain(self.cell_bwd.as_ref()).collect();
        for p in cells {
            for g in 0..p.kind.n_gates() {
                f(p.w_x[g].as_slice().unwrap());
                f(p.w_h[g].as_slice().unwrap());
                f(p.b[g].as_slice().unwrap());
            }
        }
        f(self.w_out.as_slice().unwrap());
        f(self.b_out.as_slice().unwrap());
    }

    /// Mutable counterpart of [`Self::for_each_tensor`].
    pub fn for_each_tensor_mut(&mut self, mut f: impl FnMut(&mut [f64])) {
        let mut cells: Vec<&mut CellParams> = Vec::new();
        cells.push(&mut self.cell);
        if let Some(b) = self.cell_bwd.as_mut() {
            cells.push(b);
        }
        for p in cells {
            for g in 0..p.kind.n_gates() {
                f(p.w_x[g].as_slice_mut().unwrap());
                f(p.w_h[g].as_slice_mut().unwrap());
                f(p.b[g].as_slice_mut().unwrap());
            }
        }
        f(self.w_out.as_slice_mut().unwrap());
        f(self.b_out.as_slice_mut().unwrap());
    }
}

/// Elementwise arithmetic mean of the parameters of identically shaped models.
pub fn ensemble_average(models: &[NetworkModel]) -> Result<NetworkModel, ModelError> {
    let first = models.first().ok_or(ModelError::EmptyEnsemble)?;
    if models.iter().any(|m| !m.same_architecture(first)) {
        return Err(ModelError::ArchitectureMismatch);
    }
    let mut out = first.clone();
    let scale = 1.0 / models.len() as f64;
    let mut sums: Vec<Vec<f64>> = Vec::new();
    first.for_each_tensor(|t| sums.push(t.iter().map(|v| v * scale).collect()));
    for m in &models[1..] {
        let mut idx = 0;
        m.for_each_tensor(|t| {
            for (acc, v) in sums[idx].iter_mut().zip(t) {
                *acc += v * scale;
            }
            idx += 1;
        });
    }
    let mut idx = 0;
    out.for_each_tensor_mut(|t| {
        t.copy_from_slice(&sums[idx]);
        idx += 1;
    });
    Ok(out)
}
