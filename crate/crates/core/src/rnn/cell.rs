//! Recurrent cells: SRNN, LSTM, and GRU, with batched forward steps and the
//! exact backward passes used by BPTT.
//!
//! Gate equations (σ sigmoid, ⊙ Hadamard):
//!
//! SRNN:  h_t = σ(W_x x_t + W_h h_{t-1} + b)
//! LSTM:  f,i,o = σ(..), g = tanh(..), c_t = f ⊙ c_{t-1} + i ⊙ g,
//!        h_t = o ⊙ tanh(c_t)
//! GRU:   r,z = σ(..), n = tanh(W_x x_t + W_h (r ⊙ h_{t-1}) + b),
//!        h_t = (1 - z) ⊙ h_{t-1} + z ⊙ n
//!
//! Batches are row-major `(batch, dim)` matrices so the per-gate work is a
//! pair of GEMMs.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha12Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellKind {
    Srnn,
    Lstm,
    Gru,
}

impl CellKind {
    pub fn n_gates(self) -> usize {
        match self {
            CellKind::Srnn => 1,
            CellKind::Lstm => 4,
            CellKind::Gru => 3,
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            CellKind::Srnn => 0,
            CellKind::Lstm => 1,
            CellKind::Gru => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(CellKind::Srnn),
            1 => Some(CellKind::Lstm),
            2 => Some(CellKind::Gru),
            _ => None,
        }
    }
}

impl std::fmt::Display for CellKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CellKind::Srnn => write!(f, "srnn"),
            CellKind::Lstm => write!(f, "lstm"),
            CellKind::Gru => write!(f, "gru"),
        }
    }
}

/// Per-gate weights: `w_x[g]` is `hidden x input`, `w_h[g]` is
/// `hidden x hidden`, `b[g]` is `hidden`.
///
/// Gate order: SRNN `[h]`; LSTM `[forget, input, candidate, output]`;
/// GRU `[reset, update, candidate]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CellParams {
    pub kind: CellKind,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub w_x: Vec<Array2<f64>>,
    pub w_h: Vec<Array2<f64>>,
    pub b: Vec<Array1<f64>>,
}

impl CellParams {
    /// Uniform init in [-1/sqrt(P), 1/sqrt(P)], zero biases.
    pub fn init(kind: CellKind, input_dim: usize, hidden_dim: usize, rng: &mut ChaCha12Rng) -> Self {
        let bound = 1.0 / (hidden_dim as f64).sqrt();
        let mut uniform = |rows: usize, cols: usize| {
            Array2::from_shape_fn((rows, cols), |_| rng.gen::<f64>() * 2.0 * bound - bound)
        };
        let g = kind.n_gates();
        let w_x = (0..g).map(|_| uniform(hidden_dim, input_dim)).collect();
        let w_h = (0..g).map(|_| uniform(hidden_dim, hidden_dim)).collect();
        let b = (0..g).map(|_| Array1::zeros(hidden_dim)).collect();
        CellParams { kind, input_dim, hidden_dim, w_x, w_h, b }
    }

    pub fn zeros(kind: CellKind, input_dim: usize, hidden_dim: usize) -> Self {
        let g = kind.n_gates();
        CellParams {
            kind,
            input_dim,
            hidden_dim,
            w_x: (0..g).map(|_| Array2::zeros((hidden_dim, input_dim))).collect(),
            w_h: (0..g).map(|_| Array2::zeros((hidden_dim, hidden_dim))).collect(),
            b: (0..g).map(|_| Array1::zeros(hidden_dim)).collect(),
        }
    }

    pub fn same_shape(&self, other: &CellParams) -> bool {
        self.kind == other.kind
            && self.input_dim == other.input_dim
            && self.hidden_dim == other.hidden_dim
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn sigmoid_inplace(a: &mut Array2<f64>) {
    a.mapv_inplace(sigmoid);
}

fn tanh_inplace(a: &mut Array2<f64>) {
    a.mapv_inplace(f64::tanh);
}

/// Pre-activation of one gate for a batch: `x W_xᵀ + h W_hᵀ + b`.
fn gate_pre(p: &CellParams, g: usize, x: &Array2<f64>, h: &Array2<f64>) -> Array2<f64> {
    let mut a = x.dot(&p.w_x[g].t());
    a += &h.dot(&p.w_h[g].t());
    a += &p.b[g];
    a
}

/// Everything the backward pass needs from one forward step.
#[derive(Debug, Clone)]
pub struct CellCache {
    /// Activated gate values, same order as the parameter gates.
    pub gates: Vec<Array2<f64>>,
    pub h_prev: Array2<f64>,
    pub c_prev: Option<Array2<f64>>,
    /// GRU only: r ⊙ h_prev (the recurrent input of the candidate gate).
    pub r_h: Option<Array2<f64>>,
    /// LSTM only: tanh(c_t).
    pub tanh_c: Option<Array2<f64>>,
    pub h: Array2<f64>,
    pub c: Option<Array2<f64>>,
}

/// Batched forward step. `x` is `(batch, input)`, `h_prev` `(batch, hidden)`;
/// `c_prev` participates for LSTM only.
pub fn cell_forward(
    p: &CellParams,
    x: &Array2<f64>,
    h_prev: &Array2<f64>,
    c_prev: Option<&Array2<f64>>,
) -> CellCache {
    match p.kind {
        CellKind::Srnn => {
            let mut h = gate_pre(p, 0, x, h_prev);
            sigmoid_inplace(&mut h);
            CellCache {
                gates: vec![h.clone()],
                h_prev: h_prev.clone(),
                c_prev: None,
                r_h: None,
                tanh_c: None,
                h,
                c: None,
            }
        }
        CellKind::Lstm => {
            let c_prev = c_prev.expect("LSTM step requires a cell state").clone();
            let mut f = gate_pre(p, 0, x, h_prev);
            sigmoid_inplace(&mut f);
            let mut i = gate_pre(p, 1, x, h_prev);
            sigmoid_inplace(&mut i);
            let mut g = gate_pre(p, 2, x, h_prev);
            tanh_inplace(&mut g);
            let mut o = gate_pre(p, 3, x, h_prev);
            sigmoid_inplace(&mut o);
            let c = &f * &c_prev + &i * &g;
            let tanh_c = c.mapv(f64::tanh);
            let h = &o * &tanh_c;
            CellCache {
                gates: vec![f, i, g, o],
                h_prev: h_prev.clone(),
                c_prev: Some(c_prev),
                r_h: None,
                tanh_c: Some(tanh_c),
                h,
                c: Some(c),
            }
        }
        CellKind::Gru => {
            let mut r = gate_pre(p, 0, x, h_prev);
            sigmoid_inplace(&mut r);
            let mut z = gate_pre(p, 1, x, h_prev);
            sigmoid_inplace(&mut z);
            let r_h = &r * h_prev;
            let mut n = x.dot(&p.w_x[2].t());
            n += &r_h.dot(&p.w_h[2].t());
            n += &p.b[2];
            tanh_inplace(&mut n);
            let h = (1.0 - &z) * h_prev + &z * &n;
            CellCache {
                gates: vec![r, z, n],
                h_prev: h_prev.clone(),
                c_prev: None,
                r_h: Some(r_h),
                tanh_c: None,
                h,
                c: None,
            }
        }
    }
}

/// Gradient accumulator shaped like [`CellParams`].
#[derive(Debug, Clone)]
pub struct CellGrads {
    pub w_x: Vec<Array2<f64>>,
    pub w_h: Vec<Array2<f64>>,
    pub b: Vec<Array1<f64>>,
}

impl CellGrads {
    pub fn zeros_like(p: &CellParams) -> Self {
        CellGrads {
            w_x: p.w_x.iter().map(|w| Array2::zeros(w.dim())).collect(),
            w_h: p.w_h.iter().map(|w| Array2::zeros(w.dim())).collect(),
            b: p.b.iter().map(|b| Array1::zeros(b.len())).collect(),
        }
    }
}

fn accumulate(grads: &mut CellGrads, g: usize, da: &Array2<f64>, x: &Array2<f64>, rec: &Array2<f64>) {
    grads.w_x[g] += &da.t().dot(x);
    grads.w_h[g] += &da.t().dot(rec);
    grads.b[g] += &da.sum_axis(Axis(0));
}

/// Batched backward step. `dh`/`dc` are the loss gradients flowing into this
/// step's outputs; returns `(dx, dh_prev, dc_prev)` and accumulates parameter
/// gradients.
pub fn cell_backward(
    p: &CellParams,
    x: &Array2<f64>,
    cache: &CellCache,
    dh: &Array2<f64>,
    dc: Option<&Array2<f64>>,
    grads: &mut CellGrads,
) -> (Array2<f64>, Array2<f64>, Option<Array2<f64>>) {
    match p.kind {
        CellKind::Srnn => {
            let h = &cache.gates[0];
            let da = dh * h * (1.0 - h);
            accumulate(grads, 0, &da, x, &cache.h_prev);
            let dx = da.dot(&p.w_x[0]);
            let dh_prev = da.dot(&p.w_h[0]);
            (dx, dh_prev, None)
        }
        CellKind::Lstm => {
            let (f, i, g, o) = (&cache.gates[0], &cache.gates[1], &cache.gates[2], &cache.gates[3]);
            let c_prev = cache.c_prev.as_ref().unwrap();
            let tanh_c = cache.tanh_c.as_ref().unwrap();
            let mut dct = dh * o * (1.0 - tanh_c * tanh_c);
            if let Some(dc) = dc {
                dct += dc;
            }
            let da_f = &dct * c_prev * f * (1.0 - f);
            let da_i = &dct * g * i * (1.0 - i);
            let da_g = &dct * i * (1.0 - g * g);
            let da_o = dh * tanh_c * o * (1.0 - o);
            accumulate(grads, 0, &da_f, x, &cache.h_prev);
            accumulate(grads, 1, &da_i, x, &cache.h_prev);
            accumulate(grads, 2, &da_g, x, &cache.h_prev);
            accumulate(grads, 3, &da_o, x, &cache.h_prev);
            let dx = da_f.dot(&p.w_x[0]) + da_i.dot(&p.w_x[1]) + da_g.dot(&p.w_x[2]) + da_o.dot(&p.w_x[3]);
            let dh_prev =
                da_f.dot(&p.w_h[0]) + da_i.dot(&p.w_h[1]) + da_g.dot(&p.w_h[2]) + da_o.dot(&p.w_h[3]);
            let dc_prev = &dct * f;
            (dx, dh_prev, Some(dc_prev))
        }
        CellKind::Gru => {
            let (r, z, n) = (&cache.gates[0], &cache.gates[1], &cache.gates[2]);
            let h_prev = &cache.h_prev;
            let r_h = cache.r_h.as_ref().unwrap();
            let dz = dh * &(n - h_prev);
            let dn = dh * z;
            let mut dh_prev = dh * &(1.0 - z);
            let da_n = dn * (1.0 - n * n);
            let d_rh = da_n.dot(&p.w_h[2]);
            let dr = &d_rh * h_prev;
            dh_prev += &(&d_rh * r);
            let da_r = dr * r * (1.0 - r);
            let da_z = dz * z * (1.0 - z);
            accumulate(grads, 0, &da_r, x, h_prev);
            accumulate(grads, 1, &da_z, x, h_prev);
            accumulate(grads, 2, &da_n, x, r_h);
            dh_prev += &da_r.dot(&p.w_h[0]);
            dh_prev += &da_z.dot(&p.w_h[1]);
            let dx = da_r.dot(&p.w_x[0]) + da_z.dot(&p.w_x[1]) + da_n.dot(&p.w_x[2]);
            (dx, dh_prev, None)
        }
    }
}

fn row(v: &Array1<f64>) -> Array2<f64> {
    v.view().insert_axis(Axis(0)).to_owned()
}

fn unrow(m: Array2<f64>) -> Array1<f64> {
    m.index_axis(Axis(0), 0).to_owned()
}

/// Single-vector SRNN update: `h_t = σ(W_x x + W_h h_prev + b)`.
pub fn srnn_step(p: &CellParams, x: &Array1<f64>, h_prev: &Array1<f64>) -> Array1<f64> {
    assert_eq!(p.kind, CellKind::Srnn);
    unrow(cell_forward(p, &row(x), &row(h_prev), None).h)
}

/// Single-vector LSTM update; returns `(h_t, c_t)`.
pub fn lstm_step(
    p: &CellParams,
    x: &Array1<f64>,
    h_prev: &Array1<f64>,
    c_prev: &Array1<f64>,
) -> (Array1<f64>, Array1<f64>) {
    assert_eq!(p.kind, CellKind::Lstm);
    let cache = cell_forward(p, &row(x), &row(h_prev), Some(&row(c_prev)));
    (unrow(cache.h), unrow(cache.c.unwrap()))
}

/// Single-vector GRU update.
pub fn gru_step(p: &CellParams, x: &Array1<f64>, h_prev: &Array1<f64>) -> Array1<f64> {
    assert_eq!(p.kind, CellKind::Gru);
    unrow(cell_forward(p, &row(x), &row(h_prev), None).h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    #[test]
    fn srnn_zero_params_give_half() {
        let p = CellParams::zeros(CellKind::Srnn, 3, 4);
        let h = srnn_step(&p, &Array1::zeros(3), &Array1::zeros(4));
        for v in h.iter() {
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn srnn_ignores_zero_h_prev_weights_path() {
        let mut rng = stream_rng(20, &[]);
        let p = CellParams::init(CellKind::Srnn, 3, 4, &mut rng);
        let x = Array1::from(vec![0.3, -0.2, 0.8]);
        let h_zero = Array1::zeros(4);
        let a = srnn_step(&p, &x, &h_zero);
        // with h_prev = 0, w_h contributes nothing regardless of its values
        let mut p2 = p.clone();
        p2.w_h[0].fill(7.0);
        let b = srnn_step(&p2, &x, &h_zero);
        assert_eq!(a, b);
    }

    #[test]
    fn lstm_zero_params_halve_cell_state() {
        let p = CellParams::zeros(CellKind::Lstm, 2, 3);
        let c0 = Array1::from(vec![0.4, -1.0, 2.0]);
        let (h, c) = lstm_step(&p, &Array1::zeros(2), &Array1::zeros(3), &c0);
        for k in 0..3 {
            assert!((c[k] - 0.5 * c0[k]).abs() < 1e-15);
            assert!((h[k] - 0.5 * (0.5 * c0[k]).tanh()).abs() < 1e-15);
        }
        let (h0, c0) = lstm_step(&p, &Array1::zeros(2), &Array1::zeros(3), &Array1::zeros(3));
        assert!(h0.iter().all(|&v| v == 0.0));
        assert!(c0.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gru_zero_params_halve_hidden() {
        let p = CellParams::zeros(CellKind::Gru, 2, 3);
        let h_prev = Array1::from(vec![1.0, -0.6, 0.2]);
        let h = gru_step(&p, &Array1::zeros(2), &h_prev);
        for k in 0..3 {
            assert!((h[k] - 0.5 * h_prev[k]).abs() < 1e-15);
        }
        let h0 = gru_step(&p, &Array1::zeros(2), &Array1::zeros(3));
        assert!(h0.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gate_activations_bounded() {
        let mut rng = stream_rng(21, &[]);
        for kind in [CellKind::Srnn, CellKind::Lstm, CellKind::Gru] {
            let p = CellParams::init(kind, 5, 4, &mut rng);
            let x = Array2::from_shape_fn((3, 5), |_| rng.gen::<f64>() * 6.0 - 3.0);
            let h = Array2::from_shape_fn((3, 4), |_| rng.gen::<f64>() - 0.5);
            let c = Array2::from_shape_fn((3, 4), |_| rng.gen::<f64>() - 0.5);
            let cache = cell_forward(&p, &x, &h, Some(&c));
            let sig_gates: &[usize] = match kind {
                CellKind::Srnn => &[0],
                CellKind::Lstm => &[0, 1, 3],
                CellKind::Gru => &[0, 1],
            };
            for &g in sig_gates {
                assert!(cache.gates[g].iter().all(|&v| v > 0.0 && v < 1.0));
            }
            let tanh_gate: Option<usize> = match kind {
                CellKind::Lstm => Some(2),
                CellKind::Gru => Some(2),
                CellKind::Srnn => None,
            };
            if let Some(g) = tanh_gate {
                assert!(cache.gates[g].iter().all(|&v| v > -1.0 && v < 1.0));
            }
        }
    }

    #[test]
    fn gru_hidden_is_convex_combination() {
        let mut rng = stream_rng(22, &[]);
        let p = CellParams::init(CellKind::Gru, 4, 6, &mut rng);
        for _ in 0..20 {
            let x = Array1::from_shape_fn(4, |_| rng.gen::<f64>() * 4.0 - 2.0);
            let h_prev = Array1::from_shape_fn(6, |_| rng.gen::<f64>() * 2.0 - 1.0);
            let h = gru_step(&p, &x, &h_prev);
            let cache = cell_forward(&p, &row(&x), &row(&h_prev), None);
            let n = &cache.gates[2];
            for k in 0..6 {
                let lo = h_prev[k].min(n[[0, k]]) - 1e-12;
                let hi = h_prev[k].max(n[[0, k]]) + 1e-12;
                assert!(h[k] >= lo && h[k] <= hi);
            }
        }
    }
}
