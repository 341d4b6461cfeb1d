//! Shared test oracles: a straight-line scalar reference implementation of
//! the three recurrent cells (plain loops, no matrix library) and a central
//! finite-difference gradient checker. Both stay independent of the
//! implementation paths they verify.

#![allow(dead_code)]

use dsel_core::rnn::{bptt_gradients, CellParams, NetworkModel};
use ndarray::{Array1, Array2};

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// y = W x + W' h + b computed with explicit scalar loops.
fn affine_ref(w: &Array2<f64>, x: &[f64], wr: &Array2<f64>, h: &[f64], b: &Array1<f64>) -> Vec<f64> {
    let p = w.nrows();
    let mut out = vec![0.0; p];
    for i in 0..p {
        let mut acc = b[i];
        for (j, xv) in x.iter().enumerate() {
            acc += w[[i, j]] * xv;
        }
        for (j, hv) in h.iter().enumerate() {
            acc += wr[[i, j]] * hv;
        }
        out[i] = acc;
    }
    out
}

/// Scalar-loop SRNN step.
pub fn srnn_ref(p: &CellParams, x: &[f64], h_prev: &[f64]) -> Vec<f64> {
    affine_ref(&p.w_x[0], x, &p.w_h[0], h_prev, &p.b[0]).iter().map(|&a| sigmoid(a)).collect()
}

/// Scalar-loop LSTM step; gate order [forget, input, candidate, output].
pub fn lstm_ref(p: &CellParams, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let f: Vec<f64> =
        affine_ref(&p.w_x[0], x, &p.w_h[0], h_prev, &p.b[0]).iter().map(|&a| sigmoid(a)).collect();
    let i: Vec<f64> =
        affine_ref(&p.w_x[1], x, &p.w_h[1], h_prev, &p.b[1]).iter().map(|&a| sigmoid(a)).collect();
    let g: Vec<f64> =
        affine_ref(&p.w_x[2], x, &p.w_h[2], h_prev, &p.b[2]).iter().map(|&a| a.tanh()).collect();
    let o: Vec<f64> =
        affine_ref(&p.w_x[3], x, &p.w_h[3], h_prev, &p.b[3]).iter().map(|&a| sigmoid(a)).collect();
    let mut c = vec![0.0; f.len()];
    let mut h = vec![0.0; f.len()];
    for k in 0..f.len() {
        c[k] = f[k] * c_prev[k] + i[k] * g[k];
        h[k] = o[k] * c[k].tanh();
    }
    (h, c)
}

/// Scalar-loop GRU step; gate order [reset, update, candidate].
pub fn gru_ref(p: &CellParams, x: &[f64], h_prev: &[f64]) -> Vec<f64> {
    let r: Vec<f64> =
        affine_ref(&p.w_x[0], x, &p.w_h[0], h_prev, &p.b[0]).iter().map(|&a| sigmoid(a)).collect();
    let z: Vec<f64> =
        affine_ref(&p.w_x[1], x, &p.w_h[1], h_prev, &p.b[1]).iter().map(|&a| sigmoid(a)).collect();
    let rh: Vec<f64> = r.iter().zip(h_prev).map(|(rv, hv)| rv * hv).collect();
    let n: Vec<f64> =
        affine_ref(&p.w_x[2], x, &p.w_h[2], &rh, &p.b[2]).iter().map(|&a| a.tanh()).collect();
    (0..n.len()).map(|k| (1.0 - z[k]) * h_prev[k] + z[k] * n[k]).collect()
}

/// Loss evaluated through the forward path only (no gradient machinery).
pub fn forward_mse(
    model: &NetworkModel,
    xs: &[Array2<f64>],
    ys: &[Array2<f64>],
    mask: Option<&[bool]>,
) -> f64 {
    let outs = model.run_sequence_batch(xs).unwrap();
    let mut num = 0.0;
    let mut count = 0usize;
    for (t, (o, y)) in outs.iter().zip(ys).enumerate() {
        if let Some(m) = mask {
            if !m[t] {
                continue;
            }
        }
        for (a, b) in o.iter().zip(y.iter()) {
            num += (a - b) * (a - b);
            count += 1;
        }
    }
    num / count as f64
}

/// Largest guarded relative error between BPTT gradients and central finite
/// differences over every parameter of the model.
pub fn max_gradcheck_error(
    model: &NetworkModel,
    xs: &[Array2<f64>],
    ys: &[Array2<f64>],
    mask: Option<&[bool]>,
    step: f64,
) -> f64 {
    let (grads, _) = bptt_gradients(model, xs, ys, mask).unwrap();
    let mut flat_grads = Vec::new();
    grads.for_each_tensor(|t| flat_grads.extend_from_slice(t));

    let mut n_params = 0usize;
    model.for_each_tensor(|t| n_params += t.len());
    assert_eq!(n_params, flat_grads.len());

    let mut worst = 0.0f64;
    for idx in 0..n_params {
        let bump = |delta: f64| {
            let mut m = model.clone();
            let mut seen = 0usize;
            m.for_each_tensor_mut(|t| {
                if idx >= seen && idx < seen + t.len() {
                    t[idx - seen] += delta;
                }
                seen += t.len();
            });
            forward_mse(&m, xs, ys, mask)
        };
        let fd = (bump(step) - bump(-step)) / (2.0 * step);
        let bp = flat_grads[idx];
        let rel = (fd - bp).abs() / fd.abs().max(bp.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    worst
}
