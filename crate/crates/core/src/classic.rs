//! Non-neural estimation primitives.
//!
//! - LS at the preamble (averaged over repeated preamble symbols) and at comb
//!   pilot subcarriers.
//! - Decision-directed DPA: demap the equalized data, re-divide the received
//!   signal by the hard decisions.
//! - Time averaging (TA) with the analytic noise-power ratio of the
//!   exponential smoother.
//! - SLS/ALS at full-pilot symbols: plain division, then projection onto the
//!   L-tap delay subspace spanned by a truncated DFT basis.
//! - Subframe grouping and MSE-optimal weighted interpolation (WI) between
//!   bounding pilot-symbol estimates.

use crate::channel::{bessel_j0, generate_channel, TapSet, DEFAULT_SINUSOIDS};
use crate::dft::{solve_complex, solve_real, truncated_dft};
use crate::ofdm::{Constellation, FrameLayout};
use crate::rng::stream_rng;
use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClassicError {
    #[error("pilot value is zero at position {0}")]
    ZeroPilot(usize),
    #[error("time-averaging weight must satisfy alpha >= 1, got {0}")]
    InvalidAlpha(f64),
    #[error("noise-ratio index must satisfy q >= 1, got {0}")]
    InvalidQ(i64),
    #[error("DFT basis is rank deficient (L = {l}, rows = {rows})")]
    RankDeficient { l: usize, rows: usize },
    #[error("layout carries no pilot symbols")]
    NoPilotSymbols,
    #[error("expected {expected} pilot-symbol estimates, got {got}")]
    EstimateCount { expected: usize, got: usize },
    #[error("weights do not cover the data symbols ({0})")]
    WeightCoverage(String),
    #[error("normal equations are singular")]
    SingularNormalEquations,
}

/// Threshold below which a DPA prior entry counts as degenerate.
pub const DEGENERATE_THRESHOLD: f64 = 1e-9;

/// Ridge added to interpolation normal equations.
pub const WI_RIDGE: f64 = 1e-8;

/// Estimator that produced a channel surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    LsPreamble,
    LsPilot,
    Dpa,
    DpaTa,
    Sls,
    Als,
    Wi,
    RnnDpaTa,
    BiRnn,
    Genie,
}

/// A complex channel-estimate surface over (subcarrier, symbol).
#[derive(Debug, Clone)]
pub struct EstimateMatrix {
    pub hhat: Array2<Complex64>,
    pub provenance: Provenance,
    /// True when columns are per received symbol (as opposed to per pilot symbol).
    pub per_symbol: bool,
}

impl EstimateMatrix {
    pub fn new(hhat: Array2<Complex64>, provenance: Provenance) -> Self {
        EstimateMatrix { hhat, provenance, per_symbol: true }
    }

    pub fn assert_finite(&self) {
        assert!(self.hhat.iter().all(|v| v.re.is_finite() && v.im.is_finite()), "non-finite estimate");
    }
}

/// LS estimate from `P` received preamble symbols:
/// `h[k] = sum_u y_u[k] / (P x_p[k])`. Averaging cuts the noise variance by `1/P`.
pub fn ls_preamble(
    rx_preamble: &Array2<Complex64>,
    pilot_seq: &Array1<Complex64>,
) -> Result<Array1<Complex64>, ClassicError> {
    let kon = rx_preamble.nrows();
    let p = rx_preamble.ncols();
    assert!(p >= 1, "at least one preamble symbol required");
    let mut out = Array1::from_elem(kon, Complex64::default());
    for k in 0..kon {
        if pilot_seq[k].norm() == 0.0 {
            return Err(ClassicError::ZeroPilot(k));
        }
        let sum: Complex64 = (0..p).map(|u| rx_preamble[[k, u]]).sum();
        out[k] = sum / (p as f64 * pilot_seq[k]);
    }
    Ok(out)
}

/// Single-symbol LS at pilot positions: elementwise `y[k] / x_p[k]`.
pub fn ls_pilot(
    y_at_pilots: &Array1<Complex64>,
    pilot_seq: &Array1<Complex64>,
) -> Result<Array1<Complex64>, ClassicError> {
    let mut out = Array1::from_elem(y_at_pilots.len(), Complex64::default());
    for k in 0..y_at_pilots.len() {
        if pilot_seq[k].norm() == 0.0 {
            return Err(ClassicError::ZeroPilot(k));
        }
        out[k] = y_at_pilots[k] / pilot_seq[k];
    }
    Ok(out)
}

/// Full-pilot-symbol LS over all active subcarriers (same arithmetic as
/// [`ls_pilot`], kept separate because it feeds the ALS projection).
pub fn sls_pilot_symbol(
    y_col: &Array1<Complex64>,
    pilot_seq: &Array1<Complex64>,
) -> Result<Array1<Complex64>, ClassicError> {
    ls_pilot(y_col, pilot_seq)
}

/// One decision-directed step.
#[derive(Debug, Clone)]
pub struct DpaStep {
    /// Hard symbol decisions.
    pub hard: Array1<Complex64>,
    /// Refreshed channel estimate `y / hard`.
    pub estimate: Array1<Complex64>,
    /// Subcarriers whose prior fell below [`DEGENERATE_THRESHOLD`].
    pub degenerate: Vec<usize>,
}

/// DPA step: `hard = D(y / prior)`, `estimate = y / hard`.
///
/// Prior entries below the degenerate threshold are replaced by `fallback`
/// (the most recent valid estimate) and reported; with no fallback the entry
/// keeps the prior and is still flagged.
pub fn dpa_step(
    y_d: &Array1<Complex64>,
    prior_d: &Array1<Complex64>,
    fallback: Option<&Array1<Complex64>>,
    c: &Constellation,
) -> DpaStep {
    let n = y_d.len();
    assert_eq!(prior_d.len(), n);
    let mut hard = Array1::from_elem(n, Complex64::default());
    let mut estimate = Array1::from_elem(n, Complex64::default());
    let mut degenerate = Vec::new();
    for k in 0..n {
        let mut prior = prior_d[k];
        if prior.norm() < DEGENERATE_THRESHOLD {
            degenerate.push(k);
            if let Some(f) = fallback {
                prior = f[k];
            }
            if prior.norm() < DEGENERATE_THRESHOLD {
                // last resort keeps the division finite
                prior = Complex64::new(1.0, 0.0);
            }
        }
        let d = c.demap(y_d[k] / prior);
        hard[k] = d;
        estimate[k] = y_d[k] / d;
    }
    DpaStep { hard, estimate, degenerate }
}

/// Time-averaging step: `(1 - 1/alpha) prev + (1/alpha) cur` elementwise.
pub fn ta_step(
    prev_ta: &Array1<Complex64>,
    cur_dpa: &Array1<Complex64>,
    alpha: f64,
) -> Result<Array1<Complex64>, ClassicError> {
    if !(alpha >= 1.0) {
        return Err(ClassicError::InvalidAlpha(alpha));
    }
    let w_prev = 1.0 - 1.0 / alpha;
    let w_cur = 1.0 / alpha;
    Ok(Array1::from_shape_fn(prev_ta.len(), |k| prev_ta[k] * w_prev + cur_dpa[k] * w_cur))
}

/// AWGN noise-power ratio after `q` time-averaging steps with alpha = 2:
/// `R_1 = 1`, `R_q = (4^(q-1) + 2) / (3 · 4^(q-1))`, decreasing towards 1/3.
pub fn ta_noise_ratio(q: i64) -> Result<f64, ClassicError> {
    if q < 1 {
        return Err(ClassicError::InvalidQ(q));
    }
    Ok((1.0 + 2.0 * 0.25f64.powi((q - 1) as i32)) / 3.0)
}

/// Truncated DFT basis of the L-tap delay subspace with its left
/// pseudo-inverse.
#[derive(Debug, Clone)]
pub struct DftBasis {
    pub f_on: Array2<Complex64>,
    pub f_pinv: Array2<Complex64>,
    pub l: usize,
}

impl DftBasis {
    pub fn new(row_bins: &[usize], k_total: usize, l: usize) -> Result<Self, ClassicError> {
        let rows = row_bins.len();
        if l > rows {
            return Err(ClassicError::RankDeficient { l, rows });
        }
        let f_on = truncated_dft(row_bins, k_total, l);
        let fh = conj_transpose(&f_on);
        let gram = fh.dot(&f_on);
        let f_pinv =
            solve_complex(&gram, &fh).ok_or(ClassicError::RankDeficient { l, rows })?;
        Ok(DftBasis { f_on, f_pinv, l })
    }

    /// Project an estimate onto the delay subspace: `F_on (F_pinv h)`.
    pub fn project(&self, est: &Array1<Complex64>) -> Array1<Complex64> {
        let col = est.view().insert_axis(ndarray::Axis(1));
        let taps = self.f_pinv.dot(&col);
        let back = self.f_on.dot(&taps);
        back.index_axis(ndarray::Axis(1), 0).to_owned()
    }
}

fn conj_transpose(a: &Array2<Complex64>) -> Array2<Complex64> {
    Array2::from_shape_fn((a.ncols(), a.nrows()), |(i, j)| a[[j, i]].conj())
}

/// ALS at a full-pilot symbol: SLS followed by the subspace projection.
pub fn als_pilot_symbol(
    y_col: &Array1<Complex64>,
    pilot_seq: &Array1<Complex64>,
    basis: &DftBasis,
) -> Result<Array1<Complex64>, ClassicError> {
    let sls = sls_pilot_symbol(y_col, pilot_seq)?;
    Ok(basis.project(&sls))
}

/// Where each pilot-symbol estimate sits in time and which data columns each
/// subframe covers. Times are absolute symbol indices within the transmitted
/// frame (preamble first); the preamble estimate sits at the mean preamble
/// time.
#[derive(Debug, Clone)]
pub struct SubframeGeometry {
    /// Q+1 estimate times, preamble first.
    pub est_times: Vec<f64>,
    /// Grid columns of the data symbols in each of the Q subframes.
    pub subframe_data_cols: Vec<Vec<usize>>,
    /// Offset from grid column to absolute symbol index.
    pub grid_offset: f64,
}

/// Build the subframe geometry of a block-pilot layout: subframe `f` is
/// bounded by estimate `f` (preamble for `f = 0`) and estimate `f + 1`.
pub fn subframe_geometry(layout: &FrameLayout) -> Result<SubframeGeometry, ClassicError> {
    let q = layout.n_pilot_symbols;
    if q == 0 {
        return Err(ClassicError::NoPilotSymbols);
    }
    let offset = layout.n_preambles as f64;
    let pilot_cols = layout.pilot_cols();
    let mut est_times = Vec::with_capacity(q + 1);
    est_times.push((layout.n_preambles as f64 - 1.0) / 2.0);
    for &col in &pilot_cols {
        est_times.push(offset + col as f64);
    }
    let mut subframe_data_cols = vec![Vec::new(); q];
    let mut f = 0usize;
    for col in 0..layout.grid_len() {
        if pilot_cols.contains(&col) {
            f += 1;
            continue;
        }
        subframe_data_cols[f.min(q - 1)].push(col);
    }
    Ok(SubframeGeometry { est_times, subframe_data_cols, grid_offset: offset })
}

/// Pilot-symbol estimates grouped into subframes.
#[derive(Debug, Clone)]
pub struct Subframes {
    pub geometry: SubframeGeometry,
    /// Q+1 estimates, preamble estimate first.
    pub estimates: Vec<Array1<Complex64>>,
}

/// Group pilot-symbol estimates (preamble first, then the Q pilot symbols in
/// order) into the WI subframes.
pub fn build_subframes(
    estimates: Vec<Array1<Complex64>>,
    layout: &FrameLayout,
) -> Result<Subframes, ClassicError> {
    let geometry = subframe_geometry(layout)?;
    if estimates.len() != geometry.est_times.len() {
        return Err(ClassicError::EstimateCount { expected: geometry.est_times.len(), got: estimates.len() });
    }
    Ok(Subframes { geometry, estimates })
}

/// Interpolation weights, one `2 x I_f` matrix per subframe.
#[derive(Debug, Clone)]
pub struct WiWeights {
    pub per_subframe: Vec<Array2<f64>>,
}

/// How WI weights are obtained.
#[derive(Debug, Clone)]
pub enum WiMethod {
    /// Least squares over simulated realizations, solved by (ridge
    /// regularized) normal equations.
    EmpiricalLs { n_realizations: usize, seed: u64 },
    /// Closed form from the Jakes time-correlation matrix and the pilot
    /// estimate noise variances.
    JakesClosedForm,
}

/// Inputs shared by both weight constructions.
#[derive(Debug, Clone)]
pub struct WiContext<'a> {
    pub taps: &'a TapSet,
    pub fd: f64,
    pub symbol_duration: f64,
    /// Noise variance per pilot-symbol estimate entry, preamble first (Q+1).
    pub pilot_noise_vars: Vec<f64>,
    pub row_bins: &'a [usize],
    pub k_total: usize,
}

/// MSE-optimal interpolation weights for every data symbol of every subframe.
pub fn wi_weights(
    geom: &SubframeGeometry,
    ctx: &WiContext,
    method: &WiMethod,
) -> Result<WiWeights, ClassicError> {
    match method {
        WiMethod::JakesClosedForm => wi_weights_jakes(geom, ctx),
        WiMethod::EmpiricalLs { n_realizations, seed } => {
            wi_weights_empirical(geom, ctx, *n_realizations, *seed)
        }
    }
}

fn wi_weights_jakes(geom: &SubframeGeometry, ctx: &WiContext) -> Result<WiWeights, ClassicError> {
    let corr = |dt: f64| bessel_j0(2.0 * std::f64::consts::PI * ctx.fd * dt * ctx.symbol_duration);
    let mut per_subframe = Vec::with_capacity(geom.subframe_data_cols.len());
    for (f, cols) in geom.subframe_data_cols.iter().enumerate() {
        let t_l = geom.est_times[f];
        let t_r = geom.est_times[f + 1];
        let v_l = ctx.pilot_noise_vars[f];
        let v_r = ctx.pilot_noise_vars[f + 1];
        let rho = corr(t_l - t_r);
        let a = Array2::from_shape_vec(
            (2, 2),
            vec![1.0 + v_l + WI_RIDGE, rho, rho, 1.0 + v_r + WI_RIDGE],
        )
        .unwrap();
        let mut c = Array2::zeros((2, cols.len()));
        for (j, &col) in cols.iter().enumerate() {
            let t_d = geom.grid_offset + col as f64;
            let b = Array1::from(vec![corr(t_l - t_d), corr(t_r - t_d)]);
            let w = solve_real(&a, &b).ok_or(ClassicError::SingularNormalEquations)?;
            c[[0, j]] = w[0];
            c[[1, j]] = w[1];
        }
        per_subframe.push(c);
    }
    Ok(WiWeights { per_subframe })
}

fn wi_weights_empirical(
    geom: &SubframeGeometry,
    ctx: &WiContext,
    n_realizations: usize,
    seed: u64,
) -> Result<WiWeights, ClassicError> {
    let q = geom.subframe_data_cols.len();
    let last_col = geom.subframe_data_cols.iter().flatten().copied().max().unwrap_or(0);
    let n_symbols = (geom.est_times[q].max(geom.grid_offset + last_col as f64) as usize) + 1;
    // normal-equation accumulators per subframe
    let mut a_acc = vec![[0.0f64; 4]; q];
    let mut b_acc: Vec<Array2<f64>> =
        geom.subframe_data_cols.iter().map(|c| Array2::zeros((2, c.len()))).collect();
    let mut count = 0usize;
    for r in 0..n_realizations {
        let mut rng = stream_rng(seed, &[0x71, r as u64]);
        let ch = generate_channel(
            ctx.taps,
            ctx.fd,
            n_symbols,
            ctx.symbol_duration,
            ctx.row_bins,
            ctx.k_total,
            DEFAULT_SINUSOIDS,
            &mut rng,
        );
        let kon = ch.h.nrows();
        // noisy pilot estimates at the estimate times
        let est: Vec<Array1<Complex64>> = geom
            .est_times
            .iter()
            .zip(&ctx.pilot_noise_vars)
            .map(|(&t, &v)| {
                let col = sample_time_column(&ch.h, t);
                let s = (v / 2.0).sqrt();
                Array1::from_shape_fn(kon, |k| {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    col[k] + Complex64::new(re * s, im * s)
                })
            })
            .collect();
        for f in 0..q {
            let (l, rr) = (&est[f], &est[f + 1]);
            a_acc[f][0] += l.iter().map(|v| v.norm_sqr()).sum::<f64>();
            a_acc[f][3] += rr.iter().map(|v| v.norm_sqr()).sum::<f64>();
            let cross: f64 = l.iter().zip(rr.iter()).map(|(a, b)| (a.conj() * b).re).sum();
            a_acc[f][1] += cross;
            a_acc[f][2] += cross;
            for (j, &col) in geom.subframe_data_cols[f].iter().enumerate() {
                let t = geom.grid_offset + col as f64;
                let truth = sample_time_column(&ch.h, t);
                b_acc[f][[0, j]] += l.iter().zip(truth.iter()).map(|(a, b)| (a.conj() * b).re).sum::<f64>();
                b_acc[f][[1, j]] += rr.iter().zip(truth.iter()).map(|(a, b)| (a.conj() * b).re).sum::<f64>();
            }
        }
        count += kon;
    }
    let norm = count as f64;
    let mut per_subframe = Vec::with_capacity(q);
    for f in 0..q {
        let a = Array2::from_shape_vec(
            (2, 2),
            vec![
                a_acc[f][0] / norm + WI_RIDGE,
                a_acc[f][1] / norm,
                a_acc[f][2] / norm,
                a_acc[f][3] / norm + WI_RIDGE,
            ],
        )
        .unwrap();
        let cols = geom.subframe_data_cols[f].len();
        let mut c = Array2::zeros((2, cols));
        for j in 0..cols {
            let b = Array1::from(vec![b_acc[f][[0, j]] / norm, b_acc[f][[1, j]] / norm]);
            let w = solve_real(&a, &b).ok_or(ClassicError::SingularNormalEquations)?;
            c[[0, j]] = w[0];
            c[[1, j]] = w[1];
        }
        per_subframe.push(c);
    }
    Ok(WiWeights { per_subframe })
}

fn sample_time_column(h: &Array2<Complex64>, t: f64) -> Array1<Complex64> {
    // estimate times are integers except the preamble mean; average the two
    // bracketing columns in that case
    let lo = t.floor() as usize;
    let hi = t.ceil() as usize;
    if lo == hi {
        h.column(lo).to_owned()
    } else {
        let w = t - lo as f64;
        Array1::from_shape_fn(h.nrows(), |k| h[[k, lo]] * (1.0 - w) + h[[k, hi]] * w)
    }
}

/// Apply interpolation weights: `H_wi = [h_left h_right] · C_f` per subframe,
/// concatenated over data symbols in grid order.
pub fn wi_interpolate(sub: &Subframes, weights: &WiWeights) -> Result<EstimateMatrix, ClassicError> {
    let q = sub.geometry.subframe_data_cols.len();
    if weights.per_subframe.len() != q {
        return Err(ClassicError::WeightCoverage(format!(
            "{} weight blocks for {} subframes",
            weights.per_subframe.len(),
            q
        )));
    }
    let kon = sub.estimates[0].len();
    let n_data: usize = sub.geometry.subframe_data_cols.iter().map(|c| c.len()).sum();
    let mut out = Array2::from_elem((kon, n_data), Complex64::default());
    let mut j_out = 0usize;
    for f in 0..q {
        let c = &weights.per_subframe[f];
        let cols = sub.geometry.subframe_data_cols[f].len();
        if c.ncols() != cols {
            return Err(ClassicError::WeightCoverage(format!(
                "subframe {f}: {} weight columns for {} data symbols",
                c.ncols(),
                cols
            )));
        }
        let left = &sub.estimates[f];
        let right = &sub.estimates[f + 1];
        for j in 0..cols {
            let (wl, wr) = (c[[0, j]], c[[1, j]]);
            for k in 0..kon {
                out[[k, j_out]] = left[k] * wl + right[k] * wr;
            }
            j_out += 1;
        }
    }
    Ok(EstimateMatrix::new(out, Provenance::Wi))
}
