//! Doubly-selective channel generation with Jakes Doppler spectrum.
//!
//! Each discrete delay tap evolves as an independent stationary complex
//! Gaussian process built from a Gaussian-weighted sum of sinusoids:
//!
//!   g(t) = sqrt(p/N) Σ_n A_n · exp(j(2π f_d cos(θ_n) t + φ_n)),  A_n ~ CN(0,1)
//!
//! with arrival angles θ_n and phases φ_n redrawn per realization. The
//! Gaussian weights make g exactly Rayleigh for any N, and averaging over the
//! uniform angles gives the Jakes autocorrelation J0(2π f_d τ) at every lag.
//! The frequency response over the active subcarriers follows through the
//! truncated DFT: H[:, s] = F_on · g[:, s].

use crate::dft::truncated_dft;
use ndarray::Array2;
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("power-delay profile is empty")]
    EmptyProfile,
    #[error("profile lists {gains} gains but {delays} delays")]
    LengthMismatch { gains: usize, delays: usize },
    #[error("invalid profile table: {0}")]
    Parse(String),
    #[error("correlation requires at least one realization with >= 2 symbols")]
    EmptyCorrelation,
}

/// Named multipath profile: average path gains (dB) and delays (ns), stored
/// sorted by delay.
#[derive(Debug, Clone)]
pub struct PowerDelayProfile {
    pub name: String,
    pub path_gains_db: Vec<f64>,
    pub path_delays_ns: Vec<f64>,
}

impl PowerDelayProfile {
    pub fn new(
        name: &str,
        gains_db: &[f64],
        delays_ns: &[f64],
    ) -> Result<Self, ChannelError> {
        if gains_db.is_empty() {
            return Err(ChannelError::EmptyProfile);
        }
        if gains_db.len() != delays_ns.len() {
            return Err(ChannelError::LengthMismatch { gains: gains_db.len(), delays: delays_ns.len() });
        }
        let mut paths: Vec<(f64, f64)> =
            delays_ns.iter().copied().zip(gains_db.iter().copied()).collect();
        paths.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        Ok(PowerDelayProfile {
            name: name.to_string(),
            path_gains_db: paths.iter().map(|p| p.1).collect(),
            path_delays_ns: paths.iter().map(|p| p.0).collect(),
        })
    }

    /// VTV Urban Canyon: 12 paths, used for the low-mobility scenario.
    pub fn vtv_uc() -> Self {
        PowerDelayProfile::new(
            "VTV-UC",
            &[0.0, 0.0, -10.0, -10.0, -10.0, -17.8, -17.8, -17.8, -21.1, -21.1, -26.3, -26.3],
            &[0.0, 1.0, 100.0, 101.0, 102.0, 200.0, 201.0, 202.0, 300.0, 301.0, 400.0, 401.0],
        )
        .unwrap()
    }

    /// VTV Same-Direction-With-Wall: 12 paths, used for the high and very
    /// high mobility scenarios.
    pub fn vtv_sdww() -> Self {
        PowerDelayProfile::new(
            "VTV-SDWW",
            &[0.0, 0.0, -11.2, -11.2, -19.0, -21.9, -25.3, -25.3, -24.4, -28.0, -26.1, -26.1],
            &[0.0, 1.0, 100.0, 101.0, 200.0, 300.0, 400.0, 401.0, 500.0, 600.0, 700.0, 701.0],
        )
        .unwrap()
    }

    /// Parse a plain-text profile table:
    ///
    /// ```text
    /// name = MY-PROFILE
    /// gains_db = 0, -3.5, -10
    /// delays_ns = 0, 100, 200
    /// ```
    ///
    /// Blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self, ChannelError> {
        let mut name = None;
        let mut gains = None;
        let mut delays = None;
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ChannelError::Parse(format!("expected key = value, got {line:?}")))?;
            let value = value.trim();
            match key.trim() {
                "name" => name = Some(value.to_string()),
                "gains_db" => gains = Some(parse_list(value)?),
                "delays_ns" => delays = Some(parse_list(value)?),
                other => return Err(ChannelError::Parse(format!("unknown key {other:?}"))),
            }
        }
        let name = name.ok_or_else(|| ChannelError::Parse("missing name".into()))?;
        let gains = gains.ok_or_else(|| ChannelError::Parse("missing gains_db".into()))?;
        let delays = delays.ok_or_else(|| ChannelError::Parse("missing delays_ns".into()))?;
        PowerDelayProfile::new(&name, &gains, &delays)
    }
}

fn parse_list(value: &str) -> Result<Vec<f64>, ChannelError> {
    value
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| ChannelError::Parse(format!("{v:?}: {e}"))))
        .collect()
}

/// Sum linear path powers into discrete taps at multiples of the sample
/// period (nearest-tap rounding). Returned powers are not yet normalized.
pub fn merge_paths(pdp: &PowerDelayProfile, sample_period_ns: f64) -> Vec<f64> {
    let max_delay = pdp.path_delays_ns.iter().cloned().fold(0.0, f64::max);
    let l = (max_delay / sample_period_ns).round() as usize + 1;
    let mut powers = vec![0.0; l];
    for (gain_db, delay) in pdp.path_gains_db.iter().zip(&pdp.path_delays_ns) {
        let tap = (delay / sample_period_ns).round() as usize;
        powers[tap] += 10f64.powf(gain_db / 10.0);
    }
    powers
}

/// Discrete tap powers, normalized to unit total power.
#[derive(Debug, Clone)]
pub struct TapSet {
    pub tap_powers: Vec<f64>,
    pub sample_period_ns: f64,
}

/// Discretize a power-delay profile onto the tap grid and normalize.
pub fn map_delays_to_taps(pdp: &PowerDelayProfile, sample_period_ns: f64) -> Result<TapSet, ChannelError> {
    if pdp.path_gains_db.is_empty() {
        return Err(ChannelError::EmptyProfile);
    }
    let mut powers = merge_paths(pdp, sample_period_ns);
    let total: f64 = powers.iter().sum();
    for p in &mut powers {
        *p /= total;
    }
    Ok(TapSet { tap_powers: powers, sample_period_ns })
}

impl TapSet {
    pub fn len(&self) -> usize {
        self.tap_powers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tap_powers.is_empty()
    }

    /// Single unit tap (flat channel).
    pub fn single_tap() -> Self {
        TapSet { tap_powers: vec![1.0], sample_period_ns: 100.0 }
    }
}

/// Jakes sum-of-sinusoids resolution. 32 sinusoids keep the sample spectrum
/// close to the Jakes shape while staying cheap per symbol.
pub const DEFAULT_SINUSOIDS: usize = 32;

/// One realization of the doubly-selective channel.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    /// Complex tap gains, `L x S`.
    pub g: Array2<Complex64>,
    /// Frequency response over the active rows, `Kon x S`.
    pub h: Array2<Complex64>,
    /// Maximum Doppler shift in Hz.
    pub fd: f64,
    /// OFDM symbol duration in seconds.
    pub symbol_duration: f64,
}

impl ChannelRealization {
    /// Deterministic flat unit channel (H = 1 everywhere); the AWGN reference.
    pub fn identity(kon: usize, n_symbols: usize) -> Self {
        ChannelRealization {
            g: Array2::from_elem((1, n_symbols), Complex64::new(1.0, 0.0)),
            h: Array2::from_elem((kon, n_symbols), Complex64::new(1.0, 0.0)),
            fd: 0.0,
            symbol_duration: 0.0,
        }
    }

    pub fn n_symbols(&self) -> usize {
        self.h.ncols()
    }
}

/// Generate one channel realization over `n_symbols` symbol instants.
///
/// `row_bins`/`k_total` define the truncated DFT that maps tap gains to the
/// active-subcarrier response. Identical RNG state yields an identical
/// realization bit for bit.
pub fn generate_channel(
    taps: &TapSet,
    fd: f64,
    n_symbols: usize,
    symbol_duration: f64,
    row_bins: &[usize],
    k_total: usize,
    n_sinusoids: usize,
    rng: &mut ChaCha12Rng,
) -> ChannelRealization {
    let l = taps.len();
    let mut g = Array2::from_elem((l, n_symbols), Complex64::default());
    for (tap, &power) in taps.tap_powers.iter().enumerate() {
        if power == 0.0 {
            continue;
        }
        let scale = (power / n_sinusoids as f64).sqrt();
        for _ in 0..n_sinusoids {
            let a_re: f64 = rng.sample(StandardNormal);
            let a_im: f64 = rng.sample(StandardNormal);
            let amp = Complex64::new(a_re, a_im) * std::f64::consts::FRAC_1_SQRT_2 * scale;
            let angle: f64 = rng.gen::<f64>() * 2.0 * PI;
            let phase: f64 = rng.gen::<f64>() * 2.0 * PI;
            let omega = 2.0 * PI * fd * angle.cos();
            for s in 0..n_symbols {
                let t = s as f64 * symbol_duration;
                g[[tap, s]] += amp * Complex64::from_polar(1.0, omega * t + phase);
            }
        }
    }
    let f_on = truncated_dft(row_bins, k_total, l);
    let h = f_on.dot(&g);
    ChannelRealization { g, h, fd, symbol_duration }
}

/// Average correlation between the first symbol and each successive symbol,
/// accumulated over realizations. The statistic is the real part of the
/// subcarrier-averaged cross-correlation, optionally normalized by the
/// first-symbol self term so the i -> 1 limit equals one.
#[derive(Debug, Clone)]
pub struct CorrelationAccumulator {
    cross: Vec<f64>,
    self_term: f64,
    n_symbols: usize,
    n_realizations: usize,
    pairs: usize,
}

impl CorrelationAccumulator {
    pub fn new(n_symbols: usize) -> Self {
        CorrelationAccumulator {
            cross: vec![0.0; n_symbols.saturating_sub(1)],
            self_term: 0.0,
            n_symbols,
            n_realizations: 0,
            pairs: 0,
        }
    }

    /// Fold in one realization's frequency response (`Kon x n_symbols`).
    pub fn add(&mut self, h: &Array2<Complex64>) {
        assert_eq!(h.ncols(), self.n_symbols, "realization length mismatch");
        let kon = h.nrows();
        for k in 0..kon {
            let h1 = h[[k, 0]];
            self.self_term += h1.norm_sqr();
            for i in 1..self.n_symbols {
                self.cross[i - 1] += (h1 * h[[k, i]].conj()).re;
            }
        }
        self.n_realizations += 1;
        self.pairs += kon;
    }

    /// Merge another accumulator over the same symbol count.
    pub fn merge(&mut self, other: &CorrelationAccumulator) {
        assert_eq!(self.n_symbols, other.n_symbols);
        for (a, b) in self.cross.iter_mut().zip(&other.cross) {
            *a += b;
        }
        self.self_term += other.self_term;
        self.n_realizations += other.n_realizations;
        self.pairs += other.pairs;
    }

    pub fn finish(self, normalize: bool, fd: f64) -> Result<CorrelationProfile, ChannelError> {
        if self.n_realizations == 0 || self.n_symbols < 2 {
            return Err(ChannelError::EmptyCorrelation);
        }
        let denom = if normalize { self.self_term } else { self.pairs as f64 };
        let psi = self.cross.iter().map(|&c| c / denom).collect();
        Ok(CorrelationProfile { psi, fd, n_symbols: self.n_symbols, n_realizations: self.n_realizations })
    }
}

/// Ensemble correlation profile; `psi[0]` corresponds to symbol index 2.
#[derive(Debug, Clone)]
pub struct CorrelationProfile {
    pub psi: Vec<f64>,
    pub fd: f64,
    pub n_symbols: usize,
    pub n_realizations: usize,
}

impl CorrelationProfile {
    /// Correlation of the first and last symbols of the frame.
    pub fn last(&self) -> f64 {
        *self.psi.last().expect("profile spans >= 2 symbols")
    }
}

/// Correlation profile of a batch of realizations.
pub fn average_correlation(
    realizations: &[ChannelRealization],
    normalize: bool,
) -> Result<CorrelationProfile, ChannelError> {
    let first = realizations.first().ok_or(ChannelError::EmptyCorrelation)?;
    if first.n_symbols() < 2 {
        return Err(ChannelError::EmptyCorrelation);
    }
    let mut acc = CorrelationAccumulator::new(first.n_symbols());
    for r in realizations {
        acc.add(&r.h);
    }
    acc.finish(normalize, first.fd)
}

#[doc(hidden)]
pub mod test_support {
    use super::*;
    use crate::rng::stream_rng;

    /// Arbitrary smooth nonzero channel for transmit-path tests.
    pub fn random_channel(kon: usize, n_symbols: usize, seed: u64) -> ChannelRealization {
        let mut rng = stream_rng(seed, &[0xc4a]);
        let h = Array2::from_shape_fn((kon, n_symbols), |_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            let v = Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2;
            // keep entries away from zero so ratios are well-conditioned
            if v.norm() < 0.2 {
                v + Complex64::new(0.5, 0.5)
            } else {
                v
            }
        });
        ChannelRealization { g: Array2::zeros((1, n_symbols)), h, fd: 0.0, symbol_duration: 8e-6 }
    }
}

/// Theoretical Jakes tap autocorrelation J0(2π f_d τ); series for small
/// arguments, Hankel asymptotics beyond. Used as the analytic reference in
/// tests and for closed-form interpolation weights.
pub fn bessel_j0(x: f64) -> f64 {
    let ax = x.abs();
    if ax < 8.0 {
        // power series with enough terms for < 1e-12 absolute error at x = 8
        let q = ax * ax / 4.0;
        let mut term = 1.0;
        let mut sum = 1.0;
        for m in 1..40 {
            term *= -q / ((m * m) as f64);
            sum += term;
            if term.abs() < 1e-17 {
                break;
            }
        }
        sum
    } else {
        // Hankel asymptotic expansion
        let z = 8.0 / ax;
        let y = z * z;
        let p0 = 1.0 + y * (-0.1098628627e-2 + y * (0.2734510407e-4 + y * (-0.2073370639e-5 + y * 0.2093887211e-6)));
        let q0 = -0.1562499995e-1 + y * (0.1430488765e-3 + y * (-0.6911147651e-5 + y * (0.7621095161e-6 + y * -0.934935152e-7)));
        let xx = ax - 0.785398164;
        (2.0 / (PI * ax)).sqrt() * (xx.cos() * p0 - z * xx.sin() * q0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    fn sdww_taps() -> TapSet {
        map_delays_to_taps(&PowerDelayProfile::vtv_sdww(), 100.0).unwrap()
    }

    #[test]
    fn bessel_j0_reference_values() {
        // frozen from an independent evaluation
        assert!((bessel_j0(0.0) - 1.0).abs() < 1e-14);
        assert!((bessel_j0(1.2566370614359172) - 0.64251183657757316).abs() < 1e-10);
        assert!((bessel_j0(4.9762827632862319) - (-0.1853337715603178)).abs() < 1e-10);
        assert!((bessel_j0(10.0) - (-0.2459357644513483)).abs() < 1e-7);
    }

    #[test]
    fn sdww_discretizes_to_eight_taps() {
        let taps = sdww_taps();
        assert_eq!(taps.len(), 8);
        let total: f64 = taps.tap_powers.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uc_subsample_paths_merge() {
        let pdp = PowerDelayProfile::vtv_uc();
        let merged = merge_paths(&pdp, 100.0);
        // paths at 0 ns and 1 ns, both 0 dB, land in tap 0 with power 2.0
        assert!((merged[0] - 2.0).abs() < 1e-12);
        let taps = map_delays_to_taps(&pdp, 100.0).unwrap();
        assert_eq!(taps.len(), 5);
    }

    #[test]
    fn single_path_profile() {
        let pdp = PowerDelayProfile::new("one", &[-3.0], &[250.0]).unwrap();
        let taps = map_delays_to_taps(&pdp, 100.0).unwrap();
        assert_eq!(taps.len(), 4);
        let nonzero: Vec<_> = taps.tap_powers.iter().filter(|&&p| p > 0.0).collect();
        assert_eq!(nonzero.len(), 1);
        assert!((taps.tap_powers[3] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_profile_rejected() {
        assert!(PowerDelayProfile::new("x", &[], &[]).is_err());
    }

    #[test]
    fn profile_parse_round_trip() {
        let text = "# comment\nname = CUSTOM\ngains_db = 0, -3\ndelays_ns = 0, 200\n";
        let pdp = PowerDelayProfile::parse(text).unwrap();
        assert_eq!(pdp.name, "CUSTOM");
        assert_eq!(pdp.path_delays_ns, vec![0.0, 200.0]);
        assert!(PowerDelayProfile::parse("name = X\n").is_err());
        assert!(PowerDelayProfile::parse("junk line").is_err());
    }

    #[test]
    fn profile_stored_sorted_by_delay() {
        let pdp = PowerDelayProfile::new("x", &[-3.0, 0.0], &[200.0, 0.0]).unwrap();
        assert_eq!(pdp.path_delays_ns, vec![0.0, 200.0]);
        assert_eq!(pdp.path_gains_db, vec![0.0, -3.0]);
    }

    #[test]
    fn zero_doppler_freezes_channel() {
        let taps = sdww_taps();
        let layout = crate::ofdm::FrameLayout::sbs_80211p(10);
        let mut rng = stream_rng(9, &[]);
        let ch = generate_channel(&taps, 0.0, 12, 8e-6, &layout.row_bins, 64, DEFAULT_SINUSOIDS, &mut rng);
        for l in 0..taps.len() {
            for s in 1..12 {
                assert!((ch.g[[l, s]] - ch.g[[l, 0]]).norm() < 1e-12);
            }
        }
        let profile = average_correlation(&[ch], true).unwrap();
        for &p in &profile.psi {
            assert!((p - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn determinism_bit_for_bit() {
        let taps = sdww_taps();
        let layout = crate::ofdm::FrameLayout::sbs_80211p(10);
        let a = generate_channel(&taps, 500.0, 10, 8e-6, &layout.row_bins, 64, 32, &mut stream_rng(3, &[7]));
        let b = generate_channel(&taps, 500.0, 10, 8e-6, &layout.row_bins, 64, 32, &mut stream_rng(3, &[7]));
        assert_eq!(a.g, b.g);
        assert_eq!(a.h, b.h);
    }

    #[test]
    fn frequency_response_consistent_with_taps() {
        let taps = sdww_taps();
        let layout = crate::ofdm::FrameLayout::sbs_80211p(10);
        let mut rng = stream_rng(10, &[]);
        let ch = generate_channel(&taps, 500.0, 6, 8e-6, &layout.row_bins, 64, 32, &mut rng);
        let f_on = truncated_dft(&layout.row_bins, 64, taps.len());
        let rebuilt = f_on.dot(&ch.g);
        let mut num = 0.0;
        let mut den = 0.0;
        for (a, b) in rebuilt.iter().zip(ch.h.iter()) {
            num += (a - b).norm_sqr();
            den += b.norm_sqr();
        }
        assert!(num / den < 1e-20);
    }

    #[test]
    fn correlation_requires_input() {
        assert!(average_correlation(&[], true).is_err());
    }

    #[test]
    fn tap_power_is_stationary_over_symbol_index() {
        let taps = sdww_taps();
        let layout = crate::ofdm::FrameLayout::sbs_80211p(1);
        let n_real = 2000;
        let s_len = 30;
        let mut first = 0.0;
        let mut last = 0.0;
        for r in 0..n_real {
            let mut rng = stream_rng(600, &[r]);
            let ch = generate_channel(&taps, 800.0, s_len, 8e-6, &layout.row_bins, 64, 32, &mut rng);
            for tap in 0..taps.len() {
                first += ch.g[[tap, 0]].norm_sqr();
                last += ch.g[[tap, s_len - 1]].norm_sqr();
            }
        }
        // total power at the first and last symbol agree within MC error
        assert!((first / last - 1.0).abs() < 0.05, "power drift {first} vs {last}");
    }

    #[test]
    fn ensemble_psi_decreases_monotonically() {
        // fd > 0: the smoothed ensemble correlation is non-increasing in i
        let taps = sdww_taps();
        let layout = crate::ofdm::FrameLayout::sbs_80211p(1);
        let i_syms = 40;
        let mut acc = CorrelationAccumulator::new(i_syms);
        for r in 0..1500u64 {
            let mut rng = stream_rng(601, &[r]);
            let ch = generate_channel(&taps, 500.0, i_syms, 8e-6, &layout.row_bins, 64, 32, &mut rng);
            acc.add(&ch.h);
        }
        let psi = acc.finish(true, 500.0).unwrap().psi;
        let window = 5usize;
        let smooth: Vec<f64> = (0..=psi.len() - window)
            .map(|i| psi[i..i + window].iter().sum::<f64>() / window as f64)
            .collect();
        for w in smooth.windows(2) {
            assert!(w[1] <= w[0] + 0.01, "smoothed psi increased: {} -> {}", w[0], w[1]);
        }
    }
}
