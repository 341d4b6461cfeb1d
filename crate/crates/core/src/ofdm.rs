//! Frame construction, Gray-mapped QAM, and the per-subcarrier transmit model.
//!
//! Everything here lives in the frequency domain: a transmitted symbol is a
//! column over the active subcarriers, the channel acts multiplicatively per
//! entry, and noise is circular complex Gaussian. Null guard subcarriers are
//! never materialized; matrices hold active rows only, ordered by increasing
//! physical frequency.

use crate::channel::ChannelRealization;
use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OfdmError {
    #[error("unsupported modulation order {0} (expected 4, 16, or 64)")]
    UnsupportedOrder(usize),
    #[error("bit count {got} is not a multiple of {per_symbol} bits per symbol")]
    RaggedBits { got: usize, per_symbol: usize },
    #[error("payload holds {got} bits, layout requires {expected}")]
    PayloadSize { got: usize, expected: usize },
    #[error("channel spans {got} symbols, frame requires {expected}")]
    ChannelSpan { got: usize, expected: usize },
    #[error("invalid frame layout: {0}")]
    Layout(String),
}

/// Pilot allocation scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PilotAllocation {
    /// Comb pilots: a few pilot subcarriers in every data symbol.
    SbsComb,
    /// Block pilots: full-pilot symbols inserted periodically, data symbols
    /// carry data on all active subcarriers.
    FbfBlock,
}

/// Subcarrier and symbol allocation for one frame.
///
/// Active subcarriers are stored as physical FFT bins (`0..k_total`, negative
/// frequencies wrapped) in increasing-frequency order; `data_rows` and
/// `pilot_rows` index into that order.
#[derive(Debug, Clone)]
pub struct FrameLayout {
    /// FFT size K.
    pub k_total: usize,
    /// Physical FFT bin per active row, increasing-frequency order.
    pub row_bins: Vec<usize>,
    /// Active-row indices carrying data (comb mode) or all rows (block mode).
    pub data_rows: Vec<usize>,
    /// Active-row indices carrying comb pilots (empty in block mode).
    pub pilot_rows: Vec<usize>,
    /// Data symbols per frame (I).
    pub n_data_symbols: usize,
    /// Preamble symbols prepended to the frame (P).
    pub n_preambles: usize,
    /// Inserted full-pilot symbols (Q, block mode only).
    pub n_pilot_symbols: usize,
    pub mode: PilotAllocation,
    /// Value transmitted on every pilot position (unit modulus).
    pub pilot_value: Complex64,
}

impl FrameLayout {
    /// 802.11p comb layout: K = 64, 52 active subcarriers (-26..26 without
    /// DC), pilots at {-21, -7, 7, 21}, two preambles.
    pub fn sbs_80211p(n_data_symbols: usize) -> Self {
        let (row_bins, pilot_rows, data_rows) = bins_80211p(true);
        FrameLayout {
            k_total: 64,
            row_bins,
            data_rows,
            pilot_rows,
            n_data_symbols,
            n_preambles: 2,
            n_pilot_symbols: 0,
            mode: PilotAllocation::SbsComb,
            pilot_value: Complex64::new(1.0, 0.0),
        }
    }

    /// 802.11p block layout: all 52 active subcarriers carry data; `q`
    /// full-pilot symbols close out equal blocks of data symbols.
    pub fn fbf_80211p(n_data_symbols: usize, q: usize) -> Self {
        let (row_bins, _, _) = bins_80211p(true);
        let kon = row_bins.len();
        FrameLayout {
            k_total: 64,
            row_bins,
            data_rows: (0..kon).collect(),
            pilot_rows: Vec::new(),
            n_data_symbols,
            n_preambles: 2,
            n_pilot_symbols: q,
            mode: PilotAllocation::FbfBlock,
            pilot_value: Complex64::new(1.0, 0.0),
        }
    }

    pub fn validate(&self) -> Result<(), OfdmError> {
        let kon = self.row_bins.len();
        let err = |m: String| Err(OfdmError::Layout(m));
        if kon == 0 || kon > self.k_total {
            return err(format!("{kon} active rows with K = {}", self.k_total));
        }
        let mut seen = vec![false; self.k_total];
        for &b in &self.row_bins {
            if b >= self.k_total || seen[b] {
                return err(format!("bin {b} out of range or duplicated"));
            }
            seen[b] = true;
        }
        let mut covered = vec![0u8; kon];
        for &r in &self.data_rows {
            covered[r] += 1;
        }
        for &r in &self.pilot_rows {
            covered[r] += 1;
        }
        if covered.iter().any(|&c| c != 1) {
            return err("data and pilot rows must partition the active rows".into());
        }
        match self.mode {
            PilotAllocation::SbsComb => {
                if self.n_pilot_symbols != 0 {
                    return err("comb mode carries no pilot symbols".into());
                }
            }
            PilotAllocation::FbfBlock => {
                if !self.pilot_rows.is_empty() {
                    return err("block mode carries no pilot subcarriers".into());
                }
                if self.n_pilot_symbols == 0 {
                    return err("block mode requires Q >= 1 pilot symbols".into());
                }
            }
        }
        if self.pilot_value.norm() == 0.0 {
            return err("pilot value must be nonzero".into());
        }
        Ok(())
    }

    /// Number of active subcarriers.
    pub fn kon(&self) -> usize {
        self.row_bins.len()
    }

    pub fn kd(&self) -> usize {
        self.data_rows.len()
    }

    pub fn kp(&self) -> usize {
        self.pilot_rows.len()
    }

    /// Null guard bins (complement of the active set).
    pub fn null_bins(&self) -> Vec<usize> {
        let mut active = vec![false; self.k_total];
        for &b in &self.row_bins {
            active[b] = true;
        }
        (0..self.k_total).filter(|&b| !active[b]).collect()
    }

    /// Columns in the data/pilot-symbol grid (preamble excluded).
    pub fn grid_len(&self) -> usize {
        self.n_data_symbols + self.n_pilot_symbols
    }

    /// Total symbols a channel realization must span.
    pub fn total_symbols(&self) -> usize {
        self.n_preambles + self.grid_len()
    }

    /// Data-block sizes in block mode: `I` split into `Q` near-equal runs,
    /// each closed by one pilot symbol.
    pub fn block_sizes(&self) -> Vec<usize> {
        let q = self.n_pilot_symbols;
        if q == 0 {
            return vec![self.n_data_symbols];
        }
        let base = self.n_data_symbols / q;
        let extra = self.n_data_symbols % q;
        (0..q).map(|f| base + usize::from(f < extra)).collect()
    }

    /// Grid columns holding full-pilot symbols (block mode).
    pub fn pilot_cols(&self) -> Vec<usize> {
        let mut cols = Vec::with_capacity(self.n_pilot_symbols);
        let mut pos = 0;
        for size in self.block_sizes().iter().take(self.n_pilot_symbols) {
            pos += size;
            cols.push(pos);
            pos += 1;
        }
        cols
    }

    /// Grid columns holding data symbols, in order.
    pub fn data_cols(&self) -> Vec<usize> {
        let pilots = self.pilot_cols();
        (0..self.grid_len()).filter(|c| !pilots.contains(c)).collect()
    }

    /// Bits carried by one frame.
    pub fn payload_bits(&self, bits_per_symbol: usize) -> usize {
        match self.mode {
            PilotAllocation::SbsComb => self.kd() * self.n_data_symbols * bits_per_symbol,
            PilotAllocation::FbfBlock => self.kon() * self.n_data_symbols * bits_per_symbol,
        }
    }
}

fn bins_80211p(with_pilots: bool) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let k = 64usize;
    let freqs: Vec<i32> = (-26..=26).filter(|&f| f != 0).collect();
    let row_bins: Vec<usize> = freqs.iter().map(|&f| f.rem_euclid(k as i32) as usize).collect();
    let pilot_freqs = [-21, -7, 7, 21];
    let pilot_rows: Vec<usize> = if with_pilots {
        pilot_freqs
            .iter()
            .map(|p| freqs.iter().position(|f| f == p).unwrap())
            .collect()
    } else {
        Vec::new()
    };
    let data_rows: Vec<usize> = (0..row_bins.len()).filter(|r| !pilot_rows.contains(r)).collect();
    (row_bins, pilot_rows, data_rows)
}

/// Gray-mapped square QAM with unit average energy.
///
/// Point index `i` encodes its bit label directly: the high half of the bits
/// selects the in-phase level, the low half the quadrature level, each half a
/// Gray code over levels in decreasing order (so the all-zeros label sits in
/// the first quadrant).
#[derive(Debug, Clone)]
pub struct Constellation {
    pub order: usize,
    pub points: Vec<Complex64>,
    bits_per_axis: usize,
    /// Levels in decreasing order, already energy-normalized.
    levels: Vec<f64>,
    /// `gray[b]` is the Gray label of descending-level position `b`.
    gray: Vec<usize>,
}

/// Build a unit-average-energy Gray-mapped constellation of order 4, 16, or 64.
pub fn build_constellation(order: usize) -> Result<Constellation, OfdmError> {
    let bits = match order {
        4 => 2,
        16 => 4,
        64 => 6,
        other => return Err(OfdmError::UnsupportedOrder(other)),
    };
    let bits_per_axis = bits / 2;
    let side = 1usize << bits_per_axis;
    // Unnormalized levels …, 3, 1, -1, -3, …; average point energy of the
    // square grid is 2 (side^2 - 1) / 3.
    let norm = ((2 * (side * side - 1)) as f64 / 3.0).sqrt();
    let levels: Vec<f64> = (0..side).map(|b| (side as f64 - 1.0 - 2.0 * b as f64) / norm).collect();
    let gray: Vec<usize> = (0..side).map(|b| b ^ (b >> 1)).collect();
    let mut pos_of_gray = vec![0usize; side];
    for (pos, &g) in gray.iter().enumerate() {
        pos_of_gray[g] = pos;
    }
    let mut points = vec![Complex64::default(); order];
    for idx in 0..order {
        let gi = idx >> bits_per_axis;
        let gq = idx & (side - 1);
        points[idx] = Complex64::new(levels[pos_of_gray[gi]], levels[pos_of_gray[gq]]);
    }
    Ok(Constellation { order, points, bits_per_axis, levels, gray })
}

impl Constellation {
    pub fn bits_per_symbol(&self) -> usize {
        2 * self.bits_per_axis
    }

    /// Map bits (MSB first per symbol) to constellation points.
    pub fn modulate(&self, bits: &[u8]) -> Result<Vec<Complex64>, OfdmError> {
        let bps = self.bits_per_symbol();
        if bits.len() % bps != 0 {
            return Err(OfdmError::RaggedBits { got: bits.len(), per_symbol: bps });
        }
        Ok(bits
            .chunks_exact(bps)
            .map(|chunk| {
                let idx = chunk.iter().fold(0usize, |acc, &b| (acc << 1) | usize::from(b != 0));
                self.points[idx]
            })
            .collect())
    }

    /// Index of the Euclidean-nearest point; ties resolve to the lowest index.
    ///
    /// Nearest-point search on a square Gray grid separates per axis; the
    /// joint lowest-index tie rule separates too because the index is
    /// `gray_i << bits | gray_q`.
    pub fn demap_index(&self, y: Complex64) -> usize {
        let gi = self.demap_axis(y.re);
        let gq = self.demap_axis(y.im);
        (gi << self.bits_per_axis) | gq
    }

    fn demap_axis(&self, v: f64) -> usize {
        let mut best = (f64::INFINITY, usize::MAX);
        for (pos, &level) in self.levels.iter().enumerate() {
            let d = (v - level) * (v - level);
            let key = (d, self.gray[pos]);
            if key < best {
                best = key;
            }
        }
        best.1
    }

    /// Hard decision: Euclidean-nearest constellation point (operator D).
    pub fn demap(&self, y: Complex64) -> Complex64 {
        self.points[self.demap_index(y)]
    }

    /// Hard decisions for a slice of observations.
    pub fn demap_all(&self, ys: &[Complex64]) -> Vec<Complex64> {
        ys.iter().map(|&y| self.demap(y)).collect()
    }

    /// Bits (MSB first) of the nearest point per observation.
    pub fn demap_bits(&self, ys: &[Complex64]) -> Vec<u8> {
        let bps = self.bits_per_symbol();
        let mut bits = Vec::with_capacity(ys.len() * bps);
        for &y in ys {
            let idx = self.demap_index(y);
            for b in (0..bps).rev() {
                bits.push(((idx >> b) & 1) as u8);
            }
        }
        bits
    }
}

/// Hard symbols for a sequence of observations (operator D of the DPA loop).
pub fn demap(ys: &[Complex64], c: &Constellation) -> Vec<Complex64> {
    c.demap_all(ys)
}

/// Map a bit payload onto constellation symbols.
pub fn modulate(bits: &[u8], c: &Constellation) -> Result<Vec<Complex64>, OfdmError> {
    c.modulate(bits)
}

/// One transmitted frame: preamble columns plus the data/pilot-symbol grid.
#[derive(Debug, Clone)]
pub struct Frame {
    /// Active-row grid, `kon x grid_len`.
    pub grid: Array2<Complex64>,
    /// Preamble columns, `kon x n_preambles`.
    pub preamble: Array2<Complex64>,
    pub layout: FrameLayout,
    pub tx_bits: Vec<u8>,
}

/// Modulate a payload and place it on the frame grid.
///
/// Comb mode fills data rows column by column; block mode fills whole data
/// columns and inserts full-pilot columns at the block boundaries. Pilot
/// positions and preambles carry the layout's fixed pilot value.
pub fn assemble_frame(bits: &[u8], layout: &FrameLayout, c: &Constellation) -> Result<Frame, OfdmError> {
    layout.validate()?;
    let expected = layout.payload_bits(c.bits_per_symbol());
    if bits.len() != expected {
        return Err(OfdmError::PayloadSize { got: bits.len(), expected });
    }
    let symbols = c.modulate(bits)?;
    let kon = layout.kon();
    let mut grid = Array2::from_elem((kon, layout.grid_len()), Complex64::default());
    match layout.mode {
        PilotAllocation::SbsComb => {
            let mut it = symbols.iter();
            for i in 0..layout.n_data_symbols {
                for &r in &layout.data_rows {
                    grid[[r, i]] = *it.next().unwrap();
                }
                for &r in &layout.pilot_rows {
                    grid[[r, i]] = layout.pilot_value;
                }
            }
        }
        PilotAllocation::FbfBlock => {
            let pilot_cols = layout.pilot_cols();
            let mut it = symbols.iter();
            for col in 0..layout.grid_len() {
                if pilot_cols.contains(&col) {
                    for r in 0..kon {
                        grid[[r, col]] = layout.pilot_value;
                    }
                } else {
                    for r in 0..kon {
                        grid[[r, col]] = *it.next().unwrap();
                    }
                }
            }
        }
    }
    let preamble = Array2::from_elem((kon, layout.n_preambles), layout.pilot_value);
    Ok(Frame { grid, preamble, layout: layout.clone(), tx_bits: bits.to_vec() })
}

/// One received frame: the noisy grid plus the true channel for supervision.
#[derive(Debug, Clone)]
pub struct ReceivedFrame {
    /// Received data/pilot-symbol grid, `kon x grid_len`.
    pub y_grid: Array2<Complex64>,
    /// Received preamble columns, `kon x n_preambles`.
    pub rx_preamble: Array2<Complex64>,
    /// Linear noise variance per complex entry.
    pub noise_var: f64,
    /// True channel over the grid columns.
    pub genie_grid: Option<Array2<Complex64>>,
    /// True channel over the preamble columns.
    pub genie_preamble: Option<Array2<Complex64>>,
    pub layout: FrameLayout,
}

/// Linear noise variance for an SNR in dB relative to unit signal power.
pub fn noise_var_from_snr_db(snr_db: f64) -> f64 {
    if snr_db.is_infinite() && snr_db > 0.0 {
        0.0
    } else {
        10f64.powf(-snr_db / 10.0)
    }
}

/// Pass a frame through a channel realization: `Y = H ⊙ X + V` per entry,
/// with `V` i.i.d. circular complex Gaussian of variance set by `snr_db`.
pub fn transmit(
    frame: &Frame,
    ch: &ChannelRealization,
    snr_db: f64,
    rng: &mut ChaCha12Rng,
) -> Result<ReceivedFrame, OfdmError> {
    let layout = &frame.layout;
    let kon = layout.kon();
    let n_pre = layout.n_preambles;
    let total = layout.total_symbols();
    if ch.h.dim() != (kon, total) {
        return Err(OfdmError::ChannelSpan { got: ch.h.ncols(), expected: total });
    }
    let sigma2 = noise_var_from_snr_db(snr_db);
    let scale = (sigma2 / 2.0).sqrt();
    let noise = |rng: &mut ChaCha12Rng| {
        if sigma2 == 0.0 {
            Complex64::default()
        } else {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(re * scale, im * scale)
        }
    };
    let mut rx_preamble = Array2::from_elem((kon, n_pre), Complex64::default());
    for s in 0..n_pre {
        for r in 0..kon {
            rx_preamble[[r, s]] = ch.h[[r, s]] * frame.preamble[[r, s]] + noise(rng);
        }
    }
    let grid_len = layout.grid_len();
    let mut y_grid = Array2::from_elem((kon, grid_len), Complex64::default());
    for s in 0..grid_len {
        for r in 0..kon {
            y_grid[[r, s]] = ch.h[[r, n_pre + s]] * frame.grid[[r, s]] + noise(rng);
        }
    }
    let genie_grid = ch.h.slice(ndarray::s![.., n_pre..]).to_owned();
    let genie_preamble = ch.h.slice(ndarray::s![.., ..n_pre]).to_owned();
    Ok(ReceivedFrame {
        y_grid,
        rx_preamble,
        noise_var: sigma2,
        genie_grid: Some(genie_grid),
        genie_preamble: Some(genie_preamble),
        layout: layout.clone(),
    })
}

/// Random bit payload sized for the layout and constellation.
pub fn random_payload(layout: &FrameLayout, c: &Constellation, rng: &mut ChaCha12Rng) -> Vec<u8> {
    let n = layout.payload_bits(c.bits_per_symbol());
    (0..n).map(|_| u8::from(rng.gen::<bool>())).collect()
}

/// Extract the column of a grid restricted to the given rows.
pub fn column_at_rows(grid: &Array2<Complex64>, rows: &[usize], col: usize) -> Array1<Complex64> {
    Array1::from_iter(rows.iter().map(|&r| grid[[r, col]]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    const SQRT_HALF: f64 = std::f64::consts::FRAC_1_SQRT_2;

    #[test]
    fn qpsk_points_and_gray_labels() {
        let c = build_constellation(4).unwrap();
        // bits 00 -> (+1+j)/sqrt(2)
        assert!((c.points[0] - Complex64::new(SQRT_HALF, SQRT_HALF)).norm() < 1e-12);
        for p in &c.points {
            assert!((p.re.abs() - SQRT_HALF).abs() < 1e-12);
            assert!((p.im.abs() - SQRT_HALF).abs() < 1e-12);
        }
    }

    #[test]
    fn unsupported_order_rejected() {
        assert!(build_constellation(8).is_err());
        assert!(build_constellation(0).is_err());
    }

    #[test]
    fn constellations_have_unit_energy() {
        for order in [4, 16, 64] {
            let c = build_constellation(order).unwrap();
            let mean: f64 = c.points.iter().map(|p| p.norm_sqr()).sum::<f64>() / order as f64;
            assert!((mean - 1.0).abs() < 1e-12, "order {order}: mean energy {mean}");
        }
    }

    #[test]
    fn bit_labels_are_a_bijection() {
        for order in [4, 16, 64] {
            let c = build_constellation(order).unwrap();
            for idx in 0..order {
                assert_eq!(c.demap_index(c.points[idx]), idx);
            }
        }
    }

    #[test]
    fn modulate_empty_bits_is_empty() {
        let c = build_constellation(4).unwrap();
        assert!(c.modulate(&[]).unwrap().is_empty());
    }

    #[test]
    fn modulate_rejects_ragged_bits() {
        let c = build_constellation(16).unwrap();
        assert!(matches!(c.modulate(&[0, 1, 0]), Err(OfdmError::RaggedBits { .. })));
    }

    #[test]
    fn demap_is_idempotent_and_fixes_points() {
        let c = build_constellation(64).unwrap();
        let mut rng = stream_rng(5, &[1]);
        for _ in 0..200 {
            let y = Complex64::new(rng.gen::<f64>() * 4.0 - 2.0, rng.gen::<f64>() * 4.0 - 2.0);
            let once = c.demap(y);
            assert_eq!(c.demap(once), once);
        }
        for &p in &c.points {
            assert_eq!(c.demap(p), p);
        }
    }

    #[test]
    fn demap_tie_breaks_to_lowest_index() {
        let c = build_constellation(4).unwrap();
        // Origin is equidistant from all four points; index 0 wins.
        assert_eq!(c.demap_index(Complex64::default()), 0);
        let c16 = build_constellation(16).unwrap();
        assert_eq!(c16.demap_index(Complex64::default()), c16.demap_index(Complex64::default()));
    }

    #[test]
    fn layout_80211p_dimensions() {
        let layout = FrameLayout::sbs_80211p(100);
        assert_eq!(layout.kon(), 52);
        assert_eq!(layout.kd(), 48);
        assert_eq!(layout.kp(), 4);
        assert_eq!(layout.null_bins().len(), 12);
        layout.validate().unwrap();
        // Pilot rows sit at physical frequencies -21, -7, 7, 21.
        let freqs: Vec<i32> =
            layout.pilot_rows.iter().map(|&r| ((layout.row_bins[r] + 32) % 64) as i32 - 32).collect();
        assert_eq!(freqs, vec![-21, -7, 7, 21]);
    }

    #[test]
    fn assemble_sbs_places_pilots_per_column() {
        let layout = FrameLayout::sbs_80211p(100);
        let c = build_constellation(4).unwrap();
        let mut rng = stream_rng(1, &[]);
        let bits = random_payload(&layout, &c, &mut rng);
        let frame = assemble_frame(&bits, &layout, &c).unwrap();
        assert_eq!(frame.grid.dim(), (52, 100));
        for i in 0..100 {
            for &r in &layout.pilot_rows {
                assert_eq!(frame.grid[[r, i]], layout.pilot_value);
            }
        }
    }

    #[test]
    fn assemble_fbf_inserts_pilot_columns() {
        let layout = FrameLayout::fbf_80211p(100, 3);
        let c = build_constellation(4).unwrap();
        let mut rng = stream_rng(2, &[]);
        let bits = random_payload(&layout, &c, &mut rng);
        let frame = assemble_frame(&bits, &layout, &c).unwrap();
        assert_eq!(frame.grid.dim(), (52, 103));
        let pilot_cols = layout.pilot_cols();
        assert_eq!(pilot_cols.len(), 3);
        for &col in &pilot_cols {
            for r in 0..52 {
                assert_eq!(frame.grid[[r, col]], layout.pilot_value);
            }
        }
        assert_eq!(layout.data_cols().len(), 100);
    }

    #[test]
    fn assemble_empty_frame() {
        let mut layout = FrameLayout::sbs_80211p(0);
        layout.n_preambles = 2;
        let c = build_constellation(4).unwrap();
        let frame = assemble_frame(&[], &layout, &c).unwrap();
        assert_eq!(frame.grid.ncols(), 0);
    }

    #[test]
    fn assemble_rejects_wrong_payload() {
        let layout = FrameLayout::sbs_80211p(10);
        let c = build_constellation(4).unwrap();
        assert!(matches!(assemble_frame(&[0, 1], &layout, &c), Err(OfdmError::PayloadSize { .. })));
    }

    #[test]
    fn block_partition_examples() {
        assert_eq!(FrameLayout::fbf_80211p(100, 1).block_sizes(), vec![100]);
        assert_eq!(FrameLayout::fbf_80211p(99, 3).block_sizes(), vec![33, 33, 33]);
        assert_eq!(FrameLayout::fbf_80211p(100, 2).block_sizes(), vec![50, 50]);
        let layout = FrameLayout::fbf_80211p(99, 3);
        assert_eq!(layout.pilot_cols(), vec![33, 67, 101]);
    }

    #[test]
    fn noiseless_identity_channel_round_trip() {
        let layout = FrameLayout::sbs_80211p(20);
        let c = build_constellation(16).unwrap();
        let mut rng = stream_rng(3, &[]);
        let bits = random_payload(&layout, &c, &mut rng);
        let frame = assemble_frame(&bits, &layout, &c).unwrap();
        let ch = ChannelRealization::identity(layout.kon(), layout.total_symbols());
        let rx = transmit(&frame, &ch, f64::INFINITY, &mut rng).unwrap();
        // Y = X exactly.
        for (y, x) in rx.y_grid.iter().zip(frame.grid.iter()) {
            assert!((y - x).norm() < 1e-15);
        }
        // Demapping data subcarriers recovers the payload.
        let mut recovered = Vec::new();
        for i in 0..20 {
            let y = column_at_rows(&rx.y_grid, &layout.data_rows, i);
            recovered.extend(c.demap_bits(y.as_slice().unwrap()));
        }
        assert_eq!(recovered, bits);
    }

    #[test]
    fn noiseless_arbitrary_channel_ratio() {
        let layout = FrameLayout::sbs_80211p(5);
        let c = build_constellation(4).unwrap();
        let mut rng = stream_rng(4, &[]);
        let bits = random_payload(&layout, &c, &mut rng);
        let frame = assemble_frame(&bits, &layout, &c).unwrap();
        let ch = crate::channel::test_support::random_channel(layout.kon(), layout.total_symbols(), 11);
        let rx = transmit(&frame, &ch, f64::INFINITY, &mut rng).unwrap();
        let genie = rx.genie_grid.as_ref().unwrap();
        for s in 0..5 {
            for r in 0..layout.kon() {
                let x = frame.grid[[r, s]];
                if x.norm() > 0.0 {
                    assert!((rx.y_grid[[r, s]] / x - genie[[r, s]]).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn transmit_rejects_short_channel() {
        let layout = FrameLayout::sbs_80211p(5);
        let c = build_constellation(4).unwrap();
        let mut rng = stream_rng(6, &[]);
        let bits = random_payload(&layout, &c, &mut rng);
        let frame = assemble_frame(&bits, &layout, &c).unwrap();
        let ch = ChannelRealization::identity(layout.kon(), 3);
        assert!(matches!(
            transmit(&frame, &ch, 10.0, &mut rng),
            Err(OfdmError::ChannelSpan { .. })
        ));
    }

    #[test]
    fn noise_variance_matches_snr() {
        // snr 10 dB -> E|V|^2 = 0.1 within 2% over 1e6 samples.
        let layout = FrameLayout::sbs_80211p(200);
        let c = build_constellation(4).unwrap();
        let mut rng = stream_rng(7, &[]);
        let bits = random_payload(&layout, &c, &mut rng);
        let frame = assemble_frame(&bits, &layout, &c).unwrap();
        let ch = ChannelRealization::identity(layout.kon(), layout.total_symbols());
        let mut acc = 0.0;
        let mut n = 0usize;
        for rep in 0..100 {
            let mut r2 = stream_rng(7, &[rep]);
            let rx = transmit(&frame, &ch, 10.0, &mut r2).unwrap();
            for (y, x) in rx.y_grid.iter().zip(frame.grid.iter()) {
                acc += (y - x).norm_sqr();
                n += 1;
            }
        }
        let measured = acc / n as f64;
        assert!(n >= 1_000_000);
        assert!((measured / 0.1 - 1.0).abs() < 0.02, "measured {measured}");
    }
}
