//! Link-level simulation and estimation toolkit for doubly-selective OFDM channels.
//!
//! The crate is organized around the signal path of an 802.11p-style link:
//!
//! - [`ofdm`]: frame construction, Gray-mapped QAM, and the per-subcarrier
//!   multiplicative channel model `Y = H ⊙ X + V`.
//! - [`channel`]: Rayleigh tap processes with Jakes Doppler spectrum
//!   (Gaussian-weighted sum of sinusoids), vehicular power-delay profiles,
//!   and frame correlation profiling.
//! - [`classic`]: non-neural estimation primitives — LS at preamble/pilots,
//!   decision-directed DPA, time averaging, SLS/ALS pilot-symbol estimation
//!   on a truncated DFT basis, and weighted interpolation.
//! - [`rnn`]: from-scratch SRNN/LSTM/GRU cells with bidirectional
//!   composition, exact BPTT gradients, Adam, weight-averaging ensembles,
//!   and a portable binary model format.
//! - [`pipeline`]: the composed estimators — symbol-by-symbol RNN-DPA-TA
//!   tracking and frame-by-frame ALS + bidirectional-RNN interpolation.
//! - [`harness`]: dataset generation, training orchestration, Monte Carlo
//!   BER/NMSE/throughput sweeps, operation counting, and CSV emission.
//!
//! All randomness flows from explicit seeds through [`rng`]; identical seeds
//! produce identical results byte for byte.

pub mod channel;
pub mod classic;
pub mod dft;
pub mod harness;
pub mod ofdm;
pub mod pipeline;
pub mod rnn;
pub mod rng;

pub use num_complex::Complex64;
