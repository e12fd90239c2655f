//! OFDM waveform shaping by null-space suppressing signals.
//!
//! The transmitter injects a suppressing signal `c = P s` into each OFDM
//! symbol, where the columns of `P` span the null space of the cyclic-prefix
//! removal operator composed with the channel. The receiver discards the
//! suppressing signal together with the CP, so the data subcarriers stay
//! interference-free while `s` is optimized to cancel out-of-band leakage
//! in a notched adjacent-user band, to lower the peak-to-average power
//! ratio, or to trade off both.
//!
//! Crate layout:
//!
//! * [`config`] — system dimensioning and scenario parameters
//! * [`ofdm`] — QAM mapping, subcarrier mapping, (de)modulation
//! * [`channel`] — Rayleigh multipath, Toeplitz operators, AWGN, CSI error
//! * [`alignment`] — null-space bases (full and partial-CP variants)
//! * [`suppressor`] — spectral operators, LSQI and joint convex solves
//! * [`socp`] — the small dense second-order cone solver behind the joint mode
//! * [`analysis`] — Welch PSD, PAPR/CCDF, leakage closed form, BER counting
//! * [`experiments`] — scenario files, sweep runners, result tables, reports

pub mod alignment;
pub mod analysis;
pub mod channel;
pub mod config;
pub mod experiments;
pub mod ofdm;
pub mod rng;
pub mod socp;
pub mod suppressor;

/// Complex scalar used throughout.
pub type C64 = nalgebra::Complex<f64>;
/// Dense complex matrix.
pub type CMat = nalgebra::DMatrix<C64>;
/// Dense complex vector.
pub type CVec = nalgebra::DVector<C64>;
