//! OFDM symbol construction and reception.
//!
//! Unitary DFT convention throughout: the N-point DFT matrix has entries
//! `exp(-2*pi*i*k*n/N) / sqrt(N)`, so time/frequency transforms preserve
//! the 2-norm and all power bookkeeping follows from unit-energy QAM.

use crate::config::{QamOrder, SystemConfig};
use crate::{C64, CMat, CVec};
use std::f64::consts::TAU;
use thiserror::Error;

/// Unit-energy QAM symbols on the active subcarriers, ascending bin order.
pub type QamVector = CVec;
/// One baseband symbol of `N + L` samples (CP included).
pub type TimeSymbol = CVec;

#[derive(Debug, Error, PartialEq)]
pub enum OfdmError {
    #[error("expected {expected} values, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("bit count {0} is not a multiple of {1}")]
    RaggedBits(usize, usize),
}

/// Cached dense operators for one [`SystemConfig`].
///
/// `A` stacks the last-L identity rows above a full identity (CP insertion),
/// `B` drops the first L coordinates (CP removal), `M` selects the active
/// subcarrier columns of the identity, and `F` is the unitary N-point DFT.
/// At desk scale these stay dense; the modulator additionally caches the
/// composite `A F^H M`.
#[derive(Debug, Clone)]
pub struct LinearMaps {
    n: usize,
    l: usize,
    active: Vec<usize>,
    dft: CMat,
    modulator: CMat,
}

impl LinearMaps {
    pub fn new(cfg: &SystemConfig) -> Self {
        let (n, l) = (cfg.n, cfg.l);
        let active = cfg.active_subcarriers();
        let dft = dft_matrix(n);
        // A F^H M assembled column by column: column k of F^H is the
        // complex exponential at subcarrier k, CP-extended by A.
        let mut modulator = CMat::zeros(n + l, active.len());
        for (col, &k) in active.iter().enumerate() {
            for j in 0..n + l {
                let t = (j + n - l) % n;
                let phase = TAU * (k as f64) * (t as f64) / (n as f64);
                modulator[(j, col)] = C64::new(phase.cos(), phase.sin()) / (n as f64).sqrt();
            }
        }
        LinearMaps { n, l, active, dft, modulator }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn frame_len(&self) -> usize {
        self.n + self.l
    }

    /// Active subcarrier bins, ascending.
    pub fn active_subcarriers(&self) -> &[usize] {
        &self.active
    }

    /// CP insertion matrix A, (N+L) x N.
    pub fn cp_insert(&self) -> CMat {
        let (n, l) = (self.n, self.l);
        let mut a = CMat::zeros(n + l, n);
        for j in 0..l {
            a[(j, n - l + j)] = C64::new(1.0, 0.0);
        }
        for j in 0..n {
            a[(l + j, j)] = C64::new(1.0, 0.0);
        }
        a
    }

    /// CP removal matrix B, N x (N+L).
    pub fn cp_remove(&self) -> CMat {
        let (n, l) = (self.n, self.l);
        let mut b = CMat::zeros(n, n + l);
        for j in 0..n {
            b[(j, l + j)] = C64::new(1.0, 0.0);
        }
        b
    }

    /// Subcarrier mapping matrix M, N x N_d.
    pub fn subcarrier_map(&self) -> CMat {
        let mut m = CMat::zeros(self.n, self.active.len());
        for (col, &k) in self.active.iter().enumerate() {
            m[(k, col)] = C64::new(1.0, 0.0);
        }
        m
    }

    /// Unitary N-point DFT matrix F.
    pub fn dft(&self) -> &CMat {
        &self.dft
    }

    /// Cached composite `A F^H M`.
    pub fn modulator(&self) -> &CMat {
        &self.modulator
    }
}

/// Unitary DFT matrix of size n.
pub fn dft_matrix(n: usize) -> CMat {
    let scale = 1.0 / (n as f64).sqrt();
    CMat::from_fn(n, n, |r, c| {
        let phase = -TAU * (r as f64) * (c as f64) / (n as f64);
        C64::new(phase.cos(), phase.sin()) * scale
    })
}

/// Gray-map bits onto unit-average-energy square QAM.
pub fn qam_modulate(bits: &[bool], order: QamOrder) -> Result<QamVector, OfdmError> {
    let bps = order.bits_per_symbol();
    if bits.len() % bps != 0 {
        return Err(OfdmError::RaggedBits(bits.len(), bps));
    }
    let symbols = bits
        .chunks(bps)
        .map(|chunk| {
            let half = bps / 2;
            let re = gray_to_pam(&chunk[..half]);
            let im = gray_to_pam(&chunk[half..]);
            C64::new(re, im) * qam_scale(order)
        })
        .collect::<Vec<_>>();
    Ok(CVec::from_vec(symbols))
}

/// Hard-decision demap: nearest constellation point, Gray labels.
pub fn qam_demodulate(symbols: &QamVector, order: QamOrder) -> Vec<bool> {
    let mut bits = Vec::with_capacity(symbols.len() * order.bits_per_symbol());
    let levels = 1usize << (order.bits_per_symbol() / 2);
    for s in symbols.iter() {
        let z = *s / qam_scale(order);
        pam_to_gray(z.re, levels, &mut bits);
        pam_to_gray(z.im, levels, &mut bits);
    }
    bits
}

fn qam_scale(order: QamOrder) -> f64 {
    // E[|d|^2] = 1: mean squared PAM level is (levels^2 - 1)/3 per axis.
    match order {
        QamOrder::Qam4 => 1.0 / 2f64.sqrt(),
        QamOrder::Qam16 => 1.0 / 10f64.sqrt(),
        QamOrder::Qam64 => 1.0 / 42f64.sqrt(),
    }
}

/// Gray-coded bits -> odd PAM level. MSB picks the sign half, further bits
/// refine reflected within the half, e.g. 2 bits: 00->+3 01->+1 11->-1 10->-3.
fn gray_to_pam(bits: &[bool]) -> f64 {
    let mut idx = 0usize;
    let mut acc = false;
    for &b in bits {
        acc ^= b;
        idx = (idx << 1) | usize::from(acc);
    }
    let levels = 1usize << bits.len();
    (levels as f64 - 1.0) - 2.0 * idx as f64
}

fn pam_to_gray(value: f64, levels: usize, out: &mut Vec<bool>) {
    let idx_f = ((levels as f64 - 1.0) - value) / 2.0;
    let idx = (idx_f.round().max(0.0) as usize).min(levels - 1);
    let bits = levels.trailing_zeros() as usize;
    let gray = idx ^ (idx >> 1);
    for b in (0..bits).rev() {
        out.push((gray >> b) & 1 == 1);
    }
}

/// Build the time-domain symbol `A F^H M d`.
pub fn ofdm_modulate(d: &QamVector, maps: &LinearMaps) -> Result<TimeSymbol, OfdmError> {
    if d.len() != maps.active.len() {
        return Err(OfdmError::DimensionMismatch { expected: maps.active.len(), got: d.len() });
    }
    Ok(maps.modulator() * d)
}

/// Demodulation output: recovered symbols plus any equalization trouble.
#[derive(Debug, Clone)]
pub struct DemodOutput {
    pub symbols: QamVector,
    /// Active bins where the channel gain was below tolerance; the symbol
    /// is still returned, equalized against the tiny gain.
    pub singular_bins: Vec<usize>,
}

/// CP removal, DFT, and single-tap zero-forcing equalization.
///
/// `h_freq` is the N-point frequency response of the channel taps
/// (unscaled DFT), as produced by [`crate::channel::ChannelRealization::freq_response`].
pub fn ofdm_demodulate(r: &TimeSymbol, maps: &LinearMaps, h_freq: &CVec) -> Result<DemodOutput, OfdmError> {
    if r.len() != maps.frame_len() {
        return Err(OfdmError::DimensionMismatch { expected: maps.frame_len(), got: r.len() });
    }
    if h_freq.len() != maps.n {
        return Err(OfdmError::DimensionMismatch { expected: maps.n, got: h_freq.len() });
    }
    let tol = 1e-12 * h_freq.iter().map(|h| h.norm()).fold(0.0, f64::max).max(1e-300);
    let trimmed = r.rows(maps.l, maps.n);
    let spectrum = maps.dft() * trimmed;
    let mut symbols = CVec::zeros(maps.active.len());
    let mut singular_bins = Vec::new();
    for (col, &k) in maps.active.iter().enumerate() {
        let h = h_freq[k];
        if h.norm() < tol {
            singular_bins.push(k);
        }
        symbols[col] = spectrum[k] / h;
    }
    Ok(DemodOutput { symbols, singular_bins })
}
