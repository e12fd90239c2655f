//! Rayleigh multipath generation, Toeplitz channel operators, AWGN, and
//! imperfect-CSI error injection.

use crate::config::SystemConfig;
use crate::ofdm::TimeSymbol;
use crate::{C64, CMat, CVec};
use rand::Rng;
use rand_distr::StandardNormal;
use std::f64::consts::TAU;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ChannelError {
    #[error("operator size {size} smaller than tap count {taps}")]
    SizeTooSmall { size: usize, taps: usize },
}

/// Sample CN(0, var).
fn complex_normal<R: Rng + ?Sized>(var: f64, rng: &mut R) -> C64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(s * re, s * im)
}

/// One multipath realization: `l + 1` complex tap gains with a uniform
/// power-delay profile, `E[||h||^2] = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub taps: CVec,
}

impl ChannelRealization {
    pub fn from_taps(taps: CVec) -> Self {
        ChannelRealization { taps }
    }

    /// Highest tap delay l.
    pub fn order(&self) -> usize {
        self.taps.len() - 1
    }

    /// Unscaled n-point frequency response: `H_k = sum_t h_t e^{-2 pi i k t / n}`.
    pub fn freq_response(&self, n: usize) -> CVec {
        CVec::from_fn(n, |k, _| {
            let mut acc = C64::new(0.0, 0.0);
            for (t, h) in self.taps.iter().enumerate() {
                let phase = -TAU * (k as f64) * (t as f64) / (n as f64);
                acc += h * C64::new(phase.cos(), phase.sin());
            }
            acc
        })
    }
}

/// Draw i.i.d. Rayleigh taps, each CN(0, 1/num_taps).
pub fn draw_channel<R: Rng + ?Sized>(num_taps: usize, rng: &mut R) -> ChannelRealization {
    assert!(num_taps >= 1, "channel needs at least one tap");
    let var = 1.0 / num_taps as f64;
    ChannelRealization { taps: CVec::from_fn(num_taps, |_, _| complex_normal(var, rng)) }
}

/// Dense circulant convolution operator for one symbol frame.
///
/// First column is the zero-padded tap vector; the top-right corner carries
/// the wrap-around entries `h_l ... h_1`, modelling the steady-state symbol
/// stream.
#[derive(Debug, Clone)]
pub struct ToeplitzChannel {
    taps: CVec,
    matrix: CMat,
}

impl ToeplitzChannel {
    pub fn size(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn taps(&self) -> &CVec {
        &self.taps
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn realization(&self) -> ChannelRealization {
        ChannelRealization { taps: self.taps.clone() }
    }

    /// `H x` by dense multiply.
    pub fn apply(&self, x: &CVec) -> CVec {
        &self.matrix * x
    }
}

/// Build the size x size wrap-around Toeplitz operator from tap gains.
pub fn toeplitz_channel(h: &ChannelRealization, size: usize) -> Result<ToeplitzChannel, ChannelError> {
    let taps = &h.taps;
    if size < taps.len() {
        return Err(ChannelError::SizeTooSmall { size, taps: taps.len() });
    }
    let mut m = CMat::zeros(size, size);
    for i in 0..size {
        for (t, g) in taps.iter().enumerate() {
            let j = (i + size - t) % size;
            m[(i, j)] = *g;
        }
    }
    Ok(ToeplitzChannel { taps: taps.clone(), matrix: m })
}

/// Per-sample noise variance for a given SNR against the plain-OFDM
/// reference signal power (`N_d / N` per sample under unit-energy QAM and
/// the unitary DFT). `snr_db = +inf` disables noise.
pub fn noise_sigma2(snr_db: f64, cfg: &SystemConfig) -> f64 {
    if snr_db.is_infinite() && snr_db > 0.0 {
        return 0.0;
    }
    let ref_power = cfg.n_data() as f64 / cfg.n as f64;
    ref_power / 10f64.powf(snr_db / 10.0)
}

/// Propagate one symbol: `r = H t + n`, `n ~ CN(0, sigma2 I)`.
pub fn apply_channel<R: Rng + ?Sized>(
    t: &TimeSymbol,
    h: &ToeplitzChannel,
    sigma2: f64,
    rng: &mut R,
) -> TimeSymbol {
    let mut r = h.apply(t);
    if sigma2 > 0.0 {
        for v in r.iter_mut() {
            *v += complex_normal(sigma2, rng);
        }
    }
    r
}

/// Additive CSI error: the operator actually seen by the signal differs
/// from the one the transmitter designed against.
#[derive(Debug, Clone)]
pub struct CsiPerturbation {
    /// Perturbed operator `H + E`.
    pub actual: ToeplitzChannel,
    /// Error tap gains (same band structure as the channel taps).
    pub error_taps: CVec,
}

/// Draw an error operator with the same Toeplitz structure as `h` and
/// per-tap variance `sigma_e2 / (l + 1)`, so the tap-wise MSE ratio
/// `E|h_hat - h|^2 / E|h|^2` equals `sigma_e2` under the uniform PDP.
pub fn perturb_csi<R: Rng + ?Sized>(
    h: &ToeplitzChannel,
    sigma_e2: f64,
    rng: &mut R,
) -> CsiPerturbation {
    let num_taps = h.taps.len();
    let var = sigma_e2 / num_taps as f64;
    let error_taps = CVec::from_fn(num_taps, |_, _| {
        if sigma_e2 > 0.0 { complex_normal(var, rng) } else { C64::new(0.0, 0.0) }
    });
    let perturbed = ChannelRealization { taps: &h.taps + &error_taps };
    let actual = toeplitz_channel(&perturbed, h.size()).expect("same size as source operator");
    CsiPerturbation { actual, error_taps }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::QamOrder;
    use crate::ofdm;
    use crate::rng::substream;
    use approx::assert_relative_eq;

    #[test]
    fn single_tap_is_identity() {
        let h = ChannelRealization::from_taps(CVec::from_element(1, C64::new(1.0, 0.0)));
        let op = toeplitz_channel(&h, 6).unwrap();
        assert!((op.matrix() - CMat::identity(6, 6)).norm() < 1e-15);
    }

    #[test]
    fn two_tap_rows_match_display() {
        let h = ChannelRealization::from_taps(CVec::from_vec(vec![
            C64::new(0.6, 0.1),
            C64::new(-0.3, 0.2),
        ]));
        let op = toeplitz_channel(&h, 4).unwrap();
        let m = op.matrix();
        // first row [h0 0 0 h1] (wrap), second row [h1 h0 0 0]
        assert_eq!(m[(0, 0)], h.taps[0]);
        assert_eq!(m[(0, 3)], h.taps[1]);
        assert_eq!(m[(0, 1)], C64::new(0.0, 0.0));
        assert_eq!(m[(1, 0)], h.taps[1]);
        assert_eq!(m[(1, 1)], h.taps[0]);
        assert_eq!(m[(1, 2)], C64::new(0.0, 0.0));
    }

    #[test]
    fn size_smaller_than_taps_rejected() {
        let h = draw_channel(5, &mut substream(1, &[0]));
        assert_eq!(
            toeplitz_channel(&h, 4).unwrap_err(),
            ChannelError::SizeTooSmall { size: 4, taps: 5 }
        );
    }

    /// O(n^2) circular-convolution oracle.
    fn circ_conv(h: &CVec, x: &CVec, size: usize) -> CVec {
        let mut y = CVec::zeros(size);
        for i in 0..size {
            let mut acc = C64::new(0.0, 0.0);
            for (t, g) in h.iter().enumerate() {
                acc += g * x[(i + size - t) % size];
            }
            y[i] = acc;
        }
        y
    }

    #[test]
    fn operator_matches_circular_convolution() {
        let mut rng = substream(2, &[0]);
        for _ in 0..10 {
            let h = draw_channel(17, &mut rng);
            let op = toeplitz_channel(&h, 80).unwrap();
            let x = CVec::from_fn(80, |_, _| complex_normal(1.0, &mut rng));
            let direct = circ_conv(&h.taps, &x, 80);
            assert!((op.apply(&x) - direct).norm() < 1e-12);
        }
    }

    #[test]
    fn tap_statistics_match_profile() {
        let mut rng = substream(3, &[0]);
        let trials = 100_000;
        let mut flat_power = 0.0;
        for _ in 0..trials {
            flat_power += draw_channel(1, &mut rng).taps[0].norm_sqr();
        }
        assert_relative_eq!(flat_power / trials as f64, 1.0, max_relative = 0.02);

        let mut total = 0.0;
        for _ in 0..trials / 10 {
            total += draw_channel(17, &mut rng).taps.norm_squared();
        }
        assert_relative_eq!(total / (trials / 10) as f64, 1.0, max_relative = 0.02);
    }

    #[test]
    fn fixed_seed_reproduces_taps() {
        let a = draw_channel(17, &mut substream(9, &[4]));
        let b = draw_channel(17, &mut substream(9, &[4]));
        assert_eq!(a, b);
    }

    #[test]
    fn infinite_snr_disables_noise() {
        let cfg = SystemConfig::reference();
        assert_eq!(noise_sigma2(f64::INFINITY, &cfg), 0.0);
        let mut rng = substream(4, &[0]);
        let h = draw_channel(17, &mut rng);
        let op = toeplitz_channel(&h, 80).unwrap();
        let t = CVec::from_fn(80, |_, _| complex_normal(1.0, &mut rng));
        let r = apply_channel(&t, &op, 0.0, &mut rng);
        assert!((r - op.apply(&t)).norm() == 0.0);
    }

    #[test]
    fn zero_db_noise_matches_plain_signal_power() {
        let cfg = SystemConfig::reference();
        let maps = ofdm::LinearMaps::new(&cfg);
        let sigma2 = noise_sigma2(0.0, &cfg);
        let mut rng = substream(5, &[0]);
        let trials = 10_000;
        let (mut sig, mut noise) = (0.0, 0.0);
        for _ in 0..trials {
            let bits: Vec<bool> = (0..106).map(|_| rng.gen()).collect();
            let d = ofdm::qam_modulate(&bits, QamOrder::Qam4).unwrap();
            sig += ofdm::ofdm_modulate(&d, &maps).unwrap().norm_squared();
            let n = CVec::from_fn(80, |_, _| complex_normal(sigma2, &mut rng));
            noise += n.norm_squared();
        }
        assert_relative_eq!(noise / sig, 1.0, max_relative = 0.03);
    }

    #[test]
    fn csi_perturbation_zero_is_exact() {
        let mut rng = substream(6, &[0]);
        let h = draw_channel(17, &mut rng);
        let op = toeplitz_channel(&h, 80).unwrap();
        let p = perturb_csi(&op, 0.0, &mut rng);
        assert!((p.actual.matrix() - op.matrix()).norm() == 0.0);
    }

    #[test]
    fn csi_mse_ratio_matches_request() {
        let mut rng = substream(7, &[0]);
        let sigma_e2 = 0.01;
        let (mut err_power, mut chan_power) = (0.0, 0.0);
        for _ in 0..100_000 {
            let h = draw_channel(17, &mut rng);
            let op = toeplitz_channel(&h, 20).unwrap();
            let p = perturb_csi(&op, sigma_e2, &mut rng);
            err_power += p.error_taps.norm_squared();
            chan_power += h.taps.norm_squared();
        }
        let mse = err_power / chan_power;
        assert!((0.0095..=0.0105).contains(&mse), "mse {mse}");
    }

    #[test]
    fn perturbation_keeps_band_structure() {
        let mut rng = substream(8, &[0]);
        let h = draw_channel(5, &mut rng);
        let op = toeplitz_channel(&h, 12).unwrap();
        let p = perturb_csi(&op, 0.1, &mut rng);
        let e = p.actual.matrix() - op.matrix();
        for i in 0..12 {
            for j in 0..12 {
                let lag = (i + 12 - j) % 12;
                if lag > 4 {
                    assert_eq!(e[(i, j)], C64::new(0.0, 0.0));
                }
            }
        }
    }

    /// Gray 4QAM over flat Rayleigh: bit error rate follows the closed form
    /// `0.5 (1 - sqrt(g/(2+g)))` with `g` the mean post-equalization SNR.
    #[test]
    fn flat_rayleigh_ber_matches_closed_form() {
        let cfg = SystemConfig::reference();
        let maps = ofdm::LinearMaps::new(&cfg);
        let snr_db = 10.0;
        let sigma2 = noise_sigma2(snr_db, &cfg);
        let gamma = 1.0 / sigma2;
        let theory = 0.5 * (1.0 - (gamma / (2.0 + gamma)).sqrt());

        let mut rng = substream(10, &[0]);
        let symbols = 3000;
        let mut errors = 0usize;
        let mut bits_total = 0usize;
        for _ in 0..symbols {
            let bits: Vec<bool> = (0..106).map(|_| rng.gen()).collect();
            let d = ofdm::qam_modulate(&bits, QamOrder::Qam4).unwrap();
            let x = ofdm::ofdm_modulate(&d, &maps).unwrap();
            let h = draw_channel(1, &mut rng);
            let op = toeplitz_channel(&h, 80).unwrap();
            let r = apply_channel(&x, &op, sigma2, &mut rng);
            let out = ofdm::ofdm_demodulate(&r, &maps, &h.freq_response(64)).unwrap();
            let decided = ofdm::qam_demodulate(&out.symbols, QamOrder::Qam4);
            errors += decided.iter().zip(&bits).filter(|(a, b)| a != b).count();
            bits_total += bits.len();
        }
        let ber = errors as f64 / bits_total as f64;
        let sd = (theory * (1.0 - theory) / bits_total as f64).sqrt();
        assert!(
            (ber - theory).abs() < 5.0 * sd + 0.1 * theory,
            "ber {ber:.5} vs theory {theory:.5}"
        );
    }
}
