//! System dimensioning and scenario parameters.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// QAM constellation size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub enum QamOrder {
    Qam4,
    Qam16,
    Qam64,
}

impl QamOrder {
    pub fn bits_per_symbol(self) -> usize {
        match self {
            QamOrder::Qam4 => 2,
            QamOrder::Qam16 => 4,
            QamOrder::Qam64 => 6,
        }
    }

    pub fn size(self) -> u32 {
        match self {
            QamOrder::Qam4 => 4,
            QamOrder::Qam16 => 16,
            QamOrder::Qam64 => 64,
        }
    }
}

impl TryFrom<u32> for QamOrder {
    type Error = ConfigError;
    fn try_from(v: u32) -> Result<Self, ConfigError> {
        match v {
            4 => Ok(QamOrder::Qam4),
            16 => Ok(QamOrder::Qam16),
            64 => Ok(QamOrder::Qam64),
            other => Err(ConfigError::UnsupportedModOrder(other)),
        }
    }
}

impl From<QamOrder> for u32 {
    fn from(v: QamOrder) -> u32 {
        v.size()
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("unsupported QAM order {0} (expected 4, 16, or 64)")]
    UnsupportedModOrder(u32),
    #[error("notch band [{first}, {last}] out of range for N={n} (DC excluded)")]
    NotchOutOfRange { first: usize, last: usize, n: usize },
    #[error("notch width must be positive")]
    EmptyNotch,
    #[error("CP length {l} must be shorter than symbol length {n}")]
    CpTooLong { l: usize, n: usize },
    #[error("reserved CP samples r={r} must satisfy r < L/2 (L={l})")]
    ReservedCpTooLarge { r: usize, l: usize },
    #[error("lambda {0} outside [0, 1]")]
    LambdaOutOfRange(f64),
    #[error("alpha {0} must be nonnegative")]
    NegativeAlpha(f64),
    #[error("oversampling factor zeta must be at least 1")]
    ZetaTooSmall,
}

/// All dimensional and scenario parameters of one link setup.
///
/// Subcarrier indices are DFT-bin order `0..n`; bin 0 is DC. The notch is a
/// contiguous block of deactivated bins reserved for an adjacent user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// Subcarrier count N.
    pub n: usize,
    /// Cyclic-prefix length L in samples.
    pub l: usize,
    /// First deactivated subcarrier of the notch band.
    pub notch_first: usize,
    /// Notch width K in subcarriers.
    pub notch_width: usize,
    /// Whether the DC subcarrier carries no data.
    #[serde(default = "default_true")]
    pub dc_disabled: bool,
    /// Spectral oversampling factor zeta (samples per subcarrier).
    pub zeta: usize,
    /// QAM constellation size.
    pub mod_order: QamOrder,
    /// Suppressor power fraction: per-symbol budget is `alpha * ||x||^2`.
    pub alpha: f64,
    /// OOB/PAPR adaptation weight in [0, 1].
    pub lambda: f64,
    /// Synchronization-reserved CP samples (0 during the data phase).
    #[serde(default)]
    pub r: usize,
    /// Extra notch-selection guard bins per side (see [`SystemConfig::notch_bins`]).
    #[serde(default)]
    pub guard_bins: usize,
}

fn default_true() -> bool {
    true
}

impl SystemConfig {
    /// Validate all invariants, consuming the raw field values.
    pub fn validated(self) -> Result<Self, ConfigError> {
        if self.zeta < 1 {
            return Err(ConfigError::ZetaTooSmall);
        }
        if self.l >= self.n {
            return Err(ConfigError::CpTooLong { l: self.l, n: self.n });
        }
        if self.notch_width == 0 {
            return Err(ConfigError::EmptyNotch);
        }
        let first = self.notch_first;
        let last = self.notch_first + self.notch_width - 1;
        if first < 1 || last > self.n - 1 {
            return Err(ConfigError::NotchOutOfRange { first, last, n: self.n });
        }
        if 2 * self.r >= self.l {
            return Err(ConfigError::ReservedCpTooLarge { r: self.r, l: self.l });
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(ConfigError::LambdaOutOfRange(self.lambda));
        }
        if self.alpha < 0.0 {
            return Err(ConfigError::NegativeAlpha(self.alpha));
        }
        Ok(self)
    }

    /// The reference desk-scale setup: N=64, L=16, 10-subcarrier notch at
    /// bins 16..=25, DC disabled, zeta=4, 4QAM.
    pub fn reference() -> Self {
        SystemConfig {
            n: 64,
            l: 16,
            notch_first: 16,
            notch_width: 10,
            dc_disabled: true,
            zeta: 4,
            mod_order: QamOrder::Qam4,
            alpha: 0.25,
            lambda: 0.0,
            r: 0,
            guard_bins: 0,
        }
        .validated()
        .expect("reference config is valid")
    }

    /// Number of active data subcarriers N_d.
    pub fn n_data(&self) -> usize {
        self.n - self.notch_width - usize::from(self.dc_disabled)
    }

    /// Symbol length including the cyclic prefix.
    pub fn frame_len(&self) -> usize {
        self.n + self.l
    }

    /// Active subcarrier indices in ascending DFT-bin order.
    pub fn active_subcarriers(&self) -> Vec<usize> {
        let notch = self.notch_first..=self.notch_first + self.notch_width - 1;
        (0..self.n)
            .filter(|&k| !(k == 0 && self.dc_disabled) && !notch.contains(&k))
            .collect()
    }

    /// Oversampled-spectrum bins inside the notch band.
    ///
    /// Of the `zeta * n` spectrum bins, this selects those whose center
    /// frequencies lie strictly inside the notch band edges (the half-
    /// subcarrier boundaries shared with the edge data subcarriers are
    /// excluded), widened by `guard_bins` per side.
    pub fn notch_bins(&self) -> Vec<usize> {
        let z = self.zeta as f64;
        let lo = z * (self.notch_first as f64 - 0.5) - self.guard_bins as f64;
        let hi = z * ((self.notch_first + self.notch_width) as f64 - 0.5) + self.guard_bins as f64;
        let total = self.zeta * self.n;
        (0..total)
            .filter(|&q| {
                let q = q as f64;
                q > lo && q < hi
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_dimensions() {
        let cfg = SystemConfig::reference();
        assert_eq!(cfg.n_data(), 53);
        assert_eq!(cfg.frame_len(), 80);
        assert_eq!(cfg.active_subcarriers().len(), 53);
        assert!(!cfg.active_subcarriers().contains(&0));
        assert!(!cfg.active_subcarriers().contains(&20));
    }

    #[test]
    fn notch_bins_strict_interior() {
        let cfg = SystemConfig::reference();
        let bins = cfg.notch_bins();
        // band edges at bins 62 and 102 are excluded
        assert_eq!(bins.first(), Some(&63));
        assert_eq!(bins.last(), Some(&101));
        assert_eq!(bins.len(), 39);
    }

    #[test]
    fn notch_bins_single_subcarrier_unit_zeta() {
        let cfg = SystemConfig {
            zeta: 1,
            notch_first: 20,
            notch_width: 1,
            ..SystemConfig::reference()
        }
        .validated()
        .unwrap();
        assert_eq!(cfg.notch_bins(), vec![20]);
    }

    #[test]
    fn invalid_configs_rejected() {
        let base = SystemConfig::reference();
        assert!(matches!(
            SystemConfig { notch_first: 60, notch_width: 10, ..base.clone() }.validated(),
            Err(ConfigError::NotchOutOfRange { .. })
        ));
        assert!(matches!(
            SystemConfig { r: 8, ..base.clone() }.validated(),
            Err(ConfigError::ReservedCpTooLarge { .. })
        ));
        assert!(matches!(
            SystemConfig { lambda: 1.5, ..base.clone() }.validated(),
            Err(ConfigError::LambdaOutOfRange(_))
        ));
        assert!(matches!(
            SystemConfig { l: 64, ..base }.validated(),
            Err(ConfigError::CpTooLong { .. })
        ));
    }

    #[test]
    fn qam_order_serde_roundtrip() {
        let order: QamOrder = serde_json::from_str("16").unwrap();
        assert_eq!(order, QamOrder::Qam16);
        assert!(serde_json::from_str::<QamOrder>("8").is_err());
    }
}
