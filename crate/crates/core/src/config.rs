//! Network parameters and the quantities derived from them.
//!
//! The T1–T2 reference channel variance is normalized to one, so the two
//! link variances are pure functions of the relay position `k` and the
//! path-loss exponent `alpha`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Noise power of the reference numerical setup, watts.
pub const DEFAULT_NOISE_POWER: f64 = 1e-10;
/// Path-loss exponent of the reference numerical setup.
pub const DEFAULT_ALPHA: f64 = 3.12;
/// Channel bandwidth of the reference numerical setup, hertz.
pub const DEFAULT_BANDWIDTH_HZ: f64 = 1e6;
pub const DEFAULT_CODEWORD_BITS: u64 = 1000;
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid value for `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("failed to read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config document: {0}")]
    Parse(#[from] serde_json::Error),
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        reason: reason.into(),
    }
}

/// All physical parameters of a two-way relay network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    /// Transmit power of T1, watts.
    pub p1: f64,
    /// Transmit power of T2, watts.
    pub p2: f64,
    /// Transmit power of the relay, watts.
    pub pr: f64,
    /// Receiver noise power, watts.
    pub noise_power: f64,
    /// Relay position as a fraction of the T1–T2 distance, in (0, 1).
    pub k: f64,
    /// Path-loss exponent.
    pub alpha: f64,
    pub bandwidth_hz: f64,
    /// Codeword length L, bits.
    pub codeword_bits: u64,
    pub seed: u64,
}

/// Which bandwidth the energy figures are normalized by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyUnits {
    /// Slot duration `L / (R * B)`; energies in joules, bit energy in joules/bit.
    #[default]
    Joules,
    /// Drop the bandwidth (`B = 1`), matching the normalized closed forms.
    PaperNormalized,
}

/// Per-node signal-to-noise ratios `P / noise_power`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SnrPerNode {
    pub t1: f64,
    pub t2: f64,
    pub relay: f64,
}

impl SnrPerNode {
    /// The common value when all three nodes share a transmit power.
    pub fn common(&self) -> Option<f64> {
        (self.t1 == self.t2 && self.t2 == self.relay).then_some(self.t1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivedParams {
    /// Mean power gain of the T1–relay link, `k^-alpha`.
    pub sigma1_sq: f64,
    /// Mean power gain of the T2–relay link, `(1-k)^-alpha`.
    pub sigma2_sq: f64,
    /// AF amplification factor.
    pub beta: f64,
    pub snr: SnrPerNode,
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

impl NetworkConfig {
    /// Reference setup with equal transmit powers chosen so that
    /// `P / noise_power` equals `snr_db`.
    pub fn reference(snr_db: f64) -> Self {
        let p = db_to_linear(snr_db) * DEFAULT_NOISE_POWER;
        Self {
            p1: p,
            p2: p,
            pr: p,
            noise_power: DEFAULT_NOISE_POWER,
            k: 0.5,
            alpha: DEFAULT_ALPHA,
            bandwidth_hz: DEFAULT_BANDWIDTH_HZ,
            codeword_bits: DEFAULT_CODEWORD_BITS,
            seed: DEFAULT_SEED,
        }
    }

    /// Same geometry and noise, with all three powers set to `snr_db` above the noise.
    pub fn with_equal_snr_db(&self, snr_db: f64) -> Self {
        let p = db_to_linear(snr_db) * self.noise_power;
        Self {
            p1: p,
            p2: p,
            pr: p,
            ..self.clone()
        }
    }

    /// Reinterprets `noise_power` as a spectral density and multiplies it by the bandwidth.
    pub fn with_noise_as_psd(&self) -> Self {
        Self {
            noise_power: self.noise_power * self.bandwidth_hz,
            ..self.clone()
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("p1", self.p1),
            ("p2", self.p2),
            ("pr", self.pr),
            ("noise_power", self.noise_power),
            ("bandwidth_hz", self.bandwidth_hz),
        ];
        for (field, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(field, format!("must be finite and > 0, got {v}")));
            }
        }
        if !(self.k.is_finite() && self.k > 0.0 && self.k < 1.0) {
            return Err(invalid("k", format!("must lie in (0, 1), got {}", self.k)));
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(invalid(
                "alpha",
                format!("must be finite and >= 0, got {}", self.alpha),
            ));
        }
        if self.codeword_bits == 0 {
            return Err(invalid("codeword_bits", "must be >= 1"));
        }
        Ok(())
    }

    /// Bandwidth that divides slot energies under the chosen units.
    pub fn energy_bandwidth(&self, units: EnergyUnits) -> f64 {
        match units {
            EnergyUnits::Joules => self.bandwidth_hz,
            EnergyUnits::PaperNormalized => 1.0,
        }
    }

    pub fn total_power(&self) -> f64 {
        self.p1 + self.p2 + self.pr
    }
}

pub fn derive_params(cfg: &NetworkConfig) -> Result<DerivedParams, ConfigError> {
    cfg.validate()?;
    let sigma1_sq = cfg.k.powf(-cfg.alpha);
    let sigma2_sq = (1.0 - cfg.k).powf(-cfg.alpha);
    let beta = (cfg.pr / (cfg.p1 * sigma1_sq + cfg.p2 * sigma2_sq + cfg.noise_power)).sqrt();
    Ok(DerivedParams {
        sigma1_sq,
        sigma2_sq,
        beta,
        snr: SnrPerNode {
            t1: cfg.p1 / cfg.noise_power,
            t2: cfg.p2 / cfg.noise_power,
            relay: cfg.pr / cfg.noise_power,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn zero_exponent_gives_unit_variances() {
        let cfg = NetworkConfig {
            alpha: 0.0,
            ..NetworkConfig::reference(10.0)
        };
        let d = derive_params(&cfg).unwrap();
        assert_eq!(d.sigma1_sq, 1.0);
        assert_eq!(d.sigma2_sq, 1.0);
    }

    #[test]
    fn midpoint_relay_reference_variance() {
        // 2^3.12 from a 40-digit mpmath evaluation.
        let d = derive_params(&NetworkConfig::reference(10.0)).unwrap();
        assert_relative_eq!(d.sigma1_sq, 8.693_878_900_208_465, max_relative = 1e-14);
        assert_eq!(d.sigma1_sq, d.sigma2_sq);
    }

    #[test]
    fn noise_free_beta_limit() {
        let cfg = NetworkConfig {
            noise_power: 1e-30,
            ..NetworkConfig::reference(0.0)
        };
        let cfg = NetworkConfig {
            p1: 1.0,
            p2: 1.0,
            pr: 1.0,
            ..cfg
        };
        let d = derive_params(&cfg).unwrap();
        assert_relative_eq!(
            d.beta,
            (d.sigma1_sq + d.sigma2_sq).powf(-0.5),
            max_relative = 1e-12
        );
    }

    #[test]
    fn rejects_bad_fields_by_name() {
        let bad_k = NetworkConfig {
            k: 1.5,
            ..NetworkConfig::reference(0.0)
        };
        let err = derive_params(&bad_k).unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { field: "k", .. }), "{err}");

        let bad_p = NetworkConfig {
            p2: 0.0,
            ..NetworkConfig::reference(0.0)
        };
        let err = derive_params(&bad_p).unwrap_err();
        assert!(err.to_string().contains("`p2`"));

        let bad_l = NetworkConfig {
            codeword_bits: 0,
            ..NetworkConfig::reference(0.0)
        };
        assert!(matches!(
            bad_l.validate(),
            Err(ConfigError::Invalid {
                field: "codeword_bits",
                ..
            })
        ));
    }

    #[test]
    fn json_rejects_unknown_keys() {
        let mut v = serde_json::to_value(NetworkConfig::reference(10.0)).unwrap();
        let text = v.to_string();
        assert!(NetworkConfig::from_json_str(&text).is_ok());
        v["gain"] = serde_json::json!(1.0);
        let err = NetworkConfig::from_json_str(&v.to_string()).unwrap_err();
        assert!(matches!(err, ConfigError::Parse(_)));
    }

    #[test]
    fn reference_document_values() {
        let cfg = NetworkConfig::reference(10.0);
        assert_relative_eq!(cfg.p1, 1e-9, max_relative = 1e-12);
        assert_eq!(cfg.k, 0.5);
        assert_eq!(cfg.codeword_bits, 1000);
        assert_eq!(cfg.seed, 42);
        let snr = derive_params(&cfg).unwrap().snr;
        assert_relative_eq!(snr.common().unwrap(), 10.0, max_relative = 1e-12);
    }

    proptest! {
        #[test]
        fn power_scaling_leaves_derived_params_unchanged(
            p1 in 1e-3f64..10.0, p2 in 1e-3f64..10.0, pr in 1e-3f64..10.0,
            n in 1e-3f64..10.0, k in 0.05f64..0.95, c in 1e-3f64..1e3,
        ) {
            let a = NetworkConfig { p1, p2, pr, noise_power: n, k, ..NetworkConfig::reference(0.0) };
            let b = NetworkConfig { p1: c * p1, p2: c * p2, pr: c * pr, noise_power: c * n, ..a.clone() };
            let (da, db) = (derive_params(&a).unwrap(), derive_params(&b).unwrap());
            prop_assert!((da.beta - db.beta).abs() <= 1e-12 * da.beta);
            prop_assert!((da.snr.t1 - db.snr.t1).abs() <= 1e-12 * da.snr.t1);
            prop_assert_eq!(da.sigma1_sq, db.sigma1_sq);
        }

        #[test]
        fn mirrored_geometry_swaps_variances(
            p1 in 1e-3f64..10.0, p2 in 1e-3f64..10.0, k in 0.05f64..0.95,
        ) {
            let a = NetworkConfig { p1, p2, k, ..NetworkConfig::reference(0.0) };
            let b = NetworkConfig { p1: p2, p2: p1, k: 1.0 - k, ..a.clone() };
            let (da, db) = (derive_params(&a).unwrap(), derive_params(&b).unwrap());
            prop_assert!((da.sigma1_sq - db.sigma2_sq).abs() <= 1e-12 * da.sigma1_sq);
            prop_assert!((da.sigma2_sq - db.sigma1_sq).abs() <= 1e-12 * da.sigma2_sq);
            prop_assert!((da.beta - db.beta).abs() <= 1e-12 * da.beta);
        }
    }
}
