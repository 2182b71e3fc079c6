//! Closed-form goodput and average bit energy for both relaying modes.
//!
//! DF bit energy comes in two flavours. [`eb_df_paper`] weights the polling
//! energies by the slot-stationary buffer-state probabilities of the
//! closed form. [`eb_df_renewal`] weights them by the distribution of the
//! state the relay lands in after a broadcast, which is the exact long-run
//! energy per delivered bit because consecutive broadcast-to-broadcast cycles
//! are i.i.d.

use serde::Serialize;
use thiserror::Error;

use crate::channel::{self, AfOutagePair, DfOutageProfile};
use crate::config::{derive_params, ConfigError, EnergyUnits, NetworkConfig};
use crate::markov::{self, df_state, MarkovError, Mode, StationaryDistribution};
use crate::numerics::NumericsError;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no bits are ever delivered ({0}); bit energy is infinite")]
    InfiniteEnergy(String),
    #[error("normalized rate undefined at R = {0}")]
    UndefinedRate(f64),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Markov(#[from] MarkovError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum OutageProfile {
    Af(AfOutagePair),
    Df(DfOutageProfile),
}

impl OutageProfile {
    pub fn mode(&self) -> Mode {
        match self {
            OutageProfile::Af(_) => Mode::Af,
            OutageProfile::Df(_) => Mode::Df,
        }
    }
}

/// One analytic operating point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerformancePoint {
    pub rate: f64,
    pub goodput: f64,
    pub normalized_rate: f64,
    /// State-weighted bit-energy expression.
    pub eb_paper: f64,
    /// Renewal-reward bit energy (equals `eb_paper` in AF mode).
    pub eb_renewal: f64,
    pub outage: OutageProfile,
}

/// Sum-direction goodput of AF, bits/s/Hz.
pub fn goodput_af(rate: f64, p: &AfOutagePair) -> f64 {
    rate * (2.0 - p.p12 - p.p21) / 2.0
}

pub fn eb_af(
    cfg: &NetworkConfig,
    rate: f64,
    p: &AfOutagePair,
    units: EnergyUnits,
) -> Result<f64, MetricsError> {
    let delivered = 2.0 - p.p12 - p.p21;
    if delivered <= 0.0 {
        return Err(MetricsError::InfiniteEnergy(format!(
            "both AF cascades are always in outage at R = {rate}"
        )));
    }
    Ok(cfg.total_power() / (delivered * rate * cfg.energy_bandwidth(units)))
}

/// DF goodput `pi(S3) R (2 - pr1 - pr2)` for a chain-solved or closed-form `pi`.
pub fn goodput_df(rate: f64, p: &DfOutageProfile, pi: &StationaryDistribution) -> f64 {
    pi.get(df_state::S3) * rate * (2.0 - p.pr1 - p.pr2)
}

/// Expected polling energy needed to reach the broadcast state from each
/// buffer state, `[E_S0, E_S1, E_S2, E_S3]`, in joules.
pub fn stage_energy_df(
    cfg: &NetworkConfig,
    rate: f64,
    p: &DfOutageProfile,
    units: EnergyUnits,
) -> Result<[f64; 4], MetricsError> {
    if p.p1r >= 1.0 || p.p2r >= 1.0 {
        return Err(MetricsError::InfiniteEnergy(format!(
            "a source-to-relay link is always in outage (p1r = {}, p2r = {})",
            p.p1r, p.p2r
        )));
    }
    let slot = cfg.codeword_bits as f64 / (rate * cfg.energy_bandwidth(units));
    let poll_t1 = cfg.p1 * slot / (1.0 - p.p1r);
    let poll_t2 = cfg.p2 * slot / (1.0 - p.p2r);
    Ok([poll_t1 + poll_t2, poll_t2, poll_t1, 0.0])
}

fn broadcast_terms(
    cfg: &NetworkConfig,
    rate: f64,
    p: &DfOutageProfile,
    units: EnergyUnits,
) -> Result<(f64, f64), MetricsError> {
    let delivered = 2.0 - p.pr1 - p.pr2;
    if delivered <= 0.0 {
        return Err(MetricsError::InfiniteEnergy(format!(
            "both relay broadcasts are always in outage at R = {rate}"
        )));
    }
    let broadcast = cfg.pr * cfg.codeword_bits as f64 / (rate * cfg.energy_bandwidth(units));
    Ok((broadcast, delivered * cfg.codeword_bits as f64))
}

/// State-weighted DF bit energy, with `pi_paper` taken from the closed form.
pub fn eb_df_paper(
    cfg: &NetworkConfig,
    rate: f64,
    p: &DfOutageProfile,
    pi_paper: &StationaryDistribution,
    units: EnergyUnits,
) -> Result<f64, MetricsError> {
    let (broadcast, bits) = broadcast_terms(cfg, rate, p, units)?;
    let e = stage_energy_df(cfg, rate, p, units)?;
    let polling: f64 = (0..3).map(|i| e[i] * pi_paper.get(i)).sum();
    Ok((polling + broadcast) / bits)
}

/// Distribution of the buffer state right after a broadcast.
pub fn df_post_broadcast(p: &DfOutageProfile) -> [f64; 4] {
    [
        (1.0 - p.pr1) * (1.0 - p.pr2),
        (1.0 - p.pr1) * p.pr2,
        p.pr1 * (1.0 - p.pr2),
        p.pr1 * p.pr2,
    ]
}

pub fn eb_df_renewal(
    cfg: &NetworkConfig,
    rate: f64,
    p: &DfOutageProfile,
    units: EnergyUnits,
) -> Result<f64, MetricsError> {
    let (broadcast, bits) = broadcast_terms(cfg, rate, p, units)?;
    let e = stage_energy_df(cfg, rate, p, units)?;
    let q = df_post_broadcast(p);
    let polling: f64 = e.iter().zip(q).map(|(e, q)| e * q).sum();
    Ok((polling + broadcast) / bits)
}

pub fn normalized_rate(goodput: f64, rate: f64) -> Result<f64, MetricsError> {
    if rate > 0.0 {
        Ok(goodput / rate)
    } else {
        Err(MetricsError::UndefinedRate(rate))
    }
}

/// True when some link is in outage with probability one (to double
/// precision) in a way that traps the protocol in a non-delivering state.
pub fn df_never_delivers(p: &DfOutageProfile) -> bool {
    p.p1r >= 1.0 || p.p2r >= 1.0 || (p.pr1 >= 1.0 && p.pr2 >= 1.0)
}

fn infinite_if_undeliverable(r: Result<f64, MetricsError>) -> Result<f64, MetricsError> {
    match r {
        Err(MetricsError::InfiniteEnergy(_)) => Ok(f64::INFINITY),
        other => other,
    }
}

/// Evaluates every analytic metric of `mode` at rate `rate`. Operating points
/// that never deliver a bit report an infinite bit energy.
pub fn analyze_point(
    cfg: &NetworkConfig,
    mode: Mode,
    rate: f64,
    units: EnergyUnits,
) -> Result<PerformancePoint, MetricsError> {
    let params = derive_params(cfg)?;
    match mode {
        Mode::Af => {
            let p = channel::af_outage_pair(cfg, &params, rate)?;
            let goodput = goodput_af(rate, &p);
            let eb = infinite_if_undeliverable(eb_af(cfg, rate, &p, units))?;
            Ok(PerformancePoint {
                rate,
                goodput,
                normalized_rate: normalized_rate(goodput, rate)?,
                eb_paper: eb,
                eb_renewal: eb,
                outage: OutageProfile::Af(p),
            })
        }
        Mode::Df => {
            let p = channel::df_outage_profile(cfg, &params, rate);
            if df_never_delivers(&p) {
                return Ok(PerformancePoint {
                    rate,
                    goodput: 0.0,
                    normalized_rate: normalized_rate(0.0, rate)?,
                    eb_paper: f64::INFINITY,
                    eb_renewal: f64::INFINITY,
                    outage: OutageProfile::Df(p),
                });
            }
            let pi = markov::stationary(&markov::build_df_chain(&p))?;
            let pi_paper = markov::df_stationary_paper(&p)?;
            let goodput = goodput_df(rate, &p, &pi);
            Ok(PerformancePoint {
                rate,
                goodput,
                normalized_rate: normalized_rate(goodput, rate)?,
                eb_paper: infinite_if_undeliverable(eb_df_paper(cfg, rate, &p, &pi_paper, units))?,
                eb_renewal: infinite_if_undeliverable(eb_df_renewal(cfg, rate, &p, units))?,
                outage: OutageProfile::Df(p),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::{build_df_chain, df_stationary_paper, stationary};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn equal_power(p: f64) -> NetworkConfig {
        NetworkConfig {
            p1: p,
            p2: p,
            pr: p,
            ..NetworkConfig::reference(0.0)
        }
    }

    const NORM: EnergyUnits = EnergyUnits::PaperNormalized;

    #[test]
    fn af_goodput_examples() {
        assert_eq!(goodput_af(3.0, &AfOutagePair { p12: 0.0, p21: 0.0 }), 3.0);
        assert_eq!(goodput_af(3.0, &AfOutagePair { p12: 1.0, p21: 1.0 }), 0.0);
        assert_relative_eq!(
            goodput_af(2.0, &AfOutagePair { p12: 0.1, p21: 0.3 }),
            1.6,
            max_relative = 1e-15
        );
    }

    #[test]
    fn af_bit_energy_examples() {
        let cfg = equal_power(2.0);
        let zero = AfOutagePair { p12: 0.0, p21: 0.0 };
        assert_relative_eq!(eb_af(&cfg, 4.0, &zero, NORM).unwrap(), 3.0 * 2.0 / 8.0);
        let p = AfOutagePair { p12: 0.2, p21: 0.5 };
        let e1 = eb_af(&cfg, 1.5, &p, NORM).unwrap();
        let e2 = eb_af(&cfg, 3.0, &p, NORM).unwrap();
        assert_relative_eq!(e1, 2.0 * e2, max_relative = 1e-15);
        let joules = eb_af(&cfg, 1.5, &p, EnergyUnits::Joules).unwrap();
        assert_relative_eq!(joules * cfg.bandwidth_hz, e1, max_relative = 1e-15);
        assert!(matches!(
            eb_af(&cfg, 1.0, &AfOutagePair { p12: 1.0, p21: 1.0 }, NORM),
            Err(MetricsError::InfiniteEnergy(_))
        ));
    }

    #[test]
    fn df_goodput_examples() {
        let zero = DfOutageProfile::zero();
        let pi = stationary(&build_df_chain(&zero)).unwrap();
        assert_relative_eq!(goodput_df(3.0, &zero, &pi), 2.0, max_relative = 1e-14);

        let dead = DfOutageProfile {
            pr1: 1.0,
            pr2: 1.0,
            ..zero
        };
        let pi = df_stationary_paper(&dead).unwrap();
        assert_eq!(goodput_df(3.0, &dead, &pi), 0.0);
    }

    #[test]
    fn stage_energies() {
        let cfg = equal_power(1.5);
        let l = cfg.codeword_bits as f64;
        let r = 2.0;
        let e = stage_energy_df(&cfg, r, &DfOutageProfile::zero(), NORM).unwrap();
        let unit = 1.5 * l / r;
        assert_eq!(e, [2.0 * unit, unit, unit, 0.0]);

        let p = DfOutageProfile {
            p1r: 0.3,
            p2r: 0.5,
            pr1: 0.1,
            pr2: 0.2,
        };
        let e = stage_energy_df(&cfg, r, &p, NORM).unwrap();
        assert_relative_eq!(e[0], e[1] + e[2], max_relative = 1e-15);
        assert_relative_eq!(e[1], 2.0 * unit, max_relative = 1e-15);

        let stuck = DfOutageProfile { p1r: 1.0, ..p };
        assert!(stage_energy_df(&cfg, r, &stuck, NORM).is_err());
    }

    #[test]
    fn df_bit_energy_zero_outage_forms() {
        let cfg = equal_power(2.0);
        let zero = DfOutageProfile::zero();
        let pi_paper = df_stationary_paper(&zero).unwrap();
        let paper = eb_df_paper(&cfg, 4.0, &zero, &pi_paper, NORM).unwrap();
        let renewal = eb_df_renewal(&cfg, 4.0, &zero, NORM).unwrap();
        assert_relative_eq!(paper, 2.0 / 4.0, max_relative = 1e-14);
        assert_relative_eq!(renewal, 3.0 * 2.0 / (2.0 * 4.0), max_relative = 1e-14);
        assert_relative_eq!(paper / renewal, 2.0 / 3.0, max_relative = 1e-14);
    }

    #[test]
    fn df_bit_energy_blows_up_without_deliveries() {
        let cfg = equal_power(1.0);
        let dead = DfOutageProfile {
            pr1: 1.0,
            pr2: 1.0,
            ..DfOutageProfile::zero()
        };
        assert!(eb_df_renewal(&cfg, 1.0, &dead, NORM).is_err());
        let pi = df_stationary_paper(&dead).unwrap();
        assert!(eb_df_paper(&cfg, 1.0, &dead, &pi, NORM).is_err());
        let near = DfOutageProfile {
            pr1: 1.0 - 1e-9,
            pr2: 1.0 - 1e-9,
            ..DfOutageProfile::zero()
        };
        assert!(eb_df_renewal(&cfg, 1.0, &near, NORM).unwrap() > 1e8);
    }

    #[test]
    fn df_trapped_operating_point() {
        // At 0 dB and R = 8 every relay broadcast is in outage to double precision.
        let pt = analyze_point(&NetworkConfig::reference(0.0), Mode::Df, 8.0, NORM).unwrap();
        assert_eq!(pt.goodput, 0.0);
        assert_eq!(pt.eb_renewal, f64::INFINITY);
        assert!(df_never_delivers(&DfOutageProfile { p2r: 1.0, ..DfOutageProfile::zero() }));
        assert!(!df_never_delivers(&DfOutageProfile { pr1: 1.0, ..DfOutageProfile::zero() }));
    }

    #[test]
    fn normalized_rate_cases() {
        assert_eq!(normalized_rate(2.0, 2.0).unwrap(), 1.0);
        assert_eq!(normalized_rate(0.0, 2.0).unwrap(), 0.0);
        assert!(matches!(normalized_rate(1.0, 0.0), Err(MetricsError::UndefinedRate(_))));
        let df = analyze_point(&NetworkConfig::reference(20.0), Mode::Df, 1e-4, NORM).unwrap();
        assert!((df.normalized_rate - 2.0 / 3.0).abs() < 1e-4);
    }

    #[test]
    fn symmetric_df_goodput_agrees_between_distributions() {
        let cfg = NetworkConfig::reference(10.0);
        let d = derive_params(&cfg).unwrap();
        let p = channel::df_outage_profile(&cfg, &d, 2.0);
        let chain = stationary(&build_df_chain(&p)).unwrap();
        let paper = df_stationary_paper(&p).unwrap();
        assert!((goodput_df(2.0, &p, &chain) - goodput_df(2.0, &p, &paper)).abs() < 1e-9);
        let eb = eb_df_paper(&cfg, 2.0, &p, &paper, EnergyUnits::Joules).unwrap();
        assert!(eb.is_finite() && eb > 0.0);
    }

    proptest! {
        #[test]
        fn af_energy_goodput_product(snr_db in -5.0f64..25.0, rate in 0.05f64..10.0) {
            let cfg = NetworkConfig::reference(snr_db);
            let pt = analyze_point(&cfg, Mode::Af, rate, EnergyUnits::Joules).unwrap();
            prop_assume!(pt.eb_paper.is_finite());
            let product = pt.eb_paper * pt.goodput * cfg.bandwidth_hz;
            let want = cfg.total_power() / 2.0;
            prop_assert!(((product - want) / want).abs() < 1e-12);
        }

        #[test]
        fn normalized_rate_bounds(snr_db in -5.0f64..25.0, rate in 0.05f64..12.0, k in 0.1f64..0.9) {
            let cfg = NetworkConfig { k, ..NetworkConfig::reference(snr_db) };
            let af = analyze_point(&cfg, Mode::Af, rate, NORM).unwrap();
            prop_assert!((0.0..=1.0).contains(&af.normalized_rate));
            let df = analyze_point(&cfg, Mode::Df, rate, NORM).unwrap();
            {
                prop_assert!(df.normalized_rate >= 0.0 && df.normalized_rate <= 2.0 / 3.0 + 1e-12);
            }
        }
    }
}
