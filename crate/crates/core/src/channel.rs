//! Rayleigh block-fading channel: power-gain sampling, AF cascade rates and
//! the outage probabilities of both relaying modes.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::{DerivedParams, NetworkConfig};
use crate::numerics::{integrate_scaled, NumericsError, DEFAULT_REL_TOL};

/// Instantaneous power gains `|h|^2` of the four links in one fading block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelDraw {
    pub g1r: f64,
    pub g2r: f64,
    pub gr1: f64,
    pub gr2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AfOutagePair {
    /// Outage probability of the T1 -> relay -> T2 cascade.
    pub p12: f64,
    /// Outage probability of the T2 -> relay -> T1 cascade.
    pub p21: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DfOutageProfile {
    pub p1r: f64,
    pub p2r: f64,
    pub pr1: f64,
    pub pr2: f64,
}

impl DfOutageProfile {
    pub fn zero() -> Self {
        Self {
            p1r: 0.0,
            p2r: 0.0,
            pr1: 0.0,
            pr2: 0.0,
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.p1r, self.p2r, self.pr1, self.pr2]
    }
}

fn exp_variate<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> f64 {
    // One 64-bit word per variate keeps the stream position a fixed
    // function of the slot index.
    let u: f64 = rng.random();
    -mean * (-u).ln_1p()
}

/// Number of 32-bit stream words consumed by one [`sample_channel_draw`].
pub const WORDS_PER_DRAW: u128 = 8;

/// Draws four independent exponential gains with means `(mu1, mu2, mu1, mu2)`.
pub fn sample_channel_draw<R: Rng + ?Sized>(params: &DerivedParams, rng: &mut R) -> ChannelDraw {
    ChannelDraw {
        g1r: exp_variate(rng, params.sigma1_sq),
        g2r: exp_variate(rng, params.sigma2_sq),
        gr1: exp_variate(rng, params.sigma1_sq),
        gr2: exp_variate(rng, params.sigma2_sq),
    }
}

/// Cascade rates `(r12, r21)` in bits/s/Hz after self-interference removal.
pub fn af_instantaneous_rates(
    draw: &ChannelDraw,
    cfg: &NetworkConfig,
    params: &DerivedParams,
) -> (f64, f64) {
    let b2 = params.beta * params.beta;
    let cascade = |g_up: f64, g_down: f64, p: f64| {
        let amp = b2 * g_down;
        let snr = amp * g_up * p / ((1.0 + amp) * cfg.noise_power);
        snr.ln_1p() / std::f64::consts::LN_2
    };
    (
        cascade(draw.g1r, draw.gr2, cfg.p1),
        cascade(draw.g2r, draw.gr1, cfg.p2),
    )
}

/// Single-hop rates `[r_1r, r_2r, r_r1, r_r2]` of sequential DF, bits/s/Hz.
/// The relay broadcast carries both codewords at half power each.
pub fn df_instantaneous_rates(draw: &ChannelDraw, cfg: &NetworkConfig) -> [f64; 4] {
    let rate = |g: f64, p: f64| (g * p / cfg.noise_power).ln_1p() / std::f64::consts::LN_2;
    [
        rate(draw.g1r, cfg.p1),
        rate(draw.g2r, cfg.p2),
        rate(draw.gr1, cfg.pr / 2.0),
        rate(draw.gr2, cfg.pr / 2.0),
    ]
}

/// CDF of `X = Y1 * Y2 / (a + Y2)` with `Y1 ~ Exp(mu1)`, `Y2 ~ Exp(mu2)`:
/// `F(x) = 1 - e^{-x/mu1} J`, `J = (1/mu2) int_0^inf exp(-x a/(mu1 z) - z/mu2) dz`.
///
/// When `F` is small it is assembled from non-negative pieces,
/// `(1 - e^{-x/mu1}) + e^{-x/mu1} (1 - J)` with `1 - J` integrated directly,
/// so neither tail of the distribution suffers cancellation.
pub fn cascade_cdf(x: f64, a: f64, mu1: f64, mu2: f64) -> Result<f64, NumericsError> {
    cascade_cdf_tol(x, a, mu1, mu2, DEFAULT_REL_TOL)
}

pub fn cascade_cdf_tol(
    x: f64,
    a: f64,
    mu1: f64,
    mu2: f64,
    rel_tol: f64,
) -> Result<f64, NumericsError> {
    debug_assert!(mu1 > 0.0 && mu2 > 0.0 && a >= 0.0);
    if x <= 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(1.0);
    }
    let decay = (-x / mu1).exp();
    let b = x * a / mu1;
    if b == 0.0 {
        return Ok(-(-x / mu1).exp_m1());
    }
    let f = if decay < 0.5 {
        let j = integrate_scaled(|z| (-b / z - z / mu2).exp(), mu2, rel_tol)?.value / mu2;
        1.0 - decay * j
    } else {
        let one_minus_j = integrate_scaled(
            |z| -(-b / z).exp_m1() * (-z / mu2).exp(),
            mu2,
            rel_tol,
        )?
        .value
            / mu2;
        -(-x / mu1).exp_m1() + decay * one_minus_j
    };
    Ok(f.clamp(0.0, 1.0))
}

/// SNR threshold of a link: `(2^R - 1) * noise / power`.
pub fn outage_threshold(rate: f64, noise_power: f64, power: f64) -> f64 {
    (rate * std::f64::consts::LN_2).exp_m1() * noise_power / power
}

pub fn af_outage_pair(
    cfg: &NetworkConfig,
    params: &DerivedParams,
    rate: f64,
) -> Result<AfOutagePair, NumericsError> {
    assert!(rate >= 0.0, "rate must be non-negative");
    if rate == 0.0 {
        return Ok(AfOutagePair { p12: 0.0, p21: 0.0 });
    }
    let a = 1.0 / (params.beta * params.beta);
    let (mu1, mu2) = (params.sigma1_sq, params.sigma2_sq);
    let p12 = cascade_cdf(outage_threshold(rate, cfg.noise_power, cfg.p1), a, mu1, mu2)?;
    let p21 = cascade_cdf(outage_threshold(rate, cfg.noise_power, cfg.p2), a, mu2, mu1)?;
    Ok(AfOutagePair { p12, p21 })
}

/// Per-link outage probabilities for sequential decode-and-forward. The relay
/// splits its power evenly between the two codewords it superimposes.
pub fn df_outage_profile(cfg: &NetworkConfig, params: &DerivedParams, rate: f64) -> DfOutageProfile {
    assert!(rate >= 0.0, "rate must be non-negative");
    let link = |mu: f64, power: f64| -> f64 {
        -(-outage_threshold(rate, cfg.noise_power, power) / mu).exp_m1()
    };
    DfOutageProfile {
        p1r: link(params.sigma1_sq, cfg.p1),
        p2r: link(params.sigma2_sq, cfg.p2),
        pr1: link(params.sigma1_sq, cfg.pr / 2.0),
        pr2: link(params.sigma2_sq, cfg.pr / 2.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::derive_params;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn reference(snr_db: f64) -> (NetworkConfig, DerivedParams) {
        let cfg = NetworkConfig::reference(snr_db);
        let d = derive_params(&cfg).unwrap();
        (cfg, d)
    }

    #[test]
    fn sample_means_match_link_variances() {
        let d = DerivedParams {
            sigma1_sq: 1.0,
            sigma2_sq: 1.0,
            ..reference(10.0).1
        };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 1_000_000;
        let mut sums = [0.0; 4];
        for _ in 0..n {
            let g = sample_channel_draw(&d, &mut rng);
            for (s, v) in sums.iter_mut().zip([g.g1r, g.g2r, g.gr1, g.gr2]) {
                *s += v;
            }
        }
        // Exp(1) has unit standard deviation.
        let se = 1.0 / (n as f64).sqrt();
        for s in sums {
            assert!((s / n as f64 - 1.0).abs() < 5.0 * se, "{}", s / n as f64);
        }
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let d = reference(10.0).1;
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..100).map(|_| sample_channel_draw(&d, &mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(run(3), run(3));
        assert_ne!(run(3), run(4));
    }

    #[test]
    fn draws_are_addressable_by_stream_position() {
        let d = reference(10.0).1;
        let mut seq = ChaCha8Rng::seed_from_u64(11);
        let draws: Vec<_> = (0..50).map(|_| sample_channel_draw(&d, &mut seq)).collect();
        let mut jump = ChaCha8Rng::seed_from_u64(11);
        jump.set_word_pos(37 * WORDS_PER_DRAW);
        assert_eq!(sample_channel_draw(&d, &mut jump), draws[37]);
    }

    #[test]
    fn exponential_median() {
        let d = reference(10.0).1;
        let mu = d.sigma1_sq;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 400_000;
        let below = (0..n)
            .filter(|_| sample_channel_draw(&d, &mut rng).g1r < mu * std::f64::consts::LN_2)
            .count();
        let frac = below as f64 / n as f64;
        assert!((frac - 0.5).abs() < 4.0 * 0.5 / (n as f64).sqrt(), "{frac}");
    }

    #[test]
    fn cascade_rates_edge_cases() {
        let (cfg, d) = reference(10.0);
        let zero = ChannelDraw {
            g1r: 0.0,
            g2r: 0.0,
            gr1: 0.0,
            gr2: 0.0,
        };
        assert_eq!(af_instantaneous_rates(&zero, &cfg, &d), (0.0, 0.0));

        let sym = ChannelDraw {
            g1r: 1.3,
            g2r: 1.3,
            gr1: 0.4,
            gr2: 0.4,
        };
        let (r12, r21) = af_instantaneous_rates(&sym, &cfg, &d);
        assert_eq!(r12, r21);
        assert!(r12 > 0.0);

        let strong = ChannelDraw {
            gr2: 1e15,
            ..sym
        };
        let (r12, _) = af_instantaneous_rates(&strong, &cfg, &d);
        let limit = (1.0 + strong.g1r * cfg.p1 / cfg.noise_power).log2();
        assert_relative_eq!(r12, limit, max_relative = 1e-9);
    }

    #[test]
    fn cascade_cdf_basic_values() {
        assert_eq!(cascade_cdf(0.0, 3.0, 1.0, 2.0).unwrap(), 0.0);
        let f = cascade_cdf(std::f64::consts::LN_2, 0.0, 1.0, 5.0).unwrap();
        assert_relative_eq!(f, 0.5, max_relative = 1e-12);
        let tiny_a = cascade_cdf(std::f64::consts::LN_2, 1e-12, 1.0, 5.0).unwrap();
        assert!((tiny_a - 0.5).abs() < 1e-9);
    }

    #[test]
    fn cascade_cdf_matches_original_integral_form() {
        // The literal form 1 - (1/mu2) * int exp(-x(a+z)/(mu1 z) - z/mu2) dz.
        for &(x, a, mu1, mu2) in &[(0.5, 2.0, 1.0, 3.0), (3.0, 17.0, 8.7, 8.7), (0.02, 0.3, 2.0, 0.5)] {
            let literal = 1.0
                - crate::numerics::integrate_semi_infinite(
                    |z| (-x * (a + z) / (mu1 * z) - z / mu2).exp(),
                    1e-11,
                )
                .unwrap()
                .value
                    / mu2;
            let ours = cascade_cdf(x, a, mu1, mu2).unwrap();
            assert!((ours - literal).abs() < 1e-9, "{ours} vs {literal}");
        }
    }

    #[test]
    fn af_outage_zero_rate_and_symmetry() {
        let (cfg, d) = reference(10.0);
        assert_eq!(
            af_outage_pair(&cfg, &d, 0.0).unwrap(),
            AfOutagePair { p12: 0.0, p21: 0.0 }
        );
        let p = af_outage_pair(&cfg, &d, 2.0).unwrap();
        assert_eq!(p.p12, p.p21);
        assert!(p.p12 > 0.0 && p.p12 < 1.0);
    }

    #[test]
    fn af_outage_uses_link_specific_means() {
        // Asymmetric geometry: p21 swaps the roles of the two link variances.
        let cfg = NetworkConfig {
            k: 0.3,
            ..NetworkConfig::reference(10.0)
        };
        let d = derive_params(&cfg).unwrap();
        let p = af_outage_pair(&cfg, &d, 2.0).unwrap();
        let x = outage_threshold(2.0, cfg.noise_power, cfg.p1);
        let a = 1.0 / (d.beta * d.beta);
        assert_eq!(p.p12, cascade_cdf(x, a, d.sigma1_sq, d.sigma2_sq).unwrap());
        assert_eq!(p.p21, cascade_cdf(x, a, d.sigma2_sq, d.sigma1_sq).unwrap());
        assert_ne!(p.p12, p.p21);
    }

    #[test]
    fn df_profile_identities() {
        let (cfg, d) = reference(10.0);
        let z = df_outage_profile(&cfg, &d, 0.0);
        assert_eq!(z, DfOutageProfile::zero());

        let p = df_outage_profile(&cfg, &d, 2.0);
        assert_eq!(p.p1r, p.p2r);
        assert_eq!(p.pr1, p.pr2);

        let halved = NetworkConfig {
            p1: cfg.pr / 2.0,
            ..cfg.clone()
        };
        let q = df_outage_profile(&halved, &d, 2.0);
        assert_relative_eq!(p.pr1, q.p1r, max_relative = 1e-15);
    }

    proptest! {
        #[test]
        fn outages_monotone_in_rate_and_power(
            k in 0.1f64..0.9, snr_db in -5.0f64..25.0,
            r1 in 0.05f64..8.0, dr in 0.0f64..2.0, boost in 1.0f64..4.0,
        ) {
            let cfg = NetworkConfig { k, ..NetworkConfig::reference(snr_db) };
            let d = derive_params(&cfg).unwrap();
            let r2 = r1 + dr;
            let (a1, a2) = (af_outage_pair(&cfg, &d, r1).unwrap(), af_outage_pair(&cfg, &d, r2).unwrap());
            prop_assert!(a1.p12 <= a2.p12 + 1e-12 && a1.p21 <= a2.p21 + 1e-12);
            let (f1, f2) = (df_outage_profile(&cfg, &d, r1), df_outage_profile(&cfg, &d, r2));
            for (lo, hi) in f1.as_array().into_iter().zip(f2.as_array()) {
                prop_assert!(lo <= hi && (0.0..=1.0).contains(&lo));
            }
            let louder = NetworkConfig { p1: cfg.p1 * boost, pr: cfg.pr * boost, ..cfg.clone() };
            let dl = derive_params(&louder).unwrap();
            let g = df_outage_profile(&louder, &dl, r1);
            prop_assert!(g.p1r <= f1.p1r && g.pr1 <= f1.pr1 && g.pr2 <= f1.pr2);
        }

        #[test]
        fn cascade_cdf_is_a_cdf(a in 0.0f64..30.0, mu1 in 0.2f64..20.0, mu2 in 0.2f64..20.0,
                                 x1 in 0.0f64..10.0, dx in 0.0f64..10.0) {
            let f1 = cascade_cdf(x1, a, mu1, mu2).unwrap();
            let f2 = cascade_cdf(x1 + dx, a, mu1, mu2).unwrap();
            prop_assert!((0.0..=1.0).contains(&f1));
            prop_assert!(f1 <= f2 + 1e-12);
        }
    }

    #[test]
    fn cascade_cdf_tends_to_one() {
        let f = cascade_cdf(500.0, 17.0, 8.7, 8.7).unwrap();
        assert!(f > 1.0 - 1e-12);
    }
}
