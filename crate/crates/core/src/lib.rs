//! Outage, goodput and bit-energy analysis of two-way relay networks under
//! Rayleigh block fading, for amplify-and-forward (AF) and sequential
//! decode-and-forward (DF) relaying with ARQ.
//!
//! The analytic side ([`channel`], [`markov`], [`metrics`]) is cross-checked
//! against a slot-level Monte Carlo protocol simulator ([`simulator`]);
//! [`optimizer`] sweeps rates and locates goodput- and energy-optimal
//! operating points, and [`cli`] exposes everything as the `twrn` command.

pub mod channel;
pub mod cli;
pub mod config;
pub mod markov;
pub mod metrics;
pub mod numerics;
pub mod optimizer;
pub mod output;
pub mod simulator;
pub mod validation;

pub use config::{derive_params, DerivedParams, EnergyUnits, NetworkConfig};
pub use markov::Mode;
