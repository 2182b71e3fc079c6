//! Slot-level Monte Carlo execution of the AF and DF ARQ protocols.
//!
//! Success of a transmission is the event `{instantaneous rate >= R}`; ACK and
//! NACK are free and error-free. Gains are redrawn every AF round and every
//! DF slot.
//!
//! Replication `i` of a run seeded with `seed` uses ChaCha8 stream `i` of that
//! seed, and every fading block consumes exactly [`WORDS_PER_DRAW`] words, so
//! any block is addressable from `(seed, replication, block index)` alone.
//! Results are merged in replication order and do not depend on how many
//! worker threads executed them.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::channel::{af_instantaneous_rates, df_instantaneous_rates, sample_channel_draw, WORDS_PER_DRAW};
use crate::config::{derive_params, ConfigError, EnergyUnits, NetworkConfig};
use crate::markov::{af_state, df_state, Mode};

/// Contiguous batches each replication is split into for batch-means errors.
pub const BATCHES_PER_REPLICATION: u64 = 32;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("failed to build worker pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SimOptions {
    pub units: EnergyUnits,
    /// Worker threads for replications; `None` uses the global pool.
    pub workers: Option<usize>,
    /// Record how many attempts each AF codeword needed.
    pub track_attempts: bool,
}

/// Raw counters of a contiguous stretch of simulated time.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct Tally {
    pub slots: u64,
    pub rounds: u64,
    pub bits_t1_to_t2: u64,
    pub bits_t2_to_t1: u64,
    /// Slots in which T1, T2 and the relay transmitted.
    pub tx_t1: u64,
    pub tx_t2: u64,
    pub tx_relay: u64,
    pub occupancy: Vec<u64>,
    pub link_trials: Vec<u64>,
    pub link_outages: Vec<u64>,
    /// DF only: destination state of each broadcast, indexed S0..S3.
    pub broadcast_exits: Vec<u64>,
}

impl Tally {
    fn new(mode: Mode) -> Self {
        let links = link_labels(mode).len();
        Self {
            occupancy: vec![0; mode.n_states()],
            link_trials: vec![0; links],
            link_outages: vec![0; links],
            broadcast_exits: vec![0; if mode == Mode::Df { 4 } else { 0 }],
            ..Self::default()
        }
    }

    fn add(&mut self, other: &Tally) {
        self.slots += other.slots;
        self.rounds += other.rounds;
        self.bits_t1_to_t2 += other.bits_t1_to_t2;
        self.bits_t2_to_t1 += other.bits_t2_to_t1;
        self.tx_t1 += other.tx_t1;
        self.tx_t2 += other.tx_t2;
        self.tx_relay += other.tx_relay;
        let add_vec = |a: &mut Vec<u64>, b: &Vec<u64>| a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        add_vec(&mut self.occupancy, &other.occupancy);
        add_vec(&mut self.link_trials, &other.link_trials);
        add_vec(&mut self.link_outages, &other.link_outages);
        add_vec(&mut self.broadcast_exits, &other.broadcast_exits);
    }

    pub fn bits(&self) -> u64 {
        self.bits_t1_to_t2 + self.bits_t2_to_t1
    }
}

pub fn link_labels(mode: Mode) -> &'static [&'static str] {
    match mode {
        Mode::Af => &["p12", "p21"],
        Mode::Df => &["p1r", "p2r", "pr1", "pr2"],
    }
}

/// Per-slot energy quanta of T1, T2 and the relay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlotEnergy {
    pub t1: f64,
    pub t2: f64,
    pub relay: f64,
}

impl SlotEnergy {
    pub fn new(cfg: &NetworkConfig, rate: f64, units: EnergyUnits) -> Self {
        let slot = cfg.codeword_bits as f64 / (rate * cfg.energy_bandwidth(units));
        Self {
            t1: cfg.p1 * slot,
            t2: cfg.p2 * slot,
            relay: cfg.pr * slot,
        }
    }

    pub fn total(&self, t: &Tally) -> f64 {
        t.tx_t1 as f64 * self.t1 + t.tx_t2 as f64 * self.t2 + t.tx_relay as f64 * self.relay
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinkOutageEstimate {
    pub link: &'static str,
    pub trials: u64,
    pub outages: u64,
    pub frequency: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StderrMethod {
    BetweenReplication,
    BatchMeans,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimResult {
    pub mode: Mode,
    pub rate: f64,
    pub codeword_bits: u64,
    pub replications: usize,
    pub slots: u64,
    /// AF rounds, or DF broadcasts.
    pub rounds: u64,
    pub bits_t1_to_t2: u64,
    pub bits_t2_to_t1: u64,
    /// Total transmitted energy (joules, or normalized units).
    pub energy: f64,
    pub slot_energy: SlotEnergy,
    pub transmissions: [u64; 3],
    pub state_labels: Vec<&'static str>,
    pub state_occupancy: Vec<u64>,
    pub broadcast_exits: Vec<u64>,
    pub empirical_goodput: Estimate,
    pub empirical_eb: Estimate,
    pub empirical_outage: Vec<LinkOutageEstimate>,
    pub stderr_method: StderrMethod,
    /// AF, when requested: attempts needed per delivered codeword, per direction.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attempt_histogram: Option<[BTreeMap<u32, u64>; 2]>,
    #[serde(skip)]
    pub replication_tallies: Vec<Tally>,
    #[serde(skip)]
    pub batch_tallies: Vec<Tally>,
}

impl SimResult {
    pub fn occupancy_fractions(&self) -> Vec<f64> {
        self.state_occupancy
            .iter()
            .map(|&c| c as f64 / self.slots as f64)
            .collect()
    }

    pub fn total(&self) -> Tally {
        let mut t = Tally::new(self.mode);
        for r in &self.replication_tallies {
            t.add(r);
        }
        t
    }
}

/// Ratio-of-sums estimator with its delta-method standard error over units.
fn ratio_estimate(pairs: &[(f64, f64)]) -> Estimate {
    let (ys, xs) = pairs.iter().fold((0.0, 0.0), |(y, x), p| (y + p.0, x + p.1));
    let value = ys / xs;
    let n = pairs.len();
    if n < 2 || !value.is_finite() {
        return Estimate {
            value,
            stderr: f64::NAN,
        };
    }
    let x_mean = xs / n as f64;
    let ss: f64 = pairs.iter().map(|(y, x)| (y - value * x).powi(2)).sum();
    Estimate {
        value,
        stderr: (ss / (n as f64 * (n - 1) as f64)).sqrt() / x_mean,
    }
}

struct RunOutput {
    batches: Vec<Tally>,
    attempts: Option<[BTreeMap<u32, u64>; 2]>,
}

fn replication_rng(seed: u64, replication: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replication);
    rng
}

/// Generator positioned at fading block `block` of a replication.
pub fn block_rng(seed: u64, replication: u64, block: u64) -> ChaCha8Rng {
    let mut rng = replication_rng(seed, replication);
    rng.set_word_pos(block as u128 * WORDS_PER_DRAW);
    rng
}

fn batch_bounds(units: u64) -> Vec<u64> {
    let nb = BATCHES_PER_REPLICATION.min(units).max(1);
    (0..=nb).map(|b| b * units / nb).collect()
}

fn run_af(
    cfg: &NetworkConfig,
    rate: f64,
    rounds: u64,
    seed: u64,
    replication: u64,
    track_attempts: bool,
) -> Result<RunOutput, SimError> {
    let params = derive_params(cfg)?;
    let mut rng = replication_rng(seed, replication);
    let l = cfg.codeword_bits;
    let mut attempts = [0u32; 2];
    let mut hist: [BTreeMap<u32, u64>; 2] = Default::default();
    let bounds = batch_bounds(rounds);
    let mut batches = Vec::with_capacity(bounds.len() - 1);
    for w in bounds.windows(2) {
        let mut t = Tally::new(Mode::Af);
        for _ in w[0]..w[1] {
            let draw = sample_channel_draw(&params, &mut rng);
            let (r12, r21) = af_instantaneous_rates(&draw, cfg, &params);
            let ok = [r12 >= rate, r21 >= rate];
            t.rounds += 1;
            t.slots += 2;
            t.tx_t1 += 1;
            t.tx_t2 += 1;
            t.tx_relay += 1;
            t.occupancy[af_state::SB] += 1;
            let state = match ok {
                [false, false] => af_state::S0,
                [true, false] => af_state::S1,
                [false, true] => af_state::S2,
                [true, true] => af_state::S3,
            };
            t.occupancy[state] += 1;
            for (dir, &success) in ok.iter().enumerate() {
                t.link_trials[dir] += 1;
                if success {
                    if dir == 0 {
                        t.bits_t1_to_t2 += l;
                    } else {
                        t.bits_t2_to_t1 += l;
                    }
                } else {
                    t.link_outages[dir] += 1;
                }
                // A NACKed codeword is resent; an ACKed one is replaced.
                attempts[dir] += 1;
                if success {
                    if track_attempts {
                        *hist[dir].entry(attempts[dir]).or_default() += 1;
                    }
                    attempts[dir] = 0;
                }
            }
        }
        batches.push(t);
    }
    Ok(RunOutput {
        batches,
        attempts: track_attempts.then_some(hist),
    })
}

fn run_df(
    cfg: &NetworkConfig,
    rate: f64,
    slots: u64,
    seed: u64,
    replication: u64,
) -> Result<RunOutput, SimError> {
    use df_state::*;
    let params = derive_params(cfg)?;
    let mut rng = replication_rng(seed, replication);
    let l = cfg.codeword_bits;
    let mut state = S0;
    let bounds = batch_bounds(slots);
    let mut batches = Vec::with_capacity(bounds.len() - 1);
    for w in bounds.windows(2) {
        let mut t = Tally::new(Mode::Df);
        for _ in w[0]..w[1] {
            let draw = sample_channel_draw(&params, &mut rng);
            let [r1r, r2r, rr1, rr2] = df_instantaneous_rates(&draw, cfg);
            t.slots += 1;
            t.occupancy[state] += 1;
            state = match state {
                S0 | S2 => {
                    t.tx_t1 += 1;
                    t.link_trials[0] += 1;
                    if r1r >= rate {
                        if state == S0 {
                            S1
                        } else {
                            S3
                        }
                    } else {
                        t.link_outages[0] += 1;
                        state
                    }
                }
                S1 => {
                    t.tx_t2 += 1;
                    t.link_trials[1] += 1;
                    if r2r >= rate {
                        S3
                    } else {
                        t.link_outages[1] += 1;
                        S1
                    }
                }
                _ => {
                    t.tx_relay += 1;
                    t.rounds += 1;
                    t.link_trials[2] += 1;
                    t.link_trials[3] += 1;
                    // T1 decodes x2 over the relay->T1 link, T2 decodes x1 over relay->T2.
                    let to_t1 = rr1 >= rate;
                    let to_t2 = rr2 >= rate;
                    if to_t1 {
                        t.bits_t2_to_t1 += l;
                    } else {
                        t.link_outages[2] += 1;
                    }
                    if to_t2 {
                        t.bits_t1_to_t2 += l;
                    } else {
                        t.link_outages[3] += 1;
                    }
                    let next = match (to_t1, to_t2) {
                        (true, true) => S0,
                        (true, false) => S1,
                        (false, true) => S2,
                        (false, false) => S3,
                    };
                    t.broadcast_exits[next] += 1;
                    next
                }
            };
        }
        batches.push(t);
    }
    Ok(RunOutput {
        batches,
        attempts: None,
    })
}

fn validate(rate: f64, units: u64, what: &str) -> Result<(), SimError> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(SimError::Invalid(format!("rate must be finite and > 0, got {rate}")));
    }
    if units == 0 {
        return Err(SimError::Invalid(format!("number of {what} must be >= 1")));
    }
    Ok(())
}

fn run_one(
    cfg: &NetworkConfig,
    mode: Mode,
    rate: f64,
    size: u64,
    seed: u64,
    replication: u64,
    opts: &SimOptions,
) -> Result<RunOutput, SimError> {
    match mode {
        Mode::Af => run_af(cfg, rate, size, seed, replication, opts.track_attempts),
        Mode::Df => run_df(cfg, rate, size, seed, replication),
    }
}

fn assemble(
    cfg: &NetworkConfig,
    mode: Mode,
    rate: f64,
    runs: Vec<RunOutput>,
    opts: &SimOptions,
) -> SimResult {
    let quanta = SlotEnergy::new(cfg, rate, opts.units);
    let replication_tallies: Vec<Tally> = runs
        .iter()
        .map(|r| {
            let mut t = Tally::new(mode);
            r.batches.iter().for_each(|b| t.add(b));
            t
        })
        .collect();
    let mut total = Tally::new(mode);
    replication_tallies.iter().for_each(|t| total.add(t));

    let attempt_histogram = if opts.track_attempts && mode == Mode::Af {
        let mut merged: [BTreeMap<u32, u64>; 2] = Default::default();
        for r in &runs {
            if let Some(h) = &r.attempts {
                for dir in 0..2 {
                    for (k, v) in &h[dir] {
                        *merged[dir].entry(*k).or_default() += v;
                    }
                }
            }
        }
        Some(merged)
    } else {
        None
    };

    let batch_tallies: Vec<Tally> = runs.into_iter().flat_map(|r| r.batches).collect();
    let (units, stderr_method) = if replication_tallies.len() >= 2 {
        (&replication_tallies, StderrMethod::BetweenReplication)
    } else {
        (&batch_tallies, StderrMethod::BatchMeans)
    };
    let l = cfg.codeword_bits as f64;
    let goodput_pairs: Vec<(f64, f64)> = units
        .iter()
        .map(|t| (rate * t.bits() as f64 / l, t.slots as f64))
        .collect();
    let eb_pairs: Vec<(f64, f64)> = units
        .iter()
        .map(|t| (quanta.total(t), t.bits() as f64))
        .collect();

    let empirical_outage = link_labels(mode)
        .iter()
        .enumerate()
        .map(|(i, &link)| {
            let (n, k) = (total.link_trials[i], total.link_outages[i]);
            let f = k as f64 / n as f64;
            LinkOutageEstimate {
                link,
                trials: n,
                outages: k,
                frequency: f,
                stderr: (f * (1.0 - f) / n as f64).sqrt(),
            }
        })
        .collect();

    SimResult {
        mode,
        rate,
        codeword_bits: cfg.codeword_bits,
        replications: replication_tallies.len(),
        slots: total.slots,
        rounds: total.rounds,
        bits_t1_to_t2: total.bits_t1_to_t2,
        bits_t2_to_t1: total.bits_t2_to_t1,
        energy: quanta.total(&total),
        slot_energy: quanta,
        transmissions: [total.tx_t1, total.tx_t2, total.tx_relay],
        state_labels: mode.labels().to_vec(),
        state_occupancy: total.occupancy.clone(),
        broadcast_exits: total.broadcast_exits.clone(),
        empirical_goodput: ratio_estimate(&goodput_pairs),
        empirical_eb: ratio_estimate(&eb_pairs),
        empirical_outage,
        stderr_method,
        attempt_histogram,
        replication_tallies,
        batch_tallies,
    }
}

/// Simulates `n_rounds` AF rounds (two slots each).
pub fn simulate_af(
    cfg: &NetworkConfig,
    rate: f64,
    n_rounds: u64,
    seed: u64,
    opts: &SimOptions,
) -> Result<SimResult, SimError> {
    validate(rate, n_rounds, "rounds")?;
    let run = run_af(cfg, rate, n_rounds, seed, 0, opts.track_attempts)?;
    Ok(assemble(cfg, Mode::Af, rate, vec![run], opts))
}

/// Simulates `n_slots` DF slots starting from an empty relay buffer.
pub fn simulate_df(
    cfg: &NetworkConfig,
    rate: f64,
    n_slots: u64,
    seed: u64,
    opts: &SimOptions,
) -> Result<SimResult, SimError> {
    validate(rate, n_slots, "slots")?;
    let run = run_df(cfg, rate, n_slots, seed, 0)?;
    Ok(assemble(cfg, Mode::Df, rate, vec![run], opts))
}

/// Runs `n_reps` independent replications of `per_rep_size` rounds (AF) or
/// slots (DF) and merges them in replication order.
pub fn run_replications(
    cfg: &NetworkConfig,
    mode: Mode,
    rate: f64,
    per_rep_size: u64,
    n_reps: usize,
    master_seed: u64,
    opts: &SimOptions,
) -> Result<SimResult, SimError> {
    validate(rate, per_rep_size, if mode == Mode::Af { "rounds" } else { "slots" })?;
    if n_reps == 0 {
        return Err(SimError::Invalid("number of replications must be >= 1".into()));
    }
    derive_params(cfg)?;
    let work = || -> Result<Vec<RunOutput>, SimError> {
        (0..n_reps as u64)
            .into_par_iter()
            .map(|i| run_one(cfg, mode, rate, per_rep_size, master_seed, i, opts))
            .collect()
    };
    let runs = match opts.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| SimError::Pool(e.to_string()))?
            .install(work)?,
        None => work()?,
    };
    Ok(assemble(cfg, mode, rate, runs, opts))
}
