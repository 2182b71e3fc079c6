//! Rate sweeps and optimal-rate search.
//!
//! Neither goodput nor bit energy is known to be unimodal in the rate, so
//! the optimum is taken from a dense grid scan and then refined by golden
//! section inside the two grid cells around the best sample.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::config::{linear_to_db, EnergyUnits, NetworkConfig};
use crate::markov::Mode;
use crate::metrics::{analyze_point, MetricsError, PerformancePoint};
use crate::numerics::try_golden_section_max;
use crate::simulator::{run_replications, SimError, SimOptions, SimResult};

pub const DEFAULT_RATE_MIN: f64 = 0.05;
pub const DEFAULT_RATE_MAX: f64 = 12.0;
pub const DEFAULT_OPT_STEPS: usize = 200;
pub const DEFAULT_REFINE_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum OptimizerError {
    #[error("invalid sweep: {0}")]
    InvalidSpec(String),
    #[error("objective is non-finite at every grid rate")]
    NoFeasibleRate,
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateGrid {
    pub min: f64,
    pub max: f64,
    pub steps: usize,
    pub spacing: Spacing,
}

impl RateGrid {
    pub fn new(min: f64, max: f64, steps: usize, spacing: Spacing) -> Result<Self, OptimizerError> {
        if !(min > 0.0 && max > min && max.is_finite()) {
            return Err(OptimizerError::InvalidSpec(format!(
                "rate range must satisfy 0 < min < max, got [{min}, {max}]"
            )));
        }
        if steps < 2 {
            return Err(OptimizerError::InvalidSpec(format!("steps must be >= 2, got {steps}")));
        }
        Ok(Self {
            min,
            max,
            steps,
            spacing,
        })
    }

    pub fn rates(&self) -> Vec<f64> {
        let n = self.steps - 1;
        (0..self.steps)
            .map(|i| {
                if i == n {
                    return self.max;
                }
                let t = i as f64 / n as f64;
                match self.spacing {
                    Spacing::Linear => self.min + t * (self.max - self.min),
                    Spacing::Log => self.min * (self.max / self.min).powf(t),
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EbVariant {
    Paper,
    Renewal,
}

/// Monte Carlo budget per operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McBudget {
    /// Rounds (AF) or slots (DF) per replication.
    pub per_rep: u64,
    pub reps: usize,
    pub seed: u64,
    #[serde(skip)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MetricSource {
    Analytic,
    MonteCarlo(McBudget),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSpec {
    pub mode: Mode,
    pub grid: RateGrid,
    /// Equal-power SNRs to evaluate; empty means the configured powers.
    pub snr_db: Vec<f64>,
    pub source: MetricSource,
    pub eb_variant: EbVariant,
    pub refine_tol: f64,
    pub units: EnergyUnits,
}

impl SweepSpec {
    pub fn analytic(mode: Mode, grid: RateGrid, snr_db: Vec<f64>) -> Self {
        Self {
            mode,
            grid,
            snr_db,
            source: MetricSource::Analytic,
            eb_variant: EbVariant::Renewal,
            refine_tol: DEFAULT_REFINE_TOL,
            units: EnergyUnits::Joules,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub snr_db: f64,
    pub analytic: PerformancePoint,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub empirical: Option<SimResult>,
}

impl SweepPoint {
    /// Goodput under the sweep's metric source.
    pub fn goodput(&self) -> f64 {
        match &self.empirical {
            Some(sim) => sim.empirical_goodput.value,
            None => self.analytic.goodput,
        }
    }

    pub fn eb(&self, variant: EbVariant) -> f64 {
        match (&self.empirical, variant) {
            (Some(sim), _) => sim.empirical_eb.value,
            (None, EbVariant::Paper) => self.analytic.eb_paper,
            (None, EbVariant::Renewal) => self.analytic.eb_renewal,
        }
    }
}

/// The configuration evaluated for one SNR entry, and the SNR it reports.
pub fn config_for_snr(cfg: &NetworkConfig, snr_db: Option<f64>) -> (NetworkConfig, f64) {
    match snr_db {
        Some(db) => (cfg.with_equal_snr_db(db), db),
        None => (cfg.clone(), linear_to_db(cfg.p1 / cfg.noise_power)),
    }
}

fn snr_entries(spec: &SweepSpec) -> Vec<Option<f64>> {
    if spec.snr_db.is_empty() {
        vec![None]
    } else {
        spec.snr_db.iter().copied().map(Some).collect()
    }
}

pub fn evaluate_point(
    cfg: &NetworkConfig,
    snr_db: f64,
    mode: Mode,
    rate: f64,
    source: &MetricSource,
    units: EnergyUnits,
) -> Result<SweepPoint, OptimizerError> {
    let analytic = analyze_point(cfg, mode, rate, units)?;
    let empirical = match source {
        MetricSource::Analytic => None,
        MetricSource::MonteCarlo(b) => {
            let opts = SimOptions {
                units,
                workers: b.workers,
                track_attempts: false,
            };
            Some(run_replications(cfg, mode, rate, b.per_rep, b.reps, b.seed, &opts)?)
        }
    };
    Ok(SweepPoint {
        snr_db,
        analytic,
        empirical,
    })
}

/// Evaluates every `(snr, rate)` pair, SNR-major and rate-minor.
pub fn sweep(cfg: &NetworkConfig, spec: &SweepSpec) -> Result<Vec<SweepPoint>, OptimizerError> {
    let rates = spec.grid.rates();
    let jobs: Vec<(NetworkConfig, f64, f64)> = snr_entries(spec)
        .into_iter()
        .flat_map(|snr| {
            let (c, db) = config_for_snr(cfg, snr);
            rates.iter().map(move |&r| (c.clone(), db, r))
        })
        .collect();
    jobs.par_iter()
        .map(|(c, db, r)| evaluate_point(c, *db, spec.mode, *r, &spec.source, spec.units))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    MaxGoodput,
    MinEb,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimalRateReport {
    pub mode: Mode,
    pub snr_db: f64,
    pub objective: Objective,
    pub rate: f64,
    pub value: f64,
    /// Grid neighbours of the best grid sample; refinement stays inside.
    pub bracket: (f64, f64),
    pub grid_best_rate: f64,
    pub grid: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridOptimum {
    pub rate: f64,
    pub score: f64,
    pub bracket: (f64, f64),
    pub scores: Vec<f64>,
    /// Index of the best grid sample.
    pub best: usize,
}

/// Grid scan plus golden-section refinement of `score` (larger is better).
/// Non-finite scores mark infeasible rates.
pub fn maximize_on_grid<F, E>(grid: &[f64], score: F, tol: f64) -> Result<GridOptimum, E>
where
    F: Fn(f64) -> Result<f64, E> + Sync,
    E: Send + From<OptimizerError>,
{
    let scores: Vec<f64> = grid.par_iter().map(|&r| score(r)).collect::<Result<_, E>>()?;
    let best = scores
        .iter()
        .enumerate()
        .filter(|(_, s)| s.is_finite())
        .fold(None::<(usize, f64)>, |acc, (i, &s)| match acc {
            Some((_, b)) if b >= s => acc,
            _ => Some((i, s)),
        })
        .ok_or_else(|| E::from(OptimizerError::NoFeasibleRate))?;
    let (i, best_score) = best;
    let lo = grid[i.saturating_sub(1)];
    let hi = grid[(i + 1).min(grid.len() - 1)];
    let (mut rate, mut value) = (grid[i], best_score);
    if hi > lo {
        let guarded = |r: f64| score(r).map(|s| if s.is_finite() { s } else { f64::NEG_INFINITY });
        let (r, v) = try_golden_section_max(guarded, lo, hi, tol)?;
        if v > value {
            rate = r;
            value = v;
        }
    }
    Ok(GridOptimum {
        rate,
        score: value,
        bracket: (lo, hi),
        scores,
        best: i,
    })
}

pub fn optimal_rate(
    cfg: &NetworkConfig,
    spec: &SweepSpec,
    objective: Objective,
) -> Result<Vec<OptimalRateReport>, OptimizerError> {
    let grid = spec.grid.rates();
    snr_entries(spec)
        .into_iter()
        .map(|snr| {
            let (c, db) = config_for_snr(cfg, snr);
            let score = |r: f64| -> Result<f64, OptimizerError> {
                let pt = evaluate_point(&c, db, spec.mode, r, &spec.source, spec.units)?;
                Ok(match objective {
                    Objective::MaxGoodput => pt.goodput(),
                    Objective::MinEb => -pt.eb(spec.eb_variant),
                })
            };
            let opt = maximize_on_grid(&grid, score, spec.refine_tol)?;
            let sign = match objective {
                Objective::MaxGoodput => 1.0,
                Objective::MinEb => -1.0,
            };
            Ok(OptimalRateReport {
                mode: spec.mode,
                snr_db: db,
                objective,
                rate: opt.rate,
                value: sign * opt.score,
                bracket: opt.bracket,
                grid_best_rate: grid[opt.best],
                grid: grid.iter().zip(opt.scores).map(|(&r, s)| (r, sign * s)).collect(),
            })
        })
        .collect()
}

/// Smallest rate at which `goodput_DF - goodput_AF` changes sign, located by
/// a grid scan over `grid` and bisection down to `tol`.
pub fn crossing_rate(
    cfg: &NetworkConfig,
    snr_db: f64,
    grid: &RateGrid,
    tol: f64,
) -> Result<Option<f64>, OptimizerError> {
    let c = cfg.with_equal_snr_db(snr_db);
    let diff = |r: f64| -> Result<f64, OptimizerError> {
        let af = analyze_point(&c, Mode::Af, r, EnergyUnits::Joules)?;
        let df = analyze_point(&c, Mode::Df, r, EnergyUnits::Joules)?;
        Ok(df.goodput - af.goodput)
    };
    let rates = grid.rates();
    let mut prev: Option<(f64, f64)> = None;
    for &r in &rates {
        let d = diff(r)?;
        if d == 0.0 {
            if prev.is_some() {
                return Ok(Some(r));
            }
            continue;
        }
        if let Some((r0, d0)) = prev {
            if d0.signum() != d.signum() {
                let (mut lo, mut hi) = (r0, r);
                while hi - lo > tol {
                    let mid = 0.5 * (lo + hi);
                    let dm = diff(mid)?;
                    if dm == 0.0 {
                        return Ok(Some(mid));
                    }
                    if dm.signum() == d0.signum() {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                return Ok(Some(0.5 * (lo + hi)));
            }
        }
        prev = Some((r, d));
    }
    Ok(None)
}
