//! Protocol Markov chains for both relaying modes and their stationary
//! distributions.
//!
//! AF states, in index order: `Sb` (relay holds the superimposed uplink and is
//! about to broadcast), then `S0..S3` for the joint outcome of the broadcast
//! (`S0` both directions failed, `S1` only T1->T2 delivered, `S2` only
//! T2->T1 delivered, `S3` both delivered).
//!
//! DF states describe the relay buffer at the start of a slot:
//! `S0` empty, `S1` holds `x1` and polls T2, `S2` holds `x2` and polls T1,
//! `S3` holds both and broadcasts.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{AfOutagePair, DfOutageProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Af,
    Df,
}

impl Mode {
    pub fn labels(self) -> &'static [&'static str] {
        match self {
            Mode::Af => &["Sb", "S0", "S1", "S2", "S3"],
            Mode::Df => &["S0", "S1", "S2", "S3"],
        }
    }

    pub fn n_states(self) -> usize {
        self.labels().len()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Af => "af",
            Mode::Df => "df",
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "af" => Ok(Mode::Af),
            "df" => Ok(Mode::Df),
            other => Err(format!("unknown mode `{other}` (expected af or df)")),
        }
    }
}

pub mod af_state {
    pub const SB: usize = 0;
    pub const S0: usize = 1;
    pub const S1: usize = 2;
    pub const S2: usize = 3;
    pub const S3: usize = 4;
}

pub mod df_state {
    pub const S0: usize = 0;
    pub const S1: usize = 1;
    pub const S2: usize = 2;
    pub const S3: usize = 3;
}

/// Row tolerance for stochasticity checks.
pub const ROW_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum MarkovError {
    #[error("row {row} of the transition matrix sums to {sum}")]
    NotStochastic { row: usize, sum: f64 },
    #[error("degenerate chain: {0}")]
    Degenerate(String),
    #[error("state label sets differ ({0} vs {1})")]
    LabelMismatch(Mode, Mode),
}

/// Row-stochastic per-slot transition matrix; `rows[i][j] = P(i -> j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    pub mode: Mode,
    rows: Vec<Vec<f64>>,
}

impl TransitionMatrix {
    pub fn new(mode: Mode, rows: Vec<Vec<f64>>) -> Result<Self, MarkovError> {
        let n = mode.n_states();
        assert!(
            rows.len() == n && rows.iter().all(|r| r.len() == n),
            "matrix shape must match the {mode} state set"
        );
        let m = Self { mode, rows };
        m.check_stochastic()?;
        Ok(m)
    }

    /// Builds a matrix for an arbitrary state count; used for generic checks.
    pub fn from_rows_unlabelled(rows: Vec<Vec<f64>>) -> Result<Self, MarkovError> {
        let m = Self {
            mode: Mode::Af,
            rows,
        };
        m.check_stochastic()?;
        Ok(m)
    }

    fn check_stochastic(&self) -> Result<(), MarkovError> {
        for (row, r) in self.rows.iter().enumerate() {
            let sum: f64 = r.iter().sum();
            if r.iter().any(|&p| !(0.0..=1.0).contains(&p)) || (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(MarkovError::NotStochastic { row, sum });
            }
        }
        Ok(())
    }

    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.rows[from][to]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    fn label(&self, i: usize) -> String {
        if self.dim() == self.mode.n_states() {
            self.mode.labels()[i].to_string()
        } else {
            format!("state {i}")
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistributionSource {
    ChainSolved,
    PaperClosedForm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryDistribution {
    pub mode: Mode,
    pub probs: Vec<f64>,
    /// `max_j |(pi P)_j - pi_j|` against the chain it was checked on.
    pub residual: f64,
    pub source: DistributionSource,
}

impl StationaryDistribution {
    pub fn get(&self, state: usize) -> f64 {
        self.probs[state]
    }
}

pub fn build_af_chain(p: &AfOutagePair) -> TransitionMatrix {
    use af_state::*;
    let (p12, p21) = (p.p12, p.p21);
    let mut rows = vec![vec![0.0; 5]; 5];
    rows[SB][S0] = p12 * p21;
    rows[SB][S1] = p21 * (1.0 - p12);
    rows[SB][S2] = p12 * (1.0 - p21);
    rows[SB][S3] = (1.0 - p12) * (1.0 - p21);
    for row in rows.iter_mut().skip(1) {
        row[SB] = 1.0;
    }
    TransitionMatrix::new(Mode::Af, rows).expect("AF chain rows are stochastic by construction")
}

pub fn build_df_chain(p: &DfOutageProfile) -> TransitionMatrix {
    use df_state::*;
    let mut rows = vec![vec![0.0; 4]; 4];
    rows[S0][S0] = p.p1r;
    rows[S0][S1] = 1.0 - p.p1r;
    rows[S1][S1] = p.p2r;
    rows[S1][S3] = 1.0 - p.p2r;
    rows[S2][S2] = p.p1r;
    rows[S2][S3] = 1.0 - p.p1r;
    rows[S3][S0] = (1.0 - p.pr1) * (1.0 - p.pr2);
    // T1 decoded x2 but T2 missed x1: the relay keeps x1 and polls T2 again.
    rows[S3][S1] = (1.0 - p.pr1) * p.pr2;
    rows[S3][S2] = p.pr1 * (1.0 - p.pr2);
    rows[S3][S3] = p.pr1 * p.pr2;
    TransitionMatrix::new(Mode::Df, rows).expect("DF chain rows are stochastic by construction")
}

/// `max_j |(pi P)_j - pi_j|`.
pub fn balance_residual(probs: &[f64], chain: &TransitionMatrix) -> f64 {
    let n = chain.dim();
    (0..n)
        .map(|j| {
            let inflow: f64 = (0..n).map(|i| probs[i] * chain.get(i, j)).sum();
            (inflow - probs[j]).abs()
        })
        .fold(0.0, f64::max)
}

/// Censored-chain (GTH) elimination with `reference` eliminated last.
/// Subtraction-free, so nearly decomposable chains keep full relative
/// accuracy. Returns `None` when some censored state has no exit.
fn gth(chain: &TransitionMatrix, reference: usize) -> Option<Vec<f64>> {
    let n = chain.dim();
    let order: Vec<usize> = std::iter::once(reference).chain((0..n).filter(|&i| i != reference)).collect();
    let mut p: Vec<Vec<f64>> = order
        .iter()
        .map(|&i| order.iter().map(|&j| chain.get(i, j)).collect())
        .collect();
    for k in (1..n).rev() {
        let s: f64 = p[k][..k].iter().sum();
        if s <= 0.0 || s.is_nan() {
            return None;
        }
        let (head, tail) = p.split_at_mut(k);
        let row_k = &tail[0][..k];
        for row in head.iter_mut() {
            row[k] /= s;
            let pik = row[k];
            if pik == 0.0 {
                continue;
            }
            for (x, &y) in row[..k].iter_mut().zip(row_k) {
                *x += pik * y;
            }
        }
    }
    let mut x = vec![0.0; n];
    x[0] = 1.0;
    for k in 1..n {
        x[k] = (0..k).map(|i| x[i] * p[i][k]).sum();
    }
    let total: f64 = x.iter().sum();
    let mut probs = vec![0.0; n];
    for (pos, &state) in order.iter().enumerate() {
        probs[state] = x[pos] / total;
    }
    Some(probs)
}

/// Solves `pi P = pi`, `sum(pi) = 1` by GTH elimination, trying each state as
/// the reference until one yields a balanced solution (the reference must be
/// recurrent).
pub fn stationary(chain: &TransitionMatrix) -> Result<StationaryDistribution, MarkovError> {
    let n = chain.dim();
    if n > 1 {
        if let Some(i) = (0..n).find(|&i| chain.get(i, i) >= 1.0) {
            return Err(MarkovError::Degenerate(format!(
                "{} is absorbing (self-loop probability 1)",
                chain.label(i)
            )));
        }
    }
    for reference in 0..n {
        let Some(probs) = gth(chain, reference) else {
            continue;
        };
        if !probs.iter().all(|p| p.is_finite()) {
            continue;
        }
        let residual = balance_residual(&probs, chain);
        if residual <= 1e-10 {
            return Ok(StationaryDistribution {
                mode: chain.mode,
                probs,
                residual,
                source: DistributionSource::ChainSolved,
            });
        }
    }
    Err(MarkovError::Degenerate(
        "the chain has no unique stationary distribution".into(),
    ))
}

/// Denominator of the DF buffer-state closed form,
/// `3 - 2p1r - 2p2r - pr1 - pr2 + pr1 p2r + p1r pr2 + p1r p2r`, evaluated as
/// the equivalent sum of products of success probabilities so it keeps its
/// relative accuracy near total outage.
pub fn df_paper_denominator(p: &DfOutageProfile) -> f64 {
    let (a, b, d) = (1.0 - p.p1r, 1.0 - p.p2r, 1.0 - p.pr2);
    let c = 1.0 - p.pr1;
    a * b + a * d + b * c
}

/// Closed-form DF buffer-state probabilities.
///
/// Agrees with [`stationary`] of [`build_df_chain`] for symmetric profiles;
/// in asymmetric cases the per-label values differ (see [`compare_stationary`]).
/// The residual is measured against the protocol chain.
pub fn df_stationary_paper(p: &DfOutageProfile) -> Result<StationaryDistribution, MarkovError> {
    let d = df_paper_denominator(p);
    if !(d > 0.0 && d.is_finite()) {
        return Err(MarkovError::Degenerate(format!(
            "closed-form denominator {d:e} vanishes for profile {p:?}"
        )));
    }
    let probs = vec![
        (1.0 - p.p2r) * (1.0 - p.pr1) * (1.0 - p.pr2) / d,
        (1.0 - p.p1r) * (1.0 - p.pr2) / d,
        (1.0 - p.p2r) * (1.0 - p.pr1) * p.pr2 / d,
        (1.0 - p.p1r) * (1.0 - p.p2r) / d,
    ];
    let residual = balance_residual(&probs, &build_df_chain(p));
    Ok(StationaryDistribution {
        mode: Mode::Df,
        probs,
        residual,
        source: DistributionSource::PaperClosedForm,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationaryComparison {
    pub mode: Mode,
    pub labels: Vec<String>,
    /// `a - b` per state.
    pub per_state: Vec<f64>,
    pub linf: f64,
    /// Differences of the aggregates `pi(S0)`, `pi(S1) + pi(S2)`, `pi(S3)`
    /// (DF only; empty for AF).
    pub aggregate: Vec<f64>,
    pub aggregate_linf: f64,
}

pub fn compare_stationary(
    a: &StationaryDistribution,
    b: &StationaryDistribution,
) -> Result<StationaryComparison, MarkovError> {
    if a.mode != b.mode || a.probs.len() != b.probs.len() {
        return Err(MarkovError::LabelMismatch(a.mode, b.mode));
    }
    let per_state: Vec<f64> = a.probs.iter().zip(&b.probs).map(|(x, y)| x - y).collect();
    let linf = per_state.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    let aggregate = match a.mode {
        Mode::Df => vec![per_state[0], per_state[1] + per_state[2], per_state[3]],
        Mode::Af => Vec::new(),
    };
    let aggregate_linf = aggregate.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    Ok(StationaryComparison {
        mode: a.mode,
        labels: a.mode.labels().iter().map(|s| s.to_string()).collect(),
        per_state,
        linf,
        aggregate,
        aggregate_linf,
    })
}
