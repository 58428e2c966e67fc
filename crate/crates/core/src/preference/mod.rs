//! Pairwise human-preference analytics: tallies, adjusted win rates, ELO
//! ratings and significance tests over a vote log.

mod elo;
mod significance;
mod votes;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use elo::{adjusted_win_rate, compute_elo, elo_difference, EloReport, PairDiff, DEFAULT_BASE};
pub use significance::{binomial_test, mcnemar_statistic, mcnemar_test};
pub use votes::{pair_key, read_votes, tabulate, Choice, Metric, PairKey, PairTally, VoteRecord};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PreferenceError {
    #[error("tally has no votes")]
    EmptyTally,
    #[error("no decisive votes to test")]
    NoTrials,
    #[error("method {0:?} has no comparisons")]
    IsolatedMethod(String),
    #[error("method {0:?} compared with itself")]
    SameMethod(String),
    #[error("{0}")]
    Input(String),
}

pub const POOLED_SCOPE: &str = "pooled";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TallyRow {
    pub method_a: String,
    pub method_b: String,
    pub wins_a: u64,
    pub ties: u64,
    pub wins_b: u64,
    pub adjusted_win_rate: f64,
    /// Ties excluded; absent when every vote was a tie.
    pub binomial_p: Option<f64>,
    pub mcnemar_p: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScopeResults {
    /// A metric name or `"pooled"`.
    pub scope: String,
    pub votes: u64,
    pub tallies: Vec<TallyRow>,
    pub elo: EloReport,
}

/// Aggregate results as served by the survey service and printed by the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsReport {
    pub base: f64,
    pub results: Vec<ScopeResults>,
}

impl ResultsReport {
    /// Canonical serialization shared by every producer of this report.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn scope(&self, name: &str) -> Option<&ScopeResults> {
        self.results.iter().find(|r| r.scope == name)
    }
}

fn scope_results(
    votes: &[VoteRecord],
    metric: Option<Metric>,
    base: f64,
) -> Result<ScopeResults, PreferenceError> {
    let tallies = tabulate(votes, metric);
    let elo = compute_elo(&tallies, base)?;
    let mut rows = Vec::with_capacity(tallies.len());
    let mut total = 0;
    for ((a, b), t) in &tallies {
        total += t.total();
        let decisive = t.wins_a + t.wins_b > 0;
        rows.push(TallyRow {
            method_a: a.clone(),
            method_b: b.clone(),
            wins_a: t.wins_a,
            ties: t.ties,
            wins_b: t.wins_b,
            adjusted_win_rate: adjusted_win_rate(t)?,
            binomial_p: decisive
                .then(|| binomial_test(t.wins_a, t.wins_b))
                .transpose()?,
            mcnemar_p: decisive
                .then(|| mcnemar_test(t.wins_a, t.wins_b))
                .transpose()?,
        });
    }
    Ok(ScopeResults {
        scope: metric.map_or(POOLED_SCOPE, Metric::name).to_string(),
        votes: total,
        tallies: rows,
        elo,
    })
}

/// Results for one metric, or for every metric plus the pooled view when
/// `metric` is `None`.
pub fn results_report(
    votes: &[VoteRecord],
    metric: Option<Metric>,
    base: f64,
) -> Result<ResultsReport, PreferenceError> {
    let scopes: Vec<Option<Metric>> = match metric {
        Some(m) => vec![Some(m)],
        None => Metric::ALL.into_iter().map(Some).chain([None]).collect(),
    };
    let results = scopes
        .into_iter()
        .map(|m| scope_results(votes, m, base))
        .collect::<Result<_, _>>()?;
    Ok(ResultsReport { base, results })
}

/// Head-to-head significance for one method pair, oriented as given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTest {
    pub method_a: String,
    pub method_b: String,
    pub scope: String,
    pub wins: u64,
    pub ties: u64,
    pub losses: u64,
    pub binomial_p: f64,
    pub mcnemar_p: f64,
}

pub fn pair_test(
    votes: &[VoteRecord],
    metric: Option<Metric>,
    method_a: &str,
    method_b: &str,
) -> Result<PairTest, PreferenceError> {
    if method_a == method_b {
        return Err(PreferenceError::SameMethod(method_a.to_string()));
    }
    let (key, flipped) = pair_key(method_a, method_b);
    let t = tabulate(votes, metric).remove(&key).unwrap_or_default();
    let t = if flipped { t.swapped() } else { t };
    Ok(PairTest {
        method_a: method_a.to_string(),
        method_b: method_b.to_string(),
        scope: metric.map_or(POOLED_SCOPE, Metric::name).to_string(),
        wins: t.wins_a,
        ties: t.ties,
        losses: t.wins_b,
        binomial_p: binomial_test(t.wins_a, t.wins_b)?,
        mcnemar_p: mcnemar_test(t.wins_a, t.wins_b)?,
    })
}
