use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::votes::{pair_key, PairKey, PairTally};
use super::PreferenceError;

pub const DEFAULT_BASE: f64 = 1000.0;

const CLAMP_LOW: f64 = 0.001;
const CLAMP_HIGH: f64 = 0.999;
const CLAMP_POINTS: f64 = 800.0;

/// Win rate plus half the tie rate, from the first method's side.
pub fn adjusted_win_rate(t: &PairTally) -> Result<f64, PreferenceError> {
    let n = t.total();
    if n == 0 {
        return Err(PreferenceError::EmptyTally);
    }
    Ok((t.wins_a as f64 + t.ties as f64 / 2.0) / n as f64)
}

/// Rating gap implied by an adjusted win rate, clamped to +-800 points at the
/// extremes.
pub fn elo_difference(awr: f64) -> f64 {
    if awr <= CLAMP_LOW {
        -CLAMP_POINTS
    } else if awr >= CLAMP_HIGH {
        CLAMP_POINTS
    } else {
        400.0 * (awr / (1.0 - awr)).log10()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDiff {
    pub method: String,
    pub opponent: String,
    pub diff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EloReport {
    pub base: f64,
    pub ratings: BTreeMap<String, f64>,
    /// One entry per ordered pair with at least one vote.
    pub diffs: Vec<PairDiff>,
}

impl EloReport {
    /// Methods from best to worst rating, ties by name.
    pub fn ranking(&self) -> Vec<&str> {
        let mut v: Vec<(&str, f64)> = self.ratings.iter().map(|(k, r)| (k.as_str(), *r)).collect();
        v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(b.0)));
        v.into_iter().map(|(k, _)| k).collect()
    }
}

/// Averages each method's pairwise rating differences and centres the
/// averages on `base`. Keys may be stored in either orientation; counts for
/// `(a, b)` and `(b, a)` are merged.
pub fn compute_elo(
    tallies: &BTreeMap<PairKey, PairTally>,
    base: f64,
) -> Result<EloReport, PreferenceError> {
    let mut merged: BTreeMap<PairKey, PairTally> = BTreeMap::new();
    let mut methods = BTreeSet::new();
    for ((a, b), t) in tallies {
        if a == b {
            return Err(PreferenceError::SameMethod(a.clone()));
        }
        methods.insert(a.clone());
        methods.insert(b.clone());
        let (key, flipped) = pair_key(a, b);
        let t = if flipped { t.swapped() } else { *t };
        merged.entry(key).or_default().merge(&t);
    }

    let mut per_method: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    let mut diffs = Vec::new();
    for ((a, b), t) in &merged {
        if t.total() == 0 {
            continue;
        }
        let d = elo_difference(adjusted_win_rate(t)?);
        let back = elo_difference(adjusted_win_rate(&t.swapped())?);
        per_method.entry(a).or_default().push(d);
        per_method.entry(b).or_default().push(back);
        diffs.push(PairDiff {
            method: a.clone(),
            opponent: b.clone(),
            diff: d,
        });
        diffs.push(PairDiff {
            method: b.clone(),
            opponent: a.clone(),
            diff: back,
        });
    }
    if let Some(m) = methods
        .iter()
        .find(|m| !per_method.contains_key(m.as_str()))
    {
        return Err(PreferenceError::IsolatedMethod(m.clone()));
    }

    let averages: BTreeMap<&str, f64> = per_method
        .iter()
        .map(|(m, ds)| (*m, ds.iter().sum::<f64>() / ds.len() as f64))
        .collect();
    let centre = if averages.is_empty() {
        0.0
    } else {
        averages.values().sum::<f64>() / averages.len() as f64
    };
    let ratings = averages
        .into_iter()
        .map(|(m, avg)| (m.to_string(), base + (avg - centre)))
        .collect();
    Ok(EloReport {
        base,
        ratings,
        diffs,
    })
}
