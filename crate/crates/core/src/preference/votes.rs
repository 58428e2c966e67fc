use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::PreferenceError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Adherence,
    Quality,
    Aesthetic,
    Overall,
}

impl Metric {
    pub const ALL: [Metric; 4] = [
        Metric::Adherence,
        Metric::Quality,
        Metric::Aesthetic,
        Metric::Overall,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Adherence => "adherence",
            Metric::Quality => "quality",
            Metric::Aesthetic => "aesthetic",
            Metric::Overall => "overall",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = PreferenceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| PreferenceError::Input(format!("unknown metric {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Choice {
    A,
    #[serde(rename = "tie")]
    Tie,
    B,
}

impl Choice {
    /// The same judgment with the two sides relabelled.
    pub fn flipped(self) -> Choice {
        match self {
            Choice::A => Choice::B,
            Choice::Tie => Choice::Tie,
            Choice::B => Choice::A,
        }
    }
}

/// One rater's judgment of one pair on one metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteRecord {
    pub pair_id: String,
    pub method_a: String,
    pub method_b: String,
    pub metric: Metric,
    pub choice: Choice,
    pub rater_id: String,
    /// Milliseconds since the Unix epoch.
    pub timestamp: u64,
}

impl VoteRecord {
    pub fn validate(&self) -> Result<(), PreferenceError> {
        if self.method_a.is_empty() || self.method_b.is_empty() {
            return Err(PreferenceError::Input("empty method name".into()));
        }
        if self.method_a == self.method_b {
            return Err(PreferenceError::SameMethod(self.method_a.clone()));
        }
        Ok(())
    }
}

/// Parses a line-delimited vote log. Blank lines are skipped.
pub fn read_votes(text: &str) -> Result<Vec<VoteRecord>, PreferenceError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let vote: VoteRecord = serde_json::from_str(line)
            .map_err(|e| PreferenceError::Input(format!("line {}: {e}", i + 1)))?;
        vote.validate()
            .map_err(|e| PreferenceError::Input(format!("line {}: {e}", i + 1)))?;
        out.push(vote);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairTally {
    pub wins_a: u64,
    pub ties: u64,
    pub wins_b: u64,
}

impl PairTally {
    pub fn new(wins_a: u64, ties: u64, wins_b: u64) -> Self {
        PairTally {
            wins_a,
            ties,
            wins_b,
        }
    }

    pub fn total(&self) -> u64 {
        self.wins_a + self.ties + self.wins_b
    }

    pub fn swapped(&self) -> PairTally {
        PairTally::new(self.wins_b, self.ties, self.wins_a)
    }

    pub fn record(&mut self, choice: Choice) {
        match choice {
            Choice::A => self.wins_a += 1,
            Choice::Tie => self.ties += 1,
            Choice::B => self.wins_b += 1,
        }
    }

    pub fn merge(&mut self, other: &PairTally) {
        self.wins_a += other.wins_a;
        self.ties += other.ties;
        self.wins_b += other.wins_b;
    }
}

/// Unordered method pair, stored with the lexicographically smaller name first.
pub type PairKey = (String, String);

pub fn pair_key(a: &str, b: &str) -> (PairKey, bool) {
    if a <= b {
        ((a.to_string(), b.to_string()), false)
    } else {
        ((b.to_string(), a.to_string()), true)
    }
}

/// Counts per unordered pair for one metric (or all metrics when `None`),
/// oriented so `wins_a` belongs to the lexicographically first method.
pub fn tabulate<'a, I>(votes: I, metric: Option<Metric>) -> BTreeMap<PairKey, PairTally>
where
    I: IntoIterator<Item = &'a VoteRecord>,
{
    let mut out: BTreeMap<PairKey, PairTally> = BTreeMap::new();
    for v in votes {
        if metric.is_some_and(|m| m != v.metric) || v.method_a == v.method_b {
            continue;
        }
        let (key, flipped) = pair_key(&v.method_a, &v.method_b);
        let choice = if flipped {
            v.choice.flipped()
        } else {
            v.choice
        };
        out.entry(key).or_default().record(choice);
    }
    out
}
