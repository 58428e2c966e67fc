//! Serving state and vote persistence.
//!
//! Votes go to an append-only line-delimited log; per-(rater, pair) serving
//! state goes to a snapshot file that is replaced atomically after each
//! change. On open the snapshot is reconciled against the log, so a crash
//! between the two writes never loses a vote or lets a pair be voted twice.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use promptlab_core::preference::{read_votes, results_report, Choice, Metric, VoteRecord};
use promptlab_core::ResultsReport;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tracing::{info, warn};

use crate::pool::{BlindedPair, Reveal, SurveyPair};
use crate::SurveyError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ServeStatus {
    Served,
    Voted,
    Skipped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Assignment {
    swapped: bool,
    status: ServeStatus,
}

#[derive(Serialize, Deserialize)]
struct SnapshotEntry {
    rater_id: String,
    pair_id: String,
    swapped: bool,
    status: ServeStatus,
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
    entries: Vec<SnapshotEntry>,
}

/// A rater's four choices for one pair, in the orientation they were shown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Submission {
    pub pair_id: String,
    pub choices: BTreeMap<String, Choice>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rater_id: Option<String>,
}

impl Submission {
    fn validated_choices(&self) -> Result<Vec<(Metric, Choice)>, SurveyError> {
        for key in self.choices.keys() {
            key.parse::<Metric>()
                .map_err(|_| SurveyError::InvalidSubmission(format!("unknown metric {key:?}")))?;
        }
        Metric::ALL
            .into_iter()
            .map(|m| {
                self.choices
                    .get(m.name())
                    .map(|c| (m, *c))
                    .ok_or(SurveyError::MissingMetric(m))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoreConfig {
    pub votes_path: PathBuf,
    pub snapshot_path: PathBuf,
    pub seed: u64,
}

impl StoreConfig {
    /// Keeps the snapshot next to the vote log.
    pub fn new(votes_path: impl Into<PathBuf>, seed: u64) -> Self {
        let votes_path = votes_path.into();
        let mut name = votes_path.as_os_str().to_owned();
        name.push(".state.json");
        StoreConfig {
            snapshot_path: PathBuf::from(name),
            votes_path,
            seed,
        }
    }
}

struct Inner {
    state: BTreeMap<(String, String), Assignment>,
    votes: Vec<VoteRecord>,
    log: File,
    rng: ChaCha8Rng,
}

pub struct SurveyStore {
    pool: Vec<SurveyPair>,
    index: HashMap<String, usize>,
    snapshot_path: PathBuf,
    inner: Mutex<Inner>,
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// Reads the vote log, dropping a torn final line left by an interrupted
/// append.
fn load_votes(path: &Path) -> Result<Vec<VoteRecord>, SurveyError> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let complete = if text.is_empty() || text.ends_with('\n') {
        &text[..]
    } else {
        let cut = text.rfind('\n').map_or(0, |i| i + 1);
        let tail = &text[cut..];
        if serde_json::from_str::<VoteRecord>(tail).is_ok() {
            // a whole record missing only its newline; repair it in place
            OpenOptions::new()
                .append(true)
                .open(path)?
                .write_all(b"\n")?;
            &text[..]
        } else {
            warn!(path = %path.display(), "dropping torn final line of vote log");
            OpenOptions::new()
                .write(true)
                .open(path)?
                .set_len(cut as u64)?;
            &text[..cut]
        }
    };
    read_votes(complete).map_err(|e| SurveyError::Corrupt(format!("{}: {e}", path.display())))
}

fn load_snapshot(path: &Path) -> Result<Vec<SnapshotEntry>, SurveyError> {
    match fs::read_to_string(path) {
        Ok(t) => {
            let snap: Snapshot = serde_json::from_str(&t)
                .map_err(|e| SurveyError::Corrupt(format!("{}: {e}", path.display())))?;
            Ok(snap.entries)
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Vec::new()),
        Err(e) => Err(e.into()),
    }
}

impl SurveyStore {
    pub fn open(pool: Vec<SurveyPair>, cfg: &StoreConfig) -> Result<Self, SurveyError> {
        let index: HashMap<String, usize> = pool
            .iter()
            .enumerate()
            .map(|(i, p)| (p.pair_id.clone(), i))
            .collect();
        let votes = load_votes(&cfg.votes_path)?;
        let mut state = BTreeMap::new();
        for e in load_snapshot(&cfg.snapshot_path)? {
            if !index.contains_key(&e.pair_id) {
                warn!(pair_id = %e.pair_id, "snapshot refers to a pair missing from the pool");
                continue;
            }
            state.insert(
                (e.rater_id, e.pair_id),
                Assignment {
                    swapped: e.swapped,
                    status: e.status,
                },
            );
        }
        // the log wins over the snapshot
        for v in &votes {
            state
                .entry((v.rater_id.clone(), v.pair_id.clone()))
                .and_modify(|a| a.status = ServeStatus::Voted)
                .or_insert(Assignment {
                    swapped: false,
                    status: ServeStatus::Voted,
                });
        }
        let log = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&cfg.votes_path)?;
        info!(
            pairs = pool.len(),
            votes = votes.len(),
            "survey store opened"
        );
        let store = SurveyStore {
            pool,
            index,
            snapshot_path: cfg.snapshot_path.clone(),
            inner: Mutex::new(Inner {
                state,
                votes,
                log,
                rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            }),
        };
        store.write_snapshot(&store.lock())?;
        Ok(store)
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn write_snapshot(&self, inner: &Inner) -> Result<(), SurveyError> {
        let snap = Snapshot {
            entries: inner
                .state
                .iter()
                .map(|((rater, pair), a)| SnapshotEntry {
                    rater_id: rater.clone(),
                    pair_id: pair.clone(),
                    swapped: a.swapped,
                    status: a.status,
                })
                .collect(),
        };
        let mut tmp = self.snapshot_path.as_os_str().to_owned();
        tmp.push(".tmp");
        let tmp = PathBuf::from(tmp);
        // no fsync: rename keeps the file whole, and anything lost in a
        // crash is rebuilt from the vote log on the next open
        let mut w = std::io::BufWriter::new(File::create(&tmp)?);
        serde_json::to_writer(&mut w, &snap).map_err(std::io::Error::from)?;
        w.flush()?;
        fs::rename(&tmp, &self.snapshot_path)?;
        Ok(())
    }

    fn pair(&self, pair_id: &str) -> Result<&SurveyPair, SurveyError> {
        self.index
            .get(pair_id)
            .map(|&i| &self.pool[i])
            .ok_or_else(|| SurveyError::UnknownPair(pair_id.to_string()))
    }

    pub fn pool(&self) -> &[SurveyPair] {
        &self.pool
    }

    fn serve_locked(&self, inner: &mut Inner, rater: &str) -> Result<BlindedPair, SurveyError> {
        let open: Vec<usize> = self
            .pool
            .iter()
            .enumerate()
            .filter(|(_, p)| {
                !inner
                    .state
                    .contains_key(&(rater.to_string(), p.pair_id.clone()))
            })
            .map(|(i, _)| i)
            .collect();
        if open.is_empty() {
            return Err(SurveyError::NoMorePairs);
        }
        let pick = open[inner.rng.random_range(0..open.len())];
        let swapped = inner.rng.random_bool(0.5);
        let pair = &self.pool[pick];
        inner.state.insert(
            (rater.to_string(), pair.pair_id.clone()),
            Assignment {
                swapped,
                status: ServeStatus::Served,
            },
        );
        self.write_snapshot(inner)?;
        Ok(pair.blinded(swapped))
    }

    /// Serves a random pair this rater has never been shown.
    pub fn next_pair(&self, rater: &str) -> Result<BlindedPair, SurveyError> {
        let mut inner = self.lock();
        self.serve_locked(&mut inner, rater)
    }

    fn pending(inner: &Inner, rater: &str, pair_id: &str) -> Result<Assignment, SurveyError> {
        match inner.state.get(&(rater.to_string(), pair_id.to_string())) {
            None => Err(SurveyError::NotServed(pair_id.to_string())),
            Some(a) if a.status == ServeStatus::Voted => {
                Err(SurveyError::AlreadyVoted(pair_id.to_string()))
            }
            Some(a) if a.status == ServeStatus::Skipped => {
                Err(SurveyError::Skipped(pair_id.to_string()))
            }
            Some(a) => Ok(*a),
        }
    }

    /// Records one vote per metric with sides mapped back to the pool's
    /// orientation, then reveals the prompts as displayed.
    pub fn submit(&self, rater: &str, sub: &Submission) -> Result<Reveal, SurveyError> {
        let pair = self.pair(&sub.pair_id)?;
        let choices = sub.validated_choices()?;
        let mut inner = self.lock();
        let assignment = Self::pending(&inner, rater, &sub.pair_id)?;
        let timestamp = now_ms();
        let records: Vec<VoteRecord> = choices
            .into_iter()
            .map(|(metric, shown)| VoteRecord {
                pair_id: pair.pair_id.clone(),
                method_a: pair.method_a.clone(),
                method_b: pair.method_b.clone(),
                metric,
                choice: if assignment.swapped {
                    shown.flipped()
                } else {
                    shown
                },
                rater_id: rater.to_string(),
                timestamp,
            })
            .collect();
        let mut buf = String::new();
        for r in &records {
            buf.push_str(&serde_json::to_string(r).map_err(std::io::Error::from)?);
            buf.push('\n');
        }
        inner.log.write_all(buf.as_bytes())?;
        inner.log.sync_data()?;
        inner.votes.extend(records);
        inner.state.insert(
            (rater.to_string(), sub.pair_id.clone()),
            Assignment {
                status: ServeStatus::Voted,
                ..assignment
            },
        );
        self.write_snapshot(&inner)?;
        Ok(pair.reveal(assignment.swapped))
    }

    /// Skips a served, unvoted pair for this rater and serves another.
    pub fn refresh(&self, rater: &str, pair_id: &str) -> Result<BlindedPair, SurveyError> {
        self.pair(pair_id)?;
        let mut inner = self.lock();
        let assignment = Self::pending(&inner, rater, pair_id)?;
        inner.state.insert(
            (rater.to_string(), pair_id.to_string()),
            Assignment {
                status: ServeStatus::Skipped,
                ..assignment
            },
        );
        match self.serve_locked(&mut inner, rater) {
            Err(SurveyError::NoMorePairs) => {
                self.write_snapshot(&inner)?;
                Err(SurveyError::NoMorePairs)
            }
            other => other,
        }
    }

    pub fn status(&self, rater: &str, pair_id: &str) -> Option<ServeStatus> {
        self.lock()
            .state
            .get(&(rater.to_string(), pair_id.to_string()))
            .map(|a| a.status)
    }

    pub fn votes(&self) -> Vec<VoteRecord> {
        self.lock().votes.clone()
    }

    pub fn results(&self, metric: Option<Metric>, base: f64) -> Result<ResultsReport, SurveyError> {
        Ok(results_report(&self.lock().votes, metric, base)?)
    }
}
