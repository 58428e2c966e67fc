#![allow(dead_code)]

use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};

use promptlab_core::preference::{Choice, Metric, VoteRecord};
use promptlab_survey::SurveyPair;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_promptlab"));
    for var in [
        "PROMPTLAB_CONFIG",
        "PROMPTLAB_SEED",
        "PROMPTLAB_LOG_LEVEL",
        "PROMPTLAB_BACKEND",
        "PROMPTLAB_ENDPOINT",
        "PROMPTLAB_LENGTH",
        "PROMPTLAB_BASE",
        "PROMPTLAB_HOST",
        "PROMPTLAB_PORT",
    ] {
        c.env_remove(var);
    }
    c
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn promptlab")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// Methods in generating order, strongest first.
pub const METHODS: [&str; 4] = ["expanded", "rewritten", "refined", "plain"];

/// Votes where method `i` beats method `j` with probability given by a
/// logistic on the strength gap; ties at a fixed rate.
pub fn synthetic_votes(per_pair: usize, seed: u64) -> Vec<VoteRecord> {
    let strength = [300.0, 150.0, 50.0, 0.0];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut t = 1_700_000_000_000u64;
    for i in 0..METHODS.len() {
        for j in (i + 1)..METHODS.len() {
            let p_win = 1.0 / (1.0 + 10f64.powf(-(strength[i] - strength[j]) / 400.0));
            for k in 0..per_pair {
                let pair_id = format!("{}-{}-{k}", METHODS[i], METHODS[j]);
                let rater_id = format!("r{}", k % 7);
                for metric in Metric::ALL {
                    let choice = if rng.random_bool(0.1) {
                        Choice::Tie
                    } else if rng.random_bool(p_win) {
                        Choice::A
                    } else {
                        Choice::B
                    };
                    // half the records list the weaker method first
                    let (method_a, method_b, choice) = if k % 2 == 0 {
                        (METHODS[i], METHODS[j], choice)
                    } else {
                        (METHODS[j], METHODS[i], choice.flipped())
                    };
                    t += 1;
                    out.push(VoteRecord {
                        pair_id: pair_id.clone(),
                        method_a: method_a.into(),
                        method_b: method_b.into(),
                        metric,
                        choice,
                        rater_id: rater_id.clone(),
                        timestamp: t,
                    });
                }
            }
        }
    }
    out
}

pub fn write_votes(path: &Path, votes: &[VoteRecord]) {
    let text: String = votes
        .iter()
        .map(|v| serde_json::to_string(v).unwrap() + "\n")
        .collect();
    std::fs::write(path, text).unwrap();
}

/// A pool whose pair ids cover every vote in `votes`.
pub fn pool_for(votes: &[VoteRecord]) -> Vec<SurveyPair> {
    let mut ids: Vec<&VoteRecord> = Vec::new();
    for v in votes {
        if !ids.iter().any(|x| x.pair_id == v.pair_id) {
            ids.push(v);
        }
    }
    ids.into_iter()
        .map(|v| SurveyPair {
            pair_id: v.pair_id.clone(),
            original_prompt: "a lighthouse at dusk".into(),
            method_a: v.method_a.clone(),
            method_b: v.method_b.clone(),
            image_a: format!("{}-a.png", v.pair_id),
            image_b: format!("{}-b.png", v.pair_id),
            prompt_a: "lighthouse, dusk, sea".into(),
            prompt_b: "A lighthouse at dusk.".into(),
        })
        .collect()
}

pub fn write_pool(path: &Path, pool: &[SurveyPair]) {
    let text: String = pool
        .iter()
        .map(|p| serde_json::to_string(p).unwrap() + "\n")
        .collect();
    std::fs::write(path, text).unwrap();
}

/// A running `promptlab serve`; killed on drop.
pub struct Server {
    child: Child,
    pub base_url: String,
}

impl Server {
    pub fn start(pairs: &Path, votes: &Path, extra: &[&str]) -> Server {
        let mut child = bin()
            .args(["serve", "--port", "0", "--pairs"])
            .arg(pairs)
            .arg("--votes")
            .arg(votes)
            .args(extra)
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .expect("spawn server");
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap())
            .read_line(&mut line)
            .unwrap();
        let base_url = line
            .trim()
            .strip_prefix("listening on ")
            .unwrap_or_else(|| panic!("unexpected banner {line:?}"))
            .to_string();
        Server { child, base_url }
    }

    pub fn get(&self, path: &str) -> (u16, String) {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .build()
            .into();
        let mut resp = agent
            .get(format!("{}{path}", self.base_url))
            .call()
            .unwrap();
        let status = resp.status().as_u16();
        (status, resp.body_mut().read_to_string().unwrap())
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

pub fn tmp_path(dir: &tempfile::TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}
