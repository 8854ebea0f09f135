//! JSON-lines encoding of run records: one line per round, with timings
//! split off into a separate stream.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use lbb_core::sim::{RoundEntry, RunRecord};
use serde::{Deserialize, Serialize};

#[derive(Debug, Serialize, Deserialize)]
struct RoundLine {
    strategy: String,
    seed: u64,
    round: usize,
    labeled_count: usize,
    test_accuracy: f64,
    acquired_indices: Vec<usize>,
    /// Carried on the last line of each record.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    warnings: Vec<String>,
}

#[derive(Debug, Serialize)]
struct TimingLine<'a> {
    strategy: &'a str,
    seed: u64,
    round: usize,
    acquisition_wall_time_s: f64,
    train_wall_time_s: f64,
}

pub fn records_jsonl(records: &[RunRecord]) -> Result<String> {
    let mut out = String::new();
    for rec in records {
        let last = rec.rounds.len().saturating_sub(1);
        for (i, r) in rec.rounds.iter().enumerate() {
            let line = RoundLine {
                strategy: rec.strategy.clone(),
                seed: rec.seed,
                round: r.round,
                labeled_count: r.labeled_count,
                test_accuracy: r.test_accuracy,
                acquired_indices: r.acquired_indices.clone(),
                warnings: if i == last { rec.warnings.clone() } else { Vec::new() },
            };
            out.push_str(&serde_json::to_string(&line)?);
            out.push('\n');
        }
    }
    Ok(out)
}

pub fn timings_jsonl(records: &[RunRecord]) -> Result<String> {
    let mut out = String::new();
    for rec in records {
        for r in &rec.rounds {
            let line = TimingLine {
                strategy: &rec.strategy,
                seed: rec.seed,
                round: r.round,
                acquisition_wall_time_s: r.acquisition_wall_time_s,
                train_wall_time_s: r.train_wall_time_s,
            };
            out.push_str(&serde_json::to_string(&line)?);
            out.push('\n');
        }
    }
    Ok(out)
}

pub fn parse_records(text: &str) -> Result<Vec<RunRecord>> {
    let mut records: Vec<RunRecord> = Vec::new();
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let line: RoundLine = serde_json::from_str(line).with_context(|| format!("record line {}", n + 1))?;
        let pos = records.iter().position(|r| r.strategy == line.strategy && r.seed == line.seed);
        let rec = match pos {
            Some(p) => &mut records[p],
            None => {
                records.push(RunRecord {
                    strategy: line.strategy.clone(),
                    seed: line.seed,
                    rounds: Vec::new(),
                    warnings: Vec::new(),
                });
                records.last_mut().expect("just pushed")
            }
        };
        if line.round != rec.rounds.len() {
            bail!("line {}: round {} out of order for {} seed {}", n + 1, line.round, rec.strategy, rec.seed);
        }
        rec.warnings.extend(line.warnings);
        rec.rounds.push(RoundEntry {
            round: line.round,
            labeled_count: line.labeled_count,
            test_accuracy: line.test_accuracy,
            acquisition_wall_time_s: 0.0,
            train_wall_time_s: 0.0,
            acquired_indices: line.acquired_indices,
        });
    }
    Ok(records)
}

/// A records file, or a run directory holding `records.jsonl`.
pub fn records_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join("records.jsonl")
    } else {
        path.to_path_buf()
    }
}

pub fn load_records(path: &Path) -> Result<Vec<RunRecord>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_records(&text).with_context(|| format!("parsing {}", path.display()))
}
