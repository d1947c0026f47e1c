use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::{Error, Result, API_VERSION};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteRecord {
    pub v: u32,
    pub session: String,
    pub question: String,
    pub sample: String,
    pub model: String,
    /// Milliseconds since the Unix epoch.
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelShare {
    pub model: String,
    pub count: u64,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub v: u32,
    pub dataset: String,
    pub total: u64,
    /// Set when no votes have been recorded; all percentages are then zero.
    pub empty: bool,
    pub models: Vec<ModelShare>,
}

impl StatsReport {
    pub fn share(&self, model: &str) -> Option<&ModelShare> {
        self.models.iter().find(|m| m.model == model)
    }
}

/// Counts votes per choice. Every name in `choices` gets a row, in order; votes
/// for names outside `choices` are ignored.
pub fn compute_stats(dataset: &str, choices: &[String], votes: &[VoteRecord]) -> StatsReport {
    let mut counts: BTreeMap<&str, u64> = choices.iter().map(|c| (c.as_str(), 0)).collect();
    for v in votes {
        if let Some(c) = counts.get_mut(v.model.as_str()) {
            *c += 1;
        }
    }
    let total: u64 = counts.values().sum();
    let models = choices
        .iter()
        .map(|c| {
            let count = counts[c.as_str()];
            let percent = if total == 0 {
                0.0
            } else {
                100.0 * count as f64 / total as f64
            };
            ModelShare {
                model: c.clone(),
                count,
                percent,
            }
        })
        .collect();
    StatsReport {
        v: API_VERSION,
        dataset: dataset.to_string(),
        total,
        empty: total == 0,
        models,
    }
}

/// Reads a JSON-lines vote log. Later duplicates of a question id are dropped.
pub fn replay_log(path: impl AsRef<Path>) -> Result<Vec<VoteRecord>> {
    let path = path.as_ref();
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Error::Io(path.to_path_buf(), e)),
    };
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::Io(path.to_path_buf(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: VoteRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Config(format!("{}:{}: {e}", path.display(), n + 1)))?;
        if seen.insert(rec.question.clone()) {
            out.push(rec);
        }
    }
    Ok(out)
}

/// Append-only vote log. Each record is flushed before the append returns.
#[derive(Debug)]
pub struct VoteLog {
    path: PathBuf,
    file: File,
}

impl VoteLog {
    pub fn open(path: impl AsRef<Path>) -> Result<VoteLog> {
        let path = path.as_ref().to_path_buf();
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::Io(path.clone(), e))?;
        Ok(VoteLog { path, file })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, rec: &VoteRecord) -> Result<()> {
        let mut line = serde_json::to_vec(rec)?;
        line.push(b'\n');
        self.file
            .write_all(&line)
            .and_then(|_| self.file.flush())
            .map_err(|e| Error::Io(self.path.clone(), e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vote(q: &str, model: &str) -> VoteRecord {
        VoteRecord {
            v: 1,
            session: "s".into(),
            question: q.into(),
            sample: "x".into(),
            model: model.into(),
            timestamp: 0,
        }
    }

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn two_to_one() {
        let s = compute_stats("A", &names(&["m1", "m2", "m3"]), &[vote("a", "m1"), vote("b", "m1"), vote("c", "m2")]);
        assert_eq!(s.total, 3);
        assert!((s.share("m1").unwrap().percent - 66.666_666).abs() < 1e-3);
        assert!((s.share("m2").unwrap().percent - 33.333_333).abs() < 1e-3);
        assert_eq!(s.share("m3").unwrap().percent, 0.0);
        let sum: f64 = s.models.iter().map(|m| m.percent).sum();
        assert!((sum - 100.0).abs() < 1e-9);
    }

    #[test]
    fn no_votes() {
        let s = compute_stats("A", &names(&["m1", "m2"]), &[]);
        assert!(s.empty);
        assert_eq!(s.total, 0);
        assert!(s.models.iter().all(|m| m.count == 0 && m.percent == 0.0));
    }

    #[test]
    fn single_winner() {
        let s = compute_stats("A", &names(&["m1", "m2"]), &[vote("a", "m2")]);
        assert_eq!(s.share("m2").unwrap().percent, 100.0);
    }

    #[test]
    fn log_round_trip_drops_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("votes.jsonl");
        let mut log = VoteLog::open(&path).unwrap();
        log.append(&vote("a", "m1")).unwrap();
        log.append(&vote("b", "m2")).unwrap();
        log.append(&vote("a", "m2")).unwrap();
        let back = replay_log(&path).unwrap();
        assert_eq!(back, vec![vote("a", "m1"), vote("b", "m2")]);
        assert!(replay_log(dir.path().join("none.jsonl")).unwrap().is_empty());
    }
}
