//! Line-delimited JSON session files: one `QuerySession` object per line.

use std::fs::{self, File};
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use ddsrank_core::data::{QuerySession, Splits, DEFAULT_MAX_LIST_LENGTH};

use crate::error::{Error, Result};
use crate::output::write_atomic;

pub const SPLIT_FILES: [&str; 3] = ["train.jsonl", "valid.jsonl", "test.jsonl"];

/// Parses sessions from `reader`; `origin` only labels error messages.
/// Blank lines are skipped but still counted for line numbers.
pub fn parse_sessions<R: BufRead>(reader: R, origin: &Path, n_domains: Option<usize>) -> Result<Vec<QuerySession>> {
    let mut sessions = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|source| Error::Dataset {
            path: origin.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |reason: String| Error::Parse {
            path: origin.to_path_buf(),
            line: line_no,
            reason,
        };
        let session: QuerySession = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        session
            .validate(n_domains, DEFAULT_MAX_LIST_LENGTH)
            .map_err(|e| parse_err(e.to_string()))?;
        sessions.push(session);
    }
    Ok(sessions)
}

pub fn read_dataset(path: &Path, n_domains: Option<usize>) -> Result<Vec<QuerySession>> {
    let file = File::open(path).map_err(|source| Error::Dataset {
        path: path.to_path_buf(),
        source,
    })?;
    parse_sessions(BufReader::new(file), path, n_domains)
}

/// Serialises sessions, one per line, in order.
pub fn encode_sessions(sessions: &[QuerySession]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for s in sessions {
        s.validate(None, DEFAULT_MAX_LIST_LENGTH)?;
        serde_json::to_writer(&mut out, s).expect("sessions always serialise");
        out.push(b'\n');
    }
    Ok(out)
}

pub fn write_dataset(path: &Path, sessions: &[QuerySession]) -> Result<()> {
    write_atomic(path, &encode_sessions(sessions)?)
}

pub fn split_paths(dir: &Path) -> [PathBuf; 3] {
    SPLIT_FILES.map(|f| dir.join(f))
}

pub fn read_splits(dir: &Path, n_domains: Option<usize>) -> Result<Splits> {
    let [train, valid, test] = split_paths(dir);
    Ok(Splits {
        train: read_dataset(&train, n_domains)?,
        valid: read_dataset(&valid, n_domains)?,
        test: read_dataset(&test, n_domains)?,
    })
}

pub fn write_splits(dir: &Path, splits: &Splits) -> Result<()> {
    fs::create_dir_all(dir).map_err(Error::io(dir))?;
    let [train, valid, test] = split_paths(dir);
    write_dataset(&train, &splits.train)?;
    write_dataset(&valid, &splits.valid)?;
    write_dataset(&test, &splits.test)
}
