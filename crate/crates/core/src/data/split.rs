use alloc::format;
use alloc::vec::Vec;

use super::QuerySession;
use crate::error::{Error, Result};

/// Train / validation / test partition.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Splits {
    pub train: Vec<QuerySession>,
    pub valid: Vec<QuerySession>,
    pub test: Vec<QuerySession>,
}

/// Partitions sessions by timestamp into `[.., train_end)`,
/// `[train_end, valid_end)` and `[valid_end, ..)`, keeping input order
/// within each part.
pub fn split_by_time(sessions: Vec<QuerySession>, train_end: i64, valid_end: i64) -> Result<Splits> {
    if train_end >= valid_end {
        return Err(Error::Config(format!(
            "split boundaries must satisfy train_end < valid_end, got {train_end} >= {valid_end}"
        )));
    }
    let mut out = Splits::default();
    for s in sessions {
        if s.timestamp < train_end {
            out.train.push(s);
        } else if s.timestamp < valid_end {
            out.valid.push(s);
        } else {
            out.test.push(s);
        }
    }
    Ok(out)
}

/// Sessions of a single domain, cloned in order.
pub fn filter_domain(sessions: &[QuerySession], domain: usize) -> Vec<QuerySession> {
    sessions.iter().filter(|s| s.domain == domain).cloned().collect()
}
