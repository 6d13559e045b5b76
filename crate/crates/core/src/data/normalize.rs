use alloc::vec;
use alloc::vec::Vec;

use super::QuerySession;
use crate::error::{Error, Result};

/// Features whose training standard deviation falls below this are left
/// untouched.
pub const MIN_STD: f64 = 1e-12;

/// Per-feature standardisation fitted on a training split.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// `true` for degenerate features that are passed through unchanged.
    pub passthrough: Vec<bool>,
}

impl FeatureStats {
    pub fn fit(train: &[QuerySession]) -> Result<Self> {
        let dim = train
            .first()
            .map(QuerySession::feature_dim)
            .ok_or_else(|| Error::Data("cannot fit feature statistics on an empty split".into()))?;
        let mut sum = vec![0.0; dim];
        let mut count = 0usize;
        for item in train.iter().flat_map(|s| &s.items) {
            for (acc, v) in sum.iter_mut().zip(&item.features) {
                *acc += v;
            }
            count += 1;
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
        let mut sq = vec![0.0; dim];
        for item in train.iter().flat_map(|s| &s.items) {
            for ((acc, v), m) in sq.iter_mut().zip(&item.features).zip(&mean) {
                *acc += (v - m) * (v - m);
            }
        }
        let std: Vec<f64> = sq.iter().map(|s| libm::sqrt(s / count as f64)).collect();
        let passthrough = std.iter().map(|&s| s < MIN_STD).collect();
        Ok(Self { mean, std, passthrough })
    }

    pub fn apply(&self, sessions: &mut [QuerySession]) {
        for item in sessions.iter_mut().flat_map(|s| s.items.iter_mut()) {
            for (j, v) in item.features.iter_mut().enumerate() {
                if !self.passthrough[j] {
                    *v = (*v - self.mean[j]) / self.std[j];
                }
            }
        }
    }
}

/// Fits statistics on `train`, then standardises `train` and every split in
/// `others` with them.
pub fn normalize_features(train: &mut [QuerySession], others: &mut [&mut [QuerySession]]) -> Result<FeatureStats> {
    let stats = FeatureStats::fit(train)?;
    stats.apply(train);
    for split in others.iter_mut() {
        stats.apply(split);
    }
    Ok(stats)
}
