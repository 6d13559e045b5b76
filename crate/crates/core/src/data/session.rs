use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Longest candidate list a session may carry.
pub const DEFAULT_MAX_LIST_LENGTH: usize = 130;

/// One candidate product shown for a query.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct Item {
    pub features: Vec<f64>,
    /// Purchase indicator; graded values are accepted as long as they are non-negative.
    pub label: f64,
    #[cfg_attr(
        feature = "serde",
        serde(rename = "q", default, skip_serializing_if = "Option::is_none")
    )]
    pub query_text: Option<String>,
    #[cfg_attr(
        feature = "serde",
        serde(rename = "t", default, skip_serializing_if = "Option::is_none")
    )]
    pub title_text: Option<String>,
}

impl Item {
    pub fn new(features: Vec<f64>, label: f64) -> Self {
        Self {
            features,
            label,
            query_text: None,
            title_text: None,
        }
    }
}

/// A single search query in one domain together with its candidate list.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct QuerySession {
    pub query_id: String,
    pub domain: usize,
    #[cfg_attr(feature = "serde", serde(rename = "ts"))]
    pub timestamp: i64,
    pub items: Vec<Item>,
}

impl QuerySession {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.items.first().map_or(0, |i| i.features.len())
    }

    pub fn labels(&self) -> Vec<f64> {
        self.items.iter().map(|i| i.label).collect()
    }

    pub fn has_positive(&self) -> bool {
        self.items.iter().any(|i| i.label > 0.0)
    }

    /// `[items, feature_dim]` feature matrix.
    pub fn feature_matrix(&self) -> Result<Tensor> {
        let rows: Vec<&[f64]> = self.items.iter().map(|i| i.features.as_slice()).collect();
        Tensor::from_rows(&rows)
    }

    /// Checks the structural invariants of a session. `n_domains`, when
    /// given, bounds the domain id.
    pub fn validate(&self, n_domains: Option<usize>, max_list_length: usize) -> Result<()> {
        if self.items.is_empty() {
            return Err(Error::Data(format!("session {} has no items", self.query_id)));
        }
        if self.items.len() > max_list_length {
            return Err(Error::Data(format!(
                "session {} has {} items, more than the limit of {max_list_length}",
                self.query_id,
                self.items.len()
            )));
        }
        if let Some(n) = n_domains {
            if self.domain >= n {
                return Err(Error::DomainOutOfRange {
                    domain: self.domain,
                    n_domains: n,
                });
            }
        }
        let dim = self.feature_dim();
        for (i, item) in self.items.iter().enumerate() {
            if item.features.len() != dim {
                return Err(Error::Data(format!(
                    "session {} item {i} has {} features, expected {dim}",
                    self.query_id,
                    item.features.len()
                )));
            }
            if !item.features.iter().all(|v| v.is_finite()) {
                return Err(Error::Data(format!(
                    "session {} item {i} has a non-finite feature",
                    self.query_id
                )));
            }
            if !(item.label.is_finite() && item.label >= 0.0) {
                return Err(Error::Data(format!(
                    "session {} item {i} has invalid label {}",
                    self.query_id, item.label
                )));
            }
        }
        Ok(())
    }
}
