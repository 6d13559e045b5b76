//! NDCG@k and per-domain offline evaluation.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use crate::data::QuerySession;
use crate::error::{Error, Result};
use crate::model::Model;

/// Items per results page.
pub const DEFAULT_K: usize = 16;

/// Item indices sorted by score descending; equal scores keep their
/// original order. Scores must be finite.
pub fn ranking_order(scores: &[f64]) -> Result<Vec<usize>> {
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::Data(format!("score {i} is not finite: {}", scores[i])));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("finite"));
    Ok(order)
}

fn discount(position: usize) -> f64 {
    1.0 / libm::log2(position as f64 + 2.0)
}

/// NDCG@k with gain equal to the raw label.
///
/// Returns `Ok(None)` when no label is positive; such sessions are excluded
/// from averages rather than counted as zero.
pub fn ndcg_at_k(scores: &[f64], labels: &[f64], k: usize) -> Result<Option<f64>> {
    if scores.len() != labels.len() || scores.is_empty() {
        return Err(Error::Shape {
            op: "ndcg_at_k",
            left: alloc::vec![scores.len()],
            right: alloc::vec![labels.len()],
        });
    }
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    if labels.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
        return Err(Error::Data("labels must be finite and non-negative".into()));
    }
    if !labels.iter().any(|&l| l > 0.0) {
        return Ok(None);
    }
    let order = ranking_order(scores)?;
    let dcg: f64 = order
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &item)| labels[item] * discount(i))
        .sum();
    let mut ideal = labels.to_vec();
    ideal.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
    let idcg: f64 = ideal.iter().take(k).enumerate().map(|(i, &l)| l * discount(i)).sum();
    Ok(Some(dcg / idcg))
}

/// Mean NDCG over the evaluable sessions of one group.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DomainScore {
    pub ndcg: f64,
    pub sessions: usize,
}

/// Per-domain and overall mean NDCG@k. Domains without a single evaluable
/// session are absent from `per_domain`.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Evaluation {
    pub k: usize,
    pub per_domain: BTreeMap<usize, DomainScore>,
    pub overall: Option<DomainScore>,
    /// Sessions skipped because no label was positive.
    pub excluded: usize,
}

impl Evaluation {
    pub fn domain(&self, d: usize) -> Option<f64> {
        self.per_domain.get(&d).map(|s| s.ndcg)
    }
}

/// Sums in ascending order so the mean does not depend on session order.
fn order_free_mean(mut values: Vec<f64>) -> Option<DomainScore> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(DomainScore {
        ndcg: values.iter().sum::<f64>() / n as f64,
        sessions: n,
    })
}

/// Evaluates an arbitrary scoring function.
pub fn evaluate_with<F>(sessions: &[QuerySession], k: usize, mut scorer: F) -> Result<Evaluation>
where
    F: FnMut(&QuerySession) -> Result<Vec<f64>>,
{
    if sessions.is_empty() {
        return Err(Error::Data("cannot evaluate an empty dataset".into()));
    }
    let mut by_domain: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let mut all = Vec::new();
    let mut excluded = 0;
    for s in sessions {
        let scores = scorer(s)?;
        match ndcg_at_k(&scores, &s.labels(), k)? {
            Some(v) => {
                by_domain.entry(s.domain).or_default().push(v);
                all.push(v);
            }
            None => excluded += 1,
        }
    }
    Ok(Evaluation {
        k,
        per_domain: by_domain
            .into_iter()
            .filter_map(|(d, v)| order_free_mean(v).map(|m| (d, m)))
            .collect(),
        overall: order_free_mean(all),
        excluded,
    })
}

pub fn evaluate(model: &Model, sessions: &[QuerySession], k: usize) -> Result<Evaluation> {
    evaluate_with(sessions, k, |s| model.score(s))
}

/// Five-number summary used for box plots.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Quartiles {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl Quartiles {
    /// Quantiles by linear interpolation between order statistics
    /// (position `p·(n−1)`). `None` for an empty or non-finite sample.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let at = |p: f64| {
            let pos = p * (v.len() - 1) as f64;
            let lo = libm::floor(pos) as usize;
            let hi = (lo + 1).min(v.len() - 1);
            let frac = pos - lo as f64;
            if frac == 0.0 {
                v[lo]
            } else {
                v[lo] + frac * (v[hi] - v[lo])
            }
        };
        Some(Self {
            min: v[0],
            q1: at(0.25),
            median: at(0.5),
            q3: at(0.75),
            max: v[v.len() - 1],
        })
    }
}

/// Relative change of `value` over `reference` in percent.
pub fn gain_pct(value: f64, reference: f64) -> f64 {
    if value == reference {
        0.0
    } else {
        100.0 * (value - reference) / reference
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn hand_values() {
        assert_eq!(ndcg_at_k(&[3.0, 2.0, 1.0], &[1.0, 0.0, 0.0], 16).unwrap(), Some(1.0));
        let v = ndcg_at_k(&[2.0, 1.0], &[0.0, 1.0], 16).unwrap().unwrap();
        assert_eq!(v, 1.0 / libm::log2(3.0));
        assert!((v - 0.6309).abs() < 1e-4);
        assert_eq!(ndcg_at_k(&[1.0, 2.0], &[0.0, 0.0], 5).unwrap(), None);
    }

    #[test]
    fn ties_follow_original_order() {
        // both items tie; the earlier one is ranked first
        assert_eq!(ndcg_at_k(&[0.5, 0.5], &[1.0, 0.0], 1).unwrap(), Some(1.0));
        assert_eq!(ndcg_at_k(&[0.5, 0.5], &[0.0, 1.0], 1).unwrap(), Some(0.0));
        assert_eq!(ranking_order(&[1.0, 3.0, 1.0, 3.0]).unwrap(), vec![1, 3, 0, 2]);
        assert_eq!(ranking_order(&[0.0, -0.0]).unwrap(), vec![0, 1]);
    }

    #[test]
    fn errors() {
        assert!(ndcg_at_k(&[1.0], &[1.0, 0.0], 3).is_err());
        assert!(ndcg_at_k(&[1.0], &[1.0], 0).is_err());
        assert!(ndcg_at_k(&[f64::NAN], &[1.0], 1).is_err());
        assert!(ndcg_at_k(&[1.0], &[-1.0], 1).is_err());
    }

    #[test]
    fn quartiles_of_small_samples() {
        let q = Quartiles::of(&[5.0, 1.0, 4.0, 2.0, 3.0]).unwrap();
        assert_eq!((q.min, q.q1, q.median, q.q3, q.max), (1.0, 2.0, 3.0, 4.0, 5.0));
        let q = Quartiles::of(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!((q.q1, q.median, q.q3), (1.75, 2.5, 3.25));
        let q = Quartiles::of(&[7.0]).unwrap();
        assert_eq!((q.min, q.median, q.max), (7.0, 7.0, 7.0));
        assert_eq!(Quartiles::of(&[]), None);
    }

    #[test]
    fn gain_of_self_is_zero() {
        assert_eq!(gain_pct(0.42, 0.42), 0.0);
        assert!((gain_pct(0.55, 0.5) - 10.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn monotone_transform_invariance(
            pairs in proptest::collection::vec((-3.0f64..3.0, 0u8..3), 1..40),
            k in 1usize..20,
        ) {
            let scores: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let labels: Vec<f64> = pairs.iter().map(|p| p.1 as f64).collect();
            let moved: Vec<f64> = scores.iter().map(|s| libm::exp(*s) * 3.0 + 1.0).collect();
            let a = ndcg_at_k(&scores, &labels, k).unwrap();
            let b = ndcg_at_k(&moved, &labels, k).unwrap();
            prop_assert_eq!(a, b);
            if let Some(v) = a {
                prop_assert!((0.0..=1.0 + 1e-15).contains(&v));
            }
        }
    }
}
