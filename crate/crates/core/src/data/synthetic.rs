//! Seeded multi-domain ranking data with known ground-truth relevance.
//!
//! Each domain ranks by its own hidden direction
//! `shared_weight_scale * w_shared + domain_weight_scale * w_domain`, where
//! all hidden directions are unit vectors drawn once from the seed. An item's
//! relevance is the logistic of its features projected on that direction.
//! The purchased item of a session is the most relevant one, replaced by a
//! uniformly random item with probability `label_noise`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{Item, QuerySession};
use crate::error::{Error, Result};

/// Split boundaries in epoch seconds: a month of training traffic, one week
/// of validation, one held-out week of test.
pub const TRAIN_START: i64 = 1_682_899_200;
pub const TRAIN_END: i64 = 1_685_577_600;
pub const VALID_END: i64 = 1_686_182_400;
pub const TEST_END: i64 = 1_686_873_600;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SplitCounts {
    pub train: usize,
    pub valid: usize,
    pub test: usize,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SyntheticSpec {
    pub n_domains: usize,
    /// Session counts per split, one entry per domain.
    pub sessions_per_domain: Vec<SplitCounts>,
    /// Number of informative standard-normal features.
    pub feature_dim: usize,
    pub shared_weight_scale: f64,
    pub domain_weight_scale: f64,
    pub min_list_length: usize,
    pub max_list_length: usize,
    pub label_noise: f64,
    /// Appends a one-hot domain indicator after the informative features.
    pub domain_indicator: bool,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        let counts = SplitCounts {
            train: 1500,
            valid: 250,
            test: 250,
        };
        Self {
            n_domains: 2,
            sessions_per_domain: vec![counts; 2],
            feature_dim: 8,
            shared_weight_scale: 0.3,
            domain_weight_scale: 1.0,
            min_list_length: 20,
            max_list_length: 130,
            label_noise: 0.1,
            domain_indicator: true,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(format!("synthetic spec: {m}")));
        if self.n_domains == 0 {
            return fail("n_domains must be positive");
        }
        if self.sessions_per_domain.len() != self.n_domains {
            return fail("sessions_per_domain needs one entry per domain");
        }
        if self.feature_dim == 0 {
            return fail("feature_dim must be positive");
        }
        let scales = [self.shared_weight_scale, self.domain_weight_scale];
        if scales.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return fail("weight scales must be finite and >= 0");
        }
        if scales.iter().all(|&s| s == 0.0) {
            return fail("at least one weight scale must be positive");
        }
        if self.min_list_length == 0 || self.min_list_length > self.max_list_length {
            return fail("list lengths must satisfy 1 <= min <= max");
        }
        if !(0.0..1.0).contains(&self.label_noise) {
            return fail("label_noise must lie in [0, 1)");
        }
        Ok(())
    }

    /// Width of the generated feature vectors.
    pub fn total_feature_dim(&self) -> usize {
        self.feature_dim + if self.domain_indicator { self.n_domains } else { 0 }
    }
}

/// Hidden ranking directions behind a synthetic dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticWorld {
    pub shared: Vec<f64>,
    pub per_domain: Vec<Vec<f64>>,
    pub shared_weight_scale: f64,
    pub domain_weight_scale: f64,
}

impl SyntheticWorld {
    /// Effective weight vector of `domain` over the informative features.
    pub fn direction(&self, domain: usize) -> Vec<f64> {
        self.shared
            .iter()
            .zip(&self.per_domain[domain])
            .map(|(s, d)| self.shared_weight_scale * s + self.domain_weight_scale * d)
            .collect()
    }

    /// Relevance logit of a feature vector; trailing indicator features are ignored.
    pub fn logit(&self, domain: usize, features: &[f64]) -> f64 {
        self.direction(domain).iter().zip(features).map(|(w, x)| w * x).sum()
    }

    /// Ground-truth relevance in `(0, 1)`.
    pub fn relevance(&self, domain: usize, features: &[f64]) -> f64 {
        logistic(self.logit(domain, features))
    }
}

pub fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-x))
}

/// Output of [`generate_synthetic`].
#[derive(Clone, Debug)]
pub struct SyntheticData {
    pub sessions: Vec<QuerySession>,
    pub train_end: i64,
    pub valid_end: i64,
    pub world: SyntheticWorld,
}

fn unit_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let norm = libm::sqrt(v.iter().map(|x| x * x).sum());
    v.into_iter().map(|x| x / norm).collect()
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let shared = unit_vector(&mut rng, spec.feature_dim);
    let per_domain: Vec<Vec<f64>> = (0..spec.n_domains)
        .map(|_| unit_vector(&mut rng, spec.feature_dim))
        .collect();
    let world = SyntheticWorld {
        shared,
        per_domain,
        shared_weight_scale: spec.shared_weight_scale,
        domain_weight_scale: spec.domain_weight_scale,
    };

    let windows = [
        ("train", TRAIN_START, TRAIN_END),
        ("valid", TRAIN_END, VALID_END),
        ("test", VALID_END, TEST_END),
    ];
    let mut sessions = Vec::new();
    for (split_idx, (split, start, end)) in windows.into_iter().enumerate() {
        for domain in 0..spec.n_domains {
            let c = spec.sessions_per_domain[domain];
            let count = [c.train, c.valid, c.test][split_idx];
            for idx in 0..count {
                let timestamp = rng.random_range(start..end);
                sessions.push(sample_session(
                    &mut rng,
                    spec,
                    &world,
                    domain,
                    format!("d{domain}-{split}-{idx}"),
                    timestamp,
                ));
            }
        }
    }
    Ok(SyntheticData {
        sessions,
        train_end: TRAIN_END,
        valid_end: VALID_END,
        world,
    })
}

fn sample_session(
    rng: &mut ChaCha8Rng,
    spec: &SyntheticSpec,
    world: &SyntheticWorld,
    domain: usize,
    query_id: String,
    timestamp: i64,
) -> QuerySession {
    let len = rng.random_range(spec.min_list_length..=spec.max_list_length);
    let mut items: Vec<Item> = (0..len)
        .map(|_| {
            let features: Vec<f64> = (0..spec.feature_dim).map(|_| rng.sample(StandardNormal)).collect();
            Item::new(features, 0.0)
        })
        .collect();
    let best = items
        .iter()
        .enumerate()
        .map(|(i, it)| (i, world.logit(domain, &it.features)))
        .fold(
            (0, f64::NEG_INFINITY),
            |acc, (i, l)| if l > acc.1 { (i, l) } else { acc },
        );
    let noisy: f64 = rng.random();
    let purchased = if noisy < spec.label_noise {
        rng.random_range(0..len)
    } else {
        best.0
    };
    items[purchased].label = 1.0;
    if spec.domain_indicator {
        for it in &mut items {
            it.features
                .extend((0..spec.n_domains).map(|d| if d == domain { 1.0 } else { 0.0 }));
        }
    }
    QuerySession {
        query_id,
        domain,
        timestamp,
        items,
    }
}
