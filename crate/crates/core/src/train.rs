//! Mini-batch training with Adam and validation-based checkpoint selection.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::QuerySession;
use crate::error::{Error, Result};
use crate::loss::loss_and_gradients;
use crate::metrics::{evaluate, DEFAULT_K};
use crate::model::Model;

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TrainConfig {
    pub epochs: usize,
    /// Sessions per step.
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Seeds the batch order.
    pub seed: u64,
    /// Validation cadence in steps; validation also runs before the first
    /// step and after the last.
    pub eval_every: usize,
    pub k: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 32,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            eval_every: 50,
            k: DEFAULT_K,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: alloc::string::String| Err(Error::Config(m));
        if self.epochs == 0 || self.batch_size == 0 || self.eval_every == 0 || self.k == 0 {
            return bad(format!(
                "epochs, batch_size, eval_every and k must be positive (got {}, {}, {}, {})",
                self.epochs, self.batch_size, self.eval_every, self.k
            ));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return bad(format!(
                "learning_rate must be finite and >= 0, got {}",
                self.learning_rate
            ));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return bad(format!("{name} must lie in [0, 1), got {b}"));
            }
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        Ok(())
    }
}

/// One row of the training history.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HistoryEntry {
    pub step: usize,
    pub epoch: usize,
    /// Losses of the batch taken at this step; absent for the initial
    /// evaluation.
    pub ranking_loss: Option<f64>,
    pub domain_loss: Option<f64>,
    pub total_loss: Option<f64>,
    /// Overall validation NDCG@k when evaluated at this step.
    pub valid_ndcg: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub best: Model,
    pub best_step: usize,
    pub best_valid_ndcg: f64,
    pub steps: usize,
    pub history: Vec<HistoryEntry>,
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Adam {
    fn new(model: &Model) -> Self {
        let zeros: Vec<Vec<f64>> = model.params().iter().map(|p| vec![0.0; p.value.len()]).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    fn step(&mut self, model: &mut Model, grads: &[Vec<f64>], cfg: &TrainConfig) {
        self.t += 1;
        let c1 = 1.0 - libm::pow(cfg.beta1, self.t as f64);
        let c2 = 1.0 - libm::pow(cfg.beta2, self.t as f64);
        for (i, p) in model.params_mut().iter_mut().enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (j, w) in p.value.data_mut().iter_mut().enumerate() {
                let g = grads[i][j];
                m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g;
                v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g * g;
                let update = cfg.learning_rate * (m[j] / c1) / (libm::sqrt(v[j] / c2) + cfg.epsilon);
                *w -= update;
            }
        }
    }
}

fn validation_ndcg(model: &Model, valid: &[QuerySession], k: usize) -> Result<f64> {
    evaluate(model, valid, k)?
        .overall
        .map(|s| s.ndcg)
        .ok_or_else(|| Error::Data("validation split has no session with a positive label".into()))
}

/// Trains `model` on `train` and returns the checkpoint with the highest
/// overall validation NDCG@k. Ties keep the earlier checkpoint, so with a
/// zero learning rate the initial model is returned.
pub fn train(
    mut model: Model,
    train: &[QuerySession],
    valid: &[QuerySession],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Data("training split is empty".into()));
    }
    if valid.is_empty() {
        return Err(Error::Data("validation split is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(&model);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut batch: Vec<QuerySession> = Vec::with_capacity(cfg.batch_size);

    let initial = validation_ndcg(&model, valid, cfg.k)?;
    let mut history = vec![HistoryEntry {
        step: 0,
        epoch: 0,
        ranking_loss: None,
        domain_loss: None,
        total_loss: None,
        valid_ndcg: Some(initial),
    }];
    let mut best = (model.clone(), 0, initial);
    let mut step = 0;
    let batches_per_epoch = train.len().div_ceil(cfg.batch_size);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            step += 1;
            batch.clear();
            batch.extend(chunk.iter().map(|&i| train[i].clone()));
            let mut entry = HistoryEntry {
                step,
                epoch,
                ranking_loss: None,
                domain_loss: None,
                total_loss: None,
                valid_ndcg: None,
            };
            if let Some((loss, grads)) = loss_and_gradients(&model, &batch)? {
                if !loss.total.is_finite() {
                    return Err(Error::Divergence {
                        step,
                        detail: format!(
                            "loss is {} (ranking {}, domain {:?})",
                            loss.total, loss.ranking_loss, loss.domain_loss
                        ),
                    });
                }
                if let Some((i, _)) = grads.iter().enumerate().find(|(_, g)| g.iter().any(|v| !v.is_finite())) {
                    return Err(Error::Divergence {
                        step,
                        detail: format!("non-finite gradient for parameter {}", model.params()[i].name),
                    });
                }
                adam.step(&mut model, &grads, cfg);
                entry.ranking_loss = Some(loss.ranking_loss);
                entry.domain_loss = loss.domain_loss;
                entry.total_loss = Some(loss.total);
            }
            let last = epoch == cfg.epochs && b + 1 == batches_per_epoch;
            if step % cfg.eval_every == 0 || last {
                if model.params().iter().any(|p| !p.value.is_finite()) {
                    return Err(Error::Divergence {
                        step,
                        detail: "parameters became non-finite".into(),
                    });
                }
                let v = validation_ndcg(&model, valid, cfg.k)?;
                entry.valid_ndcg = Some(v);
                if v > best.2 {
                    best = (model.clone(), step, v);
                }
            }
            history.push(entry);
        }
    }
    Ok(TrainOutcome {
        best: best.0,
        best_step: best.1,
        best_valid_ndcg: best.2,
        steps: step,
        history,
    })
}
