//! Training objectives.
//!
//! The ranking loss is softmax cross-entropy between the score distribution
//! of a list and its normalised label distribution. DDA and DDS add a
//! per-item domain classification loss weighted by
//! `ModelConfig::domain_loss_weight`; for DDA the sign flip happens inside
//! the graph, so loss values of DDA and DDS twins are identical.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::autodiff::{Tape, Tensor, Var};
use crate::data::QuerySession;
use crate::error::{Error, Result};
use crate::model::Model;

/// Loss values of one batch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossBreakdown {
    /// Mean over sessions with at least one positive label; 0 when none.
    pub ranking_loss: f64,
    /// Mean over all sessions of the batch; only for models with a classifier.
    pub domain_loss: Option<f64>,
    pub total: f64,
    /// Sessions that contributed to the ranking loss.
    pub sessions_used: usize,
}

fn check_labels(n: usize, labels: &[f64]) -> Result<()> {
    if labels.len() != n || n == 0 {
        return Err(Error::Shape {
            op: "listwise_loss",
            left: vec![n],
            right: vec![labels.len()],
        });
    }
    if labels.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
        return Err(Error::Data(format!(
            "labels must be finite and non-negative: {labels:?}"
        )));
    }
    Ok(())
}

/// Records `-Σ q·log softmax(scores)` with `q = labels / Σ labels`.
///
/// `scores` may be `[L]` or `[L, 1]`. Returns `None` when no label is
/// positive: the target distribution is undefined and the session is skipped.
pub fn listwise_loss_on_tape(tape: &mut Tape, scores: Var, labels: &[f64]) -> Result<Option<Var>> {
    let shape = tape.value(scores).shape().to_vec();
    check_labels(tape.value(scores).len(), labels)?;
    let total: f64 = labels.iter().sum();
    if total <= 0.0 {
        return Ok(None);
    }
    let target = Tensor::new(shape, labels.iter().map(|l| l / total).collect())?;
    let logp = tape.log_softmax(scores, 0)?;
    let q = tape.constant(target);
    let weighted = tape.mul(q, logp)?;
    let s = tape.sum(weighted);
    Ok(Some(tape.scale(s, -1.0)))
}

/// Value of the listwise loss; `None` for sessions without positives.
pub fn listwise_loss(scores: &[f64], labels: &[f64]) -> Result<Option<f64>> {
    let mut tape = Tape::new();
    let s = tape.constant(
        Tensor::new(vec![scores.len()], scores.to_vec()).map_err(|_| Error::Shape {
            op: "listwise_loss",
            left: vec![scores.len()],
            right: vec![labels.len()],
        })?,
    );
    Ok(listwise_loss_on_tape(&mut tape, s, labels)?.map(|v| tape.value(v).data()[0]))
}

/// Mean over items of the softmax cross-entropy of `logits: [L, n_domains]`
/// against the session's domain.
pub fn domain_loss_on_tape(tape: &mut Tape, logits: Var, domain: usize) -> Result<Var> {
    let (items, n_domains) = tape.value(logits).dims2().ok_or_else(|| Error::Shape {
        op: "domain_loss",
        left: tape.value(logits).shape().to_vec(),
        right: vec![],
    })?;
    if domain >= n_domains {
        return Err(Error::DomainOutOfRange { domain, n_domains });
    }
    let mut onehot = vec![0.0; items * n_domains];
    for r in 0..items {
        onehot[r * n_domains + domain] = 1.0;
    }
    let logp = tape.log_softmax(logits, 1)?;
    let target = tape.constant(Tensor::new(vec![items, n_domains], onehot)?);
    let picked = tape.mul(target, logp)?;
    let s = tape.sum(picked);
    Ok(tape.scale(s, -1.0 / items as f64))
}

pub fn domain_loss(logits: &Tensor, domain: usize) -> Result<f64> {
    let mut tape = Tape::new();
    let l = tape.constant(logits.clone());
    let v = domain_loss_on_tape(&mut tape, l, domain)?;
    Ok(tape.value(v).data()[0])
}

/// Graph handles of a batch objective.
#[derive(Clone, Copy, Debug)]
pub struct ObjectiveVars {
    pub total: Var,
    pub ranking: Option<Var>,
    pub domain: Option<Var>,
}

/// Records the combined objective of `sessions` on `tape` using parameter
/// handles `p` from [`Model::bind`].
///
/// Ranking losses are averaged over sessions with a positive label, domain
/// losses over all sessions, and
/// `total = ranking + domain_loss_weight · domain`. Returns `None` when the
/// batch contributes nothing.
pub fn objective_on_tape(
    model: &Model,
    tape: &mut Tape,
    p: &[Var],
    sessions: &[QuerySession],
) -> Result<Option<(ObjectiveVars, LossBreakdown)>> {
    let mut ranking_terms: Vec<Var> = Vec::new();
    let mut domain_terms: Vec<Var> = Vec::new();
    for s in sessions {
        if s.is_empty() {
            return Err(Error::Data(format!("session {} has no items", s.query_id)));
        }
        let x = tape.constant(s.feature_matrix()?);
        let out = model.forward_on_tape(tape, p, x, None, s.domain)?;
        if let Some(l) = listwise_loss_on_tape(tape, out.final_scores, &s.labels())? {
            ranking_terms.push(l);
        }
        if let Some(logits) = out.domain_logits {
            domain_terms.push(domain_loss_on_tape(tape, logits, s.domain)?);
        }
    }
    let mean = |tape: &mut Tape, terms: &[Var]| -> Result<Option<Var>> {
        let Some((&first, rest)) = terms.split_first() else {
            return Ok(None);
        };
        let mut acc = first;
        for &t in rest {
            acc = tape.add(acc, t)?;
        }
        Ok(Some(tape.scale(acc, 1.0 / terms.len() as f64)))
    };
    let ranking = mean(tape, &ranking_terms)?;
    let domain = mean(tape, &domain_terms)?;
    let weight = model.config().domain_loss_weight;
    let total = match (ranking, domain) {
        (None, None) => return Ok(None),
        (Some(r), None) => r,
        (None, Some(d)) => tape.scale(d, weight),
        (Some(r), Some(d)) => {
            let wd = tape.scale(d, weight);
            tape.add(r, wd)?
        }
    };
    let scalar = |tape: &Tape, v: Option<Var>| v.map(|v| tape.value(v).data()[0]);
    let breakdown = LossBreakdown {
        ranking_loss: scalar(tape, ranking).unwrap_or(0.0),
        domain_loss: scalar(tape, domain),
        total: tape.value(total).data()[0],
        sessions_used: ranking_terms.len(),
    };
    Ok(Some((ObjectiveVars { total, ranking, domain }, breakdown)))
}

/// Loss values of a single session under `model`.
pub fn combined_loss(model: &Model, session: &QuerySession) -> Result<LossBreakdown> {
    let mut tape = Tape::new();
    let p = model.bind(&mut tape, false);
    Ok(objective_on_tape(model, &mut tape, &p, core::slice::from_ref(session))?
        .map(|(_, b)| b)
        .unwrap_or(LossBreakdown {
            ranking_loss: 0.0,
            domain_loss: None,
            total: 0.0,
            sessions_used: 0,
        }))
}

/// Combined loss of a batch and its gradient for every parameter, in model
/// order. Parameters that the loss does not reach get zeros.
pub fn loss_and_gradients(model: &Model, sessions: &[QuerySession]) -> Result<Option<(LossBreakdown, Vec<Vec<f64>>)>> {
    let mut tape = Tape::new();
    let p = model.bind(&mut tape, true);
    let Some((vars, breakdown)) = objective_on_tape(model, &mut tape, &p, sessions)? else {
        return Ok(None);
    };
    tape.backward(vars.total)?;
    let grads = p
        .iter()
        .zip(model.params())
        .map(|(&v, param)| match tape.grad(v) {
            Some(g) => g.to_vec(),
            None => vec![0.0; param.value.len()],
        })
        .collect();
    Ok(Some((breakdown, grads)))
}
