//! The ranker architectures.
//!
//! Every variant shares the same spine: a per-item trunk MLP produces a
//! hidden representation `h` and a pointwise score `s`; a projection of
//! `h ⊕ s` forms one token per item for the listwise transformer; the final
//! MLP maps `s ⊕ transformer output` to the final score.
//!
//! * `Baseline`: the spine alone.
//! * `MultiHead`: one final MLP per domain. The final score is
//!   `Σ_d onehot(domain)_d · head_d`, so heads of other domains contribute
//!   exactly zero and receive exactly zero gradient.
//! * `Dda`: adds a domain classifier on `h` behind a gradient reversal node.
//! * `Dds`: the same classifier without the reversal.

mod codec;
mod config;
mod layers;
mod params;

use alloc::format;
use alloc::vec::Vec;

pub use codec::{FORMAT_VERSION, MAGIC};
pub use config::{ModelConfig, Variant};
pub use layers::{Activation, LayerNorm, Linear, Mlp, SelfAttention, TransformerBlock};
pub use params::{Param, ParamGroup, ParamId, ParamStore};

use crate::autodiff::{GrlLambda, Tape, Tensor, Var};
use crate::data::QuerySession;
use crate::error::{Error, Result};
use params::Init;

/// Network layers of a model; a pure function of its config.
#[derive(Clone, Debug)]
struct Layout {
    trunk: Mlp,
    score: Linear,
    token: Linear,
    blocks: Vec<TransformerBlock>,
    heads: Vec<Mlp>,
    classifier: Option<Mlp>,
}

impl Layout {
    fn new(config: &ModelConfig, store: &mut ParamStore) -> Self {
        let act = config.activation;
        let shared = ParamGroup::Shared;
        let trunk = Mlp::new(store, "trunk", shared, &config.trunk_widths(), act, true);
        let score = Linear::new(store, "score", shared, config.trunk_output(), 1);
        let token = Linear::new(store, "token", shared, config.trunk_output() + 1, config.token_dim);
        let blocks = (0..config.transformer_layers)
            .map(|l| {
                TransformerBlock::new(
                    store,
                    &format!("block{l}"),
                    shared,
                    config.token_dim,
                    config.heads,
                    config.ffn_dim,
                    act,
                )
            })
            .collect();
        let final_widths = config.final_widths();
        let heads = match config.variant {
            Variant::MultiHead => (0..config.n_domains)
                .map(|d| {
                    Mlp::new(
                        store,
                        &format!("head{d}"),
                        ParamGroup::Head(d),
                        &final_widths,
                        act,
                        false,
                    )
                })
                .collect(),
            _ => alloc::vec![Mlp::new(store, "final", shared, &final_widths, act, false)],
        };
        let classifier = config.variant.has_classifier().then(|| {
            Mlp::new(
                store,
                "classifier",
                ParamGroup::Classifier,
                &config.classifier_widths(),
                act,
                false,
            )
        });
        Self {
            trunk,
            score,
            token,
            blocks,
            heads,
            classifier,
        }
    }
}

/// A ranker: configuration, seed and trained parameters.
#[derive(Clone, Debug)]
pub struct Model {
    config: ModelConfig,
    seed: u64,
    params: Vec<Param>,
    layout: Layout,
}

impl PartialEq for Model {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.seed == other.seed && self.params == other.params
    }
}

/// Per-item outputs of one forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoredSession {
    pub pointwise_scores: Vec<f64>,
    pub final_scores: Vec<f64>,
    /// `[items, n_domains]` classifier logits for DDA/DDS.
    pub domain_logits: Option<Tensor>,
}

/// Tape handles produced by [`Model::forward_on_tape`].
#[derive(Clone, Copy, Debug)]
pub struct ForwardVars {
    /// `[L, trunk_output]`
    pub trunk: Var,
    /// `[L, 1]`
    pub pointwise: Var,
    /// `[L, 1]`
    pub final_scores: Var,
    /// `[L, n_domains]`
    pub domain_logits: Option<Var>,
}

impl Model {
    /// Builds a model with parameters drawn deterministically from `seed`.
    pub fn build(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new(Init::seeded(seed));
        let layout = Layout::new(&config, &mut store);
        Ok(Self {
            config,
            seed,
            params: store.into_params(),
            layout,
        })
    }

    /// Rebuilds the layout for `config` and installs `params`, which must
    /// match the layout's names and shapes in order.
    pub(crate) fn from_parts(config: ModelConfig, seed: u64, params: Vec<Param>) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new(Init::Zeros);
        let layout = Layout::new(&config, &mut store);
        let expected = store.params();
        if expected.len() != params.len() {
            return Err(Error::Codec(format!(
                "expected {} parameter tensors, found {}",
                expected.len(),
                params.len()
            )));
        }
        for (e, p) in expected.iter().zip(&params) {
            if e.name != p.name || e.group != p.group || e.value.shape() != p.value.shape() {
                return Err(Error::Codec(format!(
                    "parameter {} does not match the layout (expected {} {:?})",
                    p.name,
                    e.name,
                    e.value.shape()
                )));
            }
        }
        Ok(Self {
            config,
            seed,
            params,
            layout,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    /// Total scalar parameter count. With `deployed`, the domain classifier
    /// is left out since serving never evaluates it.
    pub fn count_parameters(&self, deployed: bool) -> usize {
        self.params
            .iter()
            .filter(|p| !(deployed && p.group == ParamGroup::Classifier))
            .map(|p| p.value.len())
            .sum()
    }

    /// Registers all parameters on `tape` in model order.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Vec<Var> {
        params::bind(&self.params, tape, trainable)
    }

    /// Records the forward pass of one list on `tape`.
    ///
    /// `features: [L, feature_dim]`; `masked` marks padding rows, which no
    /// item attends to. `domain` selects the scoring head of multi-head
    /// models.
    pub fn forward_on_tape(
        &self,
        tape: &mut Tape,
        p: &[Var],
        features: Var,
        masked: Option<&[bool]>,
        domain: usize,
    ) -> Result<ForwardVars> {
        let shape = tape.value(features).shape().to_vec();
        if shape.len() != 2 || shape[1] != self.config.feature_dim {
            return Err(Error::Shape {
                op: "forward",
                left: shape,
                right: alloc::vec![self.config.feature_dim],
            });
        }
        if self.config.variant != Variant::Baseline && domain >= self.config.n_domains {
            return Err(Error::DomainOutOfRange {
                domain,
                n_domains: self.config.n_domains,
            });
        }
        let l = &self.layout;
        let trunk = l.trunk.forward(tape, p, features)?;
        let pointwise = l.score.forward(tape, p, trunk)?;
        let joined = tape.concat_cols(trunk, pointwise)?;
        let mut tokens = l.token.forward(tape, p, joined)?;
        for block in &l.blocks {
            tokens = block.forward(tape, p, tokens, masked)?;
        }
        let head_input = tape.concat_cols(pointwise, tokens)?;
        let final_scores = if self.config.variant == Variant::MultiHead {
            let mut total: Option<Var> = None;
            for (d, head) in l.heads.iter().enumerate() {
                let out = head.forward(tape, p, head_input)?;
                let gated = tape.scale(out, if d == domain { 1.0 } else { 0.0 });
                total = Some(match total {
                    None => gated,
                    Some(acc) => tape.add(acc, gated)?,
                });
            }
            total.expect("at least two heads")
        } else {
            l.heads[0].forward(tape, p, head_input)?
        };
        let domain_logits = match &l.classifier {
            None => None,
            Some(classifier) => {
                let input = if self.config.variant == Variant::Dda {
                    tape.gradient_reversal(trunk, GrlLambda::new(self.config.grl_lambda)?)
                } else {
                    trunk
                };
                Some(classifier.forward(tape, p, input)?)
            }
        };
        Ok(ForwardVars {
            trunk,
            pointwise,
            final_scores,
            domain_logits,
        })
    }

    fn check_session(&self, session: &QuerySession) -> Result<()> {
        if session.is_empty() {
            return Err(Error::Data(format!("session {} has no items", session.query_id)));
        }
        if session.feature_dim() != self.config.feature_dim {
            return Err(Error::Data(format!(
                "session {} has {} features, model expects {}",
                session.query_id,
                session.feature_dim(),
                self.config.feature_dim
            )));
        }
        Ok(())
    }

    /// Scores one session.
    pub fn forward(&self, session: &QuerySession) -> Result<ScoredSession> {
        self.forward_padded(session, session.len())
    }

    /// Scores a session embedded in a list padded with masked rows up to
    /// `padded_len` items; only the real items' outputs are returned.
    pub fn forward_padded(&self, session: &QuerySession, padded_len: usize) -> Result<ScoredSession> {
        self.check_session(session)?;
        let n = session.len();
        let total = padded_len.max(n);
        let mut tape = Tape::new();
        let p = self.bind(&mut tape, false);
        let mut rows: Vec<&[f64]> = session.items.iter().map(|i| i.features.as_slice()).collect();
        let pad = alloc::vec![0.0; self.config.feature_dim];
        rows.resize(total, pad.as_slice());
        let x = tape.constant(Tensor::from_rows(&rows)?);
        let mask: Vec<bool> = (0..total).map(|i| i >= n).collect();
        let out = self.forward_on_tape(&mut tape, &p, x, (total > n).then_some(mask.as_slice()), session.domain)?;
        let column = |v: Var| tape.value(v).data()[..n].to_vec();
        let domain_logits = match out.domain_logits {
            Some(v) => {
                let d = self.config.n_domains;
                Some(Tensor::new(alloc::vec![n, d], tape.value(v).data()[..n * d].to_vec())?)
            }
            None => None,
        };
        Ok(ScoredSession {
            pointwise_scores: column(out.pointwise),
            final_scores: column(out.final_scores),
            domain_logits,
        })
    }

    /// Final scores only.
    pub fn score(&self, session: &QuerySession) -> Result<Vec<f64>> {
        Ok(self.forward(session)?.final_scores)
    }

    pub fn save(&self) -> Vec<u8> {
        codec::encode(self)
    }

    pub fn load(bytes: &[u8]) -> Result<Self> {
        codec::decode(bytes)
    }
}

#[cfg(test)]
mod tests;
