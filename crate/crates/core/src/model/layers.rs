use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::params::{ParamGroup, ParamId, ParamStore};
use crate::autodiff::{Tape, Var};
use crate::error::Result;

/// Hidden-layer nonlinearity.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    pub(crate) fn apply(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Activation::Relu => tape.relu(x),
            Activation::Tanh => tape.tanh(x),
        }
    }
}

/// `x · W + b` with `W: [in, out]`.
#[derive(Clone, Debug)]
pub struct Linear {
    w: ParamId,
    b: ParamId,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, group: ParamGroup, input: usize, output: usize) -> Self {
        let w = store.weight(format!("{name}.w"), group, vec![input, output], input);
        let b = store.weight(format!("{name}.b"), group, vec![1, output], input);
        Self { w, b }
    }

    pub fn forward(&self, tape: &mut Tape, p: &[Var], x: Var) -> Result<Var> {
        let y = tape.matmul(x, p[self.w.0])?;
        tape.add_row(y, p[self.b.0])
    }
}

/// Stack of linear layers with the activation between them, and after the
/// last one when `activate_output` is set.
#[derive(Clone, Debug)]
pub struct Mlp {
    layers: Vec<Linear>,
    activation: Activation,
    activate_output: bool,
}

impl Mlp {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        group: ParamGroup,
        widths: &[usize],
        activation: Activation,
        activate_output: bool,
    ) -> Self {
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(store, &format!("{name}.{i}"), group, w[0], w[1]))
            .collect();
        Self {
            layers,
            activation,
            activate_output,
        }
    }

    pub fn forward(&self, tape: &mut Tape, p: &[Var], mut x: Var) -> Result<Var> {
        let last = self.layers.len().saturating_sub(1);
        for (i, layer) in self.layers.iter().enumerate() {
            x = layer.forward(tape, p, x)?;
            if i < last || self.activate_output {
                x = self.activation.apply(tape, x);
            }
        }
        Ok(x)
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    gamma: ParamId,
    beta: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, group: ParamGroup, dim: usize) -> Self {
        Self {
            gamma: store.constant(format!("{name}.gamma"), group, vec![1, dim], 1.0),
            beta: store.constant(format!("{name}.beta"), group, vec![1, dim], 0.0),
        }
    }

    pub fn forward(&self, tape: &mut Tape, p: &[Var], x: Var) -> Result<Var> {
        tape.layer_norm(x, p[self.gamma.0], p[self.beta.0])
    }
}

/// Scaled dot-product self-attention across the items of one list, without
/// positional information.
#[derive(Clone, Debug)]
pub struct SelfAttention {
    query: Linear,
    key: Linear,
    value: Linear,
    output: Linear,
    dim: usize,
    heads: usize,
}

impl SelfAttention {
    pub fn new(store: &mut ParamStore, name: &str, group: ParamGroup, dim: usize, heads: usize) -> Self {
        Self {
            query: Linear::new(store, &format!("{name}.q"), group, dim, dim),
            key: Linear::new(store, &format!("{name}.k"), group, dim, dim),
            value: Linear::new(store, &format!("{name}.v"), group, dim, dim),
            output: Linear::new(store, &format!("{name}.o"), group, dim, dim),
            dim,
            heads,
        }
    }

    /// `tokens: [L, dim]`; `masked[j]` hides position `j` from every query.
    pub fn forward(&self, tape: &mut Tape, p: &[Var], tokens: Var, masked: Option<&[bool]>) -> Result<Var> {
        let q = self.query.forward(tape, p, tokens)?;
        let k = self.key.forward(tape, p, tokens)?;
        let v = self.value.forward(tape, p, tokens)?;
        let head_dim = self.dim / self.heads;
        let scale = 1.0 / libm::sqrt(head_dim as f64);
        let mut merged: Option<Var> = None;
        for h in 0..self.heads {
            let (lo, hi) = (h * head_dim, (h + 1) * head_dim);
            let (qh, kh, vh) = if self.heads == 1 {
                (q, k, v)
            } else {
                (
                    tape.slice_cols(q, lo, hi)?,
                    tape.slice_cols(k, lo, hi)?,
                    tape.slice_cols(v, lo, hi)?,
                )
            };
            let logits = tape.matmul_transpose_b(qh, kh)?;
            let logits = tape.scale(logits, scale);
            let weights = match masked {
                Some(m) => tape.masked_softmax(logits, 1, m)?,
                None => tape.softmax(logits, 1)?,
            };
            let out = tape.matmul(weights, vh)?;
            merged = Some(match merged {
                None => out,
                Some(acc) => tape.concat_cols(acc, out)?,
            });
        }
        self.output.forward(tape, p, merged.expect("heads >= 1"))
    }
}

/// Post-norm transformer encoder block: attention and a feed-forward layer,
/// each wrapped in a residual connection followed by layer normalisation.
#[derive(Clone, Debug)]
pub struct TransformerBlock {
    attention: SelfAttention,
    norm1: LayerNorm,
    ffn: Mlp,
    norm2: LayerNorm,
}

impl TransformerBlock {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        group: ParamGroup,
        dim: usize,
        heads: usize,
        ffn_dim: usize,
        activation: Activation,
    ) -> Self {
        Self {
            attention: SelfAttention::new(store, &format!("{name}.attn"), group, dim, heads),
            norm1: LayerNorm::new(store, &format!("{name}.ln1"), group, dim),
            ffn: Mlp::new(
                store,
                &format!("{name}.ffn"),
                group,
                &[dim, ffn_dim, dim],
                activation,
                false,
            ),
            norm2: LayerNorm::new(store, &format!("{name}.ln2"), group, dim),
        }
    }

    pub fn forward(&self, tape: &mut Tape, p: &[Var], x: Var, masked: Option<&[bool]>) -> Result<Var> {
        let a = self.attention.forward(tape, p, x, masked)?;
        let x = tape.add(x, a)?;
        let x = self.norm1.forward(tape, p, x)?;
        let f = self.ffn.forward(tape, p, x)?;
        let x = tape.add(x, f)?;
        self.norm2.forward(tape, p, x)
    }
}
