use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::layers::Activation;
use crate::error::{Error, Result};

/// Architecture family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Variant {
    /// Trunk MLP → listwise transformer → final MLP, trained on one domain.
    Baseline,
    /// Baseline with one final MLP per domain, gated by the domain one-hot.
    MultiHead,
    /// Baseline plus a domain classifier behind a gradient reversal layer.
    Dda,
    /// Baseline plus a domain classifier trained to minimise its loss.
    Dds,
}

impl Variant {
    pub fn has_classifier(self) -> bool {
        matches!(self, Variant::Dda | Variant::Dds)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::MultiHead => "multihead",
            Variant::Dda => "dda",
            Variant::Dds => "dds",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "baseline" => Some(Variant::Baseline),
            "multihead" | "multi-head" | "two-headed" => Some(Variant::MultiHead),
            "dda" => Some(Variant::Dda),
            "dds" => Some(Variant::Dds),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct ModelConfig {
    pub variant: Variant,
    pub n_domains: usize,
    pub feature_dim: usize,
    pub trunk_hidden: Vec<usize>,
    pub token_dim: usize,
    pub transformer_layers: usize,
    pub heads: usize,
    pub ffn_dim: usize,
    pub final_hidden: Vec<usize>,
    pub classifier_hidden: Vec<usize>,
    /// Only used by [`Variant::Dda`].
    pub grl_lambda: f64,
    /// Weight of the domain loss for [`Variant::Dda`] and [`Variant::Dds`].
    pub domain_loss_weight: f64,
    pub activation: Activation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Baseline,
            n_domains: 2,
            feature_dim: 10,
            trunk_hidden: vec![32, 16],
            token_dim: 16,
            transformer_layers: 1,
            heads: 1,
            ffn_dim: 32,
            final_hidden: vec![16],
            classifier_hidden: vec![16],
            grl_lambda: 1.0,
            domain_loss_weight: 0.5,
            activation: Activation::Relu,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: alloc::string::String| Err(Error::Config(m));
        if self.n_domains == 0 {
            return fail("n_domains must be positive".into());
        }
        if self.variant == Variant::MultiHead && self.n_domains < 2 {
            return fail(format!("multi-head models need n_domains >= 2, got {}", self.n_domains));
        }
        if self.variant.has_classifier() && self.n_domains < 2 {
            return fail(format!(
                "{} needs at least two domains to classify, got {}",
                self.variant.name(),
                self.n_domains
            ));
        }
        let dims = [
            ("feature_dim", self.feature_dim),
            ("token_dim", self.token_dim),
            ("transformer_layers", self.transformer_layers),
            ("heads", self.heads),
            ("ffn_dim", self.ffn_dim),
        ];
        for (name, v) in dims {
            if v == 0 {
                return fail(format!("{name} must be positive"));
            }
        }
        if self.trunk_hidden.is_empty() {
            return fail("trunk_hidden needs at least one layer".into());
        }
        for (name, widths) in [
            ("trunk_hidden", &self.trunk_hidden),
            ("final_hidden", &self.final_hidden),
            ("classifier_hidden", &self.classifier_hidden),
        ] {
            if widths.contains(&0) {
                return fail(format!("{name} widths must be positive, got {widths:?}"));
            }
        }
        if !self.token_dim.is_multiple_of(self.heads) {
            return fail(format!(
                "token_dim {} is not divisible by heads {}",
                self.token_dim, self.heads
            ));
        }
        if !(self.grl_lambda.is_finite() && self.grl_lambda >= 0.0) {
            return fail(format!("grl_lambda must be finite and >= 0, got {}", self.grl_lambda));
        }
        if !(self.domain_loss_weight.is_finite() && self.domain_loss_weight >= 0.0) {
            return fail(format!(
                "domain_loss_weight must be finite and >= 0, got {}",
                self.domain_loss_weight
            ));
        }
        Ok(())
    }

    pub fn trunk_output(&self) -> usize {
        *self.trunk_hidden.last().expect("validated")
    }

    pub(crate) fn trunk_widths(&self) -> Vec<usize> {
        let mut w = vec![self.feature_dim];
        w.extend_from_slice(&self.trunk_hidden);
        w
    }

    pub(crate) fn final_widths(&self) -> Vec<usize> {
        let mut w = vec![1 + self.token_dim];
        w.extend_from_slice(&self.final_hidden);
        w.push(1);
        w
    }

    pub(crate) fn classifier_widths(&self) -> Vec<usize> {
        let mut w = vec![self.trunk_output()];
        w.extend_from_slice(&self.classifier_hidden);
        w.push(self.n_domains);
        w
    }

    /// Number of scoring heads.
    pub fn scoring_heads(&self) -> usize {
        match self.variant {
            Variant::MultiHead => self.n_domains,
            _ => 1,
        }
    }
}
