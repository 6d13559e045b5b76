use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Tensor, Var};

/// Which part of the network a parameter belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamGroup {
    /// Trunk, listwise transformer and the single scoring head.
    Shared,
    /// Scoring head dedicated to one domain (multi-head models).
    Head(usize),
    /// Domain classifier; dropped from deployed models.
    Classifier,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub group: ParamGroup,
    pub value: Tensor,
}

/// Index of a parameter inside its [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamId(pub(crate) usize);

/// How freshly allocated parameters are filled.
pub(crate) enum Init {
    /// Weights and biases uniform in `±1/sqrt(fan_in)`, drawn in allocation order.
    FanIn(Box<ChaCha8Rng>),
    /// All zeros; values are supplied afterwards (deserialisation).
    Zeros,
}

impl Init {
    pub(crate) fn seeded(seed: u64) -> Self {
        Init::FanIn(Box::new(ChaCha8Rng::seed_from_u64(seed)))
    }
}

/// Ordered parameter collection; allocation order is part of the model
/// layout and fixes both initialisation and serialisation order.
pub struct ParamStore {
    params: Vec<Param>,
    init: Init,
}

impl ParamStore {
    pub(crate) fn new(init: Init) -> Self {
        Self {
            params: Vec::new(),
            init,
        }
    }

    /// Parameters initialised uniformly in `±1/sqrt(fan_in)` from `seed`.
    pub fn seeded(seed: u64) -> Self {
        Self::new(Init::seeded(seed))
    }

    pub(crate) fn weight(&mut self, name: String, group: ParamGroup, shape: Vec<usize>, fan_in: usize) -> ParamId {
        let n: usize = shape.iter().product();
        let data = match &mut self.init {
            Init::FanIn(rng) => {
                let bound = 1.0 / libm::sqrt(fan_in as f64);
                (0..n).map(|_| rng.random_range(-bound..=bound)).collect()
            }
            Init::Zeros => alloc::vec![0.0; n],
        };
        self.push(name, group, Tensor::new(shape, data).expect("positive dims"))
    }

    pub(crate) fn constant(&mut self, name: String, group: ParamGroup, shape: Vec<usize>, value: f64) -> ParamId {
        let n: usize = shape.iter().product();
        self.push(
            name,
            group,
            Tensor::new(shape, alloc::vec![value; n]).expect("positive dims"),
        )
    }

    fn push(&mut self, name: String, group: ParamGroup, value: Tensor) -> ParamId {
        self.params.push(Param { name, group, value });
        ParamId(self.params.len() - 1)
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub(crate) fn into_params(self) -> Vec<Param> {
        self.params
    }

    /// Registers every parameter on `tape`, as trainable leaves when
    /// `trainable`, otherwise as constants.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Vec<Var> {
        bind(&self.params, tape, trainable)
    }
}

pub(crate) fn bind(params: &[Param], tape: &mut Tape, trainable: bool) -> Vec<Var> {
    params.iter().map(|p| tape.leaf(p.value.clone(), trainable)).collect()
}
