//! Backbones: pooled-embedding feed-forward network, GRU, and a pre-norm
//! Transformer encoder. All three share the same forward contract and expose
//! the hidden activations that task masks may gate.
//!
//! Closed-form parameter counts (V vocab, E embed, H hidden, C classes,
//! N encoder blocks):
//!
//! | architecture | parameters |
//! |---|---|
//! | ANN | `V·E + E·H + H + H·C + C` |
//! | GRU | `V·E + 3·(E·H + H·H + H) + H·C + C` |
//! | Transformer | `V·E + N·(12·E² + 13·E) + 2·E + E·C + C` |
//!
//! The Transformer feed-forward width is `4·E`; `hidden_dim` is unused there.

mod ann;
mod batch;
mod checkpoint;
mod gru;
pub mod layers;
mod params;
mod transformer;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Tape, Tensor, Var};
use crate::error::{Error, Result};

pub use batch::Batch;
pub use checkpoint::{load_params, save_params};
pub use params::Params;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    #[serde(alias = "ANN", alias = "Ann")]
    Ann,
    #[serde(alias = "GRU", alias = "Gru")]
    Gru,
    #[serde(alias = "TRANSFORMER", alias = "Transformer")]
    Transformer,
}

impl Architecture {
    pub const ALL: [Architecture; 3] = [
        Architecture::Ann,
        Architecture::Gru,
        Architecture::Transformer,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Architecture::Ann => "ann",
            Architecture::Gru => "gru",
            Architecture::Transformer => "transformer",
        }
    }
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub architecture: Architecture,
    pub vocab_size: usize,
    #[serde(default = "defaults::embed_dim")]
    pub embed_dim: usize,
    #[serde(default = "defaults::hidden_dim")]
    pub hidden_dim: usize,
    #[serde(default = "defaults::num_classes")]
    pub num_classes: usize,
    #[serde(default = "defaults::num_layers")]
    pub num_layers: usize,
    #[serde(default = "defaults::num_heads")]
    pub num_heads: usize,
    #[serde(default = "defaults::dropout_p")]
    pub dropout_p: f64,
}

pub(crate) mod defaults {
    pub fn embed_dim() -> usize {
        128
    }
    pub fn hidden_dim() -> usize {
        256
    }
    pub fn num_classes() -> usize {
        150
    }
    pub fn num_layers() -> usize {
        2
    }
    pub fn num_heads() -> usize {
        4
    }
    pub fn dropout_p() -> f64 {
        0.1
    }
}

impl ModelConfig {
    pub fn new(architecture: Architecture, vocab_size: usize) -> Self {
        ModelConfig {
            architecture,
            vocab_size,
            embed_dim: defaults::embed_dim(),
            hidden_dim: defaults::hidden_dim(),
            num_classes: defaults::num_classes(),
            num_layers: defaults::num_layers(),
            num_heads: defaults::num_heads(),
            dropout_p: defaults::dropout_p(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("vocab_size", self.vocab_size),
            ("embed_dim", self.embed_dim),
            ("hidden_dim", self.hidden_dim),
            ("num_classes", self.num_classes),
            ("num_layers", self.num_layers),
            ("num_heads", self.num_heads),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be at least 1")));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::Config(format!(
                "dropout_p {} not in [0, 1)",
                self.dropout_p
            )));
        }
        if self.architecture == Architecture::Transformer
            && !self.embed_dim.is_multiple_of(self.num_heads)
        {
            return Err(Error::Config(format!(
                "embed_dim {} not divisible by num_heads {}",
                self.embed_dim, self.num_heads
            )));
        }
        Ok(())
    }

    /// Parameter count from the closed-form table in the module docs.
    pub fn expected_param_count(&self) -> usize {
        let (v, e, h, c, n) = (
            self.vocab_size,
            self.embed_dim,
            self.hidden_dim,
            self.num_classes,
            self.num_layers,
        );
        match self.architecture {
            Architecture::Ann => v * e + e * h + h + h * c + c,
            Architecture::Gru => v * e + 3 * (e * h + h * h + h) + h * c + c,
            Architecture::Transformer => v * e + n * (12 * e * e + 13 * e) + 2 * e + e * c + c,
        }
    }
}

/// A hidden activation vector that a task gate may multiply.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskableLayerHandle {
    pub layer_id: String,
    pub width: usize,
}

/// How a parameter's entries connect to maskable units.
///
/// For a weight stored `[in × out]`, entry `(j, i)` feeds unit `i` of
/// `out_handle` from unit `j` of `in_handle`. A 1-D parameter is indexed by
/// the output unit only.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamGating {
    pub param: usize,
    pub out_handle: Option<usize>,
    pub in_handle: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train { dropout_seed: u64 },
    Eval,
}

impl Mode {
    pub fn is_train(self) -> bool {
        matches!(self, Mode::Train { .. })
    }

    pub(crate) fn dropout_seed(self, site: u64) -> u64 {
        match self {
            Mode::Train { dropout_seed } => crate::seeds::derive(dropout_seed, &[site]),
            Mode::Eval => 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Model {
    cfg: ModelConfig,
    params: Params,
    handles: Vec<MaskableLayerHandle>,
    gating: Vec<ParamGating>,
}

pub(crate) struct Builder<'a> {
    rng: ChaCha8Rng,
    params: &'a mut Params,
}

impl Builder<'_> {
    /// Weight `[fan_in × fan_out]` drawn from U(±1/√fan_in).
    pub fn weight(&mut self, name: &str, fan_in: usize, fan_out: usize) -> usize {
        let bound = 1.0 / (fan_in as f64).sqrt();
        self.uniform(name, &[fan_in, fan_out], bound)
    }

    pub fn bias(&mut self, name: &str, fan_in: usize, width: usize) -> usize {
        let bound = 1.0 / (fan_in as f64).sqrt();
        self.uniform(name, &[width], bound)
    }

    /// Lookup tables have a fan-in of one, so entries are U(−1, 1).
    pub fn embedding(&mut self, name: &str, vocab: usize, dim: usize) -> usize {
        self.uniform(name, &[vocab, dim], 1.0)
    }

    pub fn constant(&mut self, name: &str, width: usize, value: f64) -> usize {
        self.params.push(name, Tensor::full(&[width], value))
    }

    fn uniform(&mut self, name: &str, shape: &[usize], bound: f64) -> usize {
        let n = shape.iter().product();
        let data = (0..n)
            .map(|_| self.rng.random_range(-bound..=bound))
            .collect();
        self.params.push(
            name,
            Tensor::new(shape.to_vec(), data).expect("valid shape"),
        )
    }
}

impl Model {
    /// Deterministically initializes a model from `seed`.
    pub fn build(cfg: ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut params = Params::default();
        let mut b = Builder {
            rng: ChaCha8Rng::seed_from_u64(seed),
            params: &mut params,
        };
        let (handles, gating) = match cfg.architecture {
            Architecture::Ann => ann::init(&cfg, &mut b),
            Architecture::Gru => gru::init(&cfg, &mut b),
            Architecture::Transformer => transformer::init(&cfg, &mut b),
        };
        Ok(Model {
            cfg,
            params,
            handles,
            gating,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    pub fn set_params(&mut self, params: Params) -> Result<()> {
        self.params.check_compatible(&params)?;
        self.params = params;
        Ok(())
    }

    pub fn handles(&self) -> &[MaskableLayerHandle] {
        &self.handles
    }

    pub fn param_gating(&self) -> &[ParamGating] {
        &self.gating
    }

    pub fn num_params(&self) -> usize {
        self.params.num_values()
    }

    /// Records every parameter on `tape` as a leaf.
    pub fn bind(&self, tape: &mut Tape, requires_grad: bool) -> Result<Vec<Var>> {
        bind_params(&self.params, tape, requires_grad)
    }

    /// Logits `[B × num_classes]`. `gates`, when given, holds one vector per
    /// maskable handle, in handle order.
    pub fn forward(
        &self,
        tape: &mut Tape,
        bound: &[Var],
        batch: &Batch,
        gates: Option<&[Var]>,
        mode: Mode,
    ) -> Result<Var> {
        if bound.len() != self.params.len() {
            return Err(Error::shape(
                "forward",
                "bound parameters do not match the model",
            ));
        }
        if let Some(g) = gates {
            if g.len() != self.handles.len() {
                return Err(Error::shape(
                    "forward",
                    format!(
                        "{} gates for {} maskable layers",
                        g.len(),
                        self.handles.len()
                    ),
                ));
            }
            for (gv, h) in g.iter().zip(&self.handles) {
                if tape.value(*gv).len() != h.width {
                    return Err(Error::shape(
                        "forward",
                        format!("gate width for {}", h.layer_id),
                    ));
                }
            }
        }
        batch.validate()?;
        match self.cfg.architecture {
            Architecture::Ann => ann::forward(&self.cfg, tape, bound, batch, gates, mode),
            Architecture::Gru => gru::forward(&self.cfg, tape, bound, batch, gates),
            Architecture::Transformer => {
                transformer::forward(&self.cfg, tape, bound, batch, gates, mode)
            }
        }
    }

    /// Evaluation-mode logits on a throwaway tape.
    pub fn logits(&self, batch: &Batch, gates: Option<&[Tensor]>) -> Result<Tensor> {
        self.logits_with(&self.params, batch, gates)
    }

    /// Evaluation-mode logits of this architecture under other parameter
    /// values, e.g. a frozen snapshot or virtually updated weights.
    pub fn logits_with(
        &self,
        params: &Params,
        batch: &Batch,
        gates: Option<&[Tensor]>,
    ) -> Result<Tensor> {
        self.params.check_compatible(params)?;
        let mut tape = Tape::new();
        let bound = bind_params(params, &mut tape, false)?;
        let gate_vars = gates
            .map(|gs| {
                gs.iter()
                    .map(|g| tape.constant(g.clone()))
                    .collect::<Result<Vec<_>>>()
            })
            .transpose()?;
        let out = self.forward(&mut tape, &bound, batch, gate_vars.as_deref(), Mode::Eval)?;
        Ok(tape.value(out).clone())
    }
}

fn bind_params(params: &Params, tape: &mut Tape, requires_grad: bool) -> Result<Vec<Var>> {
    params
        .tensors()
        .iter()
        .map(|t| tape.leaf(t.clone(), requires_grad))
        .collect()
}
