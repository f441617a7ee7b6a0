//! Fully connected tanh network mapping `(t, dP7)` to the ten system states,
//! with an exact time derivative and parameter gradients through it.
//!
//! The time derivative is propagated forward as a tangent alongside the
//! activations; parameter gradients of losses involving that tangent are
//! obtained by a reverse sweep over both. Inputs are only `(t, dP7)`: the
//! clearing state is a function of `dP7` in this setting, so it is not a
//! separate network input.

mod activation;
mod checkpoint;
mod forward;
mod gradients;
mod normalization;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use checkpoint::Checkpoint;
pub use forward::{forward, forward_batch, forward_batch_single, forward_time_grad, forward_time_grad_batch};
pub use gradients::{loss_gradients, loss_terms, mode_loss_terms, LossTerms, PreparedBatch};
pub(crate) use normalization::quantile_sorted;
pub use normalization::Normalization;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub n_hidden_layers: usize,
    pub width: usize,
    #[serde(default)]
    pub activation: Activation,
    pub input_dim: usize,
    pub output_dim: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            n_hidden_layers: 2,
            width: 150,
            activation: Activation::Tanh,
            input_dim: 2,
            output_dim: 10,
        }
    }
}

impl NetworkConfig {
    pub fn new(n_hidden_layers: usize, width: usize) -> Self {
        Self {
            n_hidden_layers,
            width,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_hidden_layers == 0 || self.width == 0 || self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::Config(format!("degenerate network configuration {self:?}")));
        }
        Ok(())
    }

    /// `(fan_out, fan_in)` of every affine map, input to output.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut dims = vec![self.input_dim];
        dims.extend(std::iter::repeat_n(self.width, self.n_hidden_layers));
        dims.push(self.output_dim);
        dims.windows(2).map(|w| (w[1], w[0])).collect()
    }

    pub fn n_params(&self) -> usize {
        self.layer_shapes().iter().map(|(o, i)| o * i + o).sum()
    }
}

/// One affine map `z -> W z + b`, `W` stored as fan_out x fan_in.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

/// Weights and biases; also used as the container for their gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParameters {
    pub layers: Vec<Layer>,
}

impl MlpParameters {
    pub fn zeros(config: &NetworkConfig) -> Self {
        Self {
            layers: config
                .layer_shapes()
                .into_iter()
                .map(|(o, i)| Layer {
                    w: Array2::zeros((o, i)),
                    b: Array1::zeros(o),
                })
                .collect(),
        }
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Checks the layer chain against `config` and that every entry is finite.
    pub fn validate(&self, config: &NetworkConfig) -> Result<()> {
        let shapes = config.layer_shapes();
        if shapes.len() != self.layers.len() {
            return Err(Error::Shape(format!(
                "{} layers, configuration has {}",
                self.layers.len(),
                shapes.len()
            )));
        }
        for (k, (l, &(o, i))) in self.layers.iter().zip(&shapes).enumerate() {
            if l.w.dim() != (o, i) || l.b.len() != o {
                return Err(Error::Shape(format!(
                    "layer {k} is {:?} + {}, expected ({o}, {i}) + {o}",
                    l.w.dim(),
                    l.b.len()
                )));
            }
        }
        if let Some((k, v)) = self.flat().into_iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "parameter",
                index: k,
                value: v,
            });
        }
        Ok(())
    }

    /// Parameters in layer order, each layer as `W` (row-major) then `b`.
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            out.extend(l.w.iter());
            out.extend(l.b.iter());
        }
        out
    }

    pub fn from_flat(config: &NetworkConfig, values: &[f64]) -> Result<Self> {
        if values.len() != config.n_params() {
            return Err(Error::Shape(format!(
                "{} values for {} parameters",
                values.len(),
                config.n_params()
            )));
        }
        let mut p = Self::zeros(config);
        let mut rest = values;
        for l in &mut p.layers {
            let (w, tail) = rest.split_at(l.w.len());
            let (b, tail) = tail.split_at(l.b.len());
            l.w.as_slice_mut().unwrap().copy_from_slice(w);
            l.b.as_slice_mut().unwrap().copy_from_slice(b);
            rest = tail;
        }
        Ok(p)
    }

    /// Mutable views of every parameter block, in `flat` order.
    pub fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.w.as_slice_mut().unwrap(), l.b.as_slice_mut().unwrap()])
            .collect()
    }

    pub fn blocks(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.w.as_slice().unwrap(), l.b.as_slice().unwrap()])
            .collect()
    }

    pub(crate) fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.w += &b.w;
            a.b += &b.b;
        }
    }
}

/// Glorot-uniform weights and zero biases drawn from a ChaCha8 stream seeded
/// with `seed`.
pub fn init_params(config: &NetworkConfig, seed: u64) -> Result<MlpParameters> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = MlpParameters::zeros(config);
    for l in &mut p.layers {
        let (o, i) = l.w.dim();
        let limit = (6.0 / (o + i) as f64).sqrt();
        l.w.iter_mut().for_each(|w| *w = rng.random_range(-limit..limit));
    }
    Ok(p)
}
