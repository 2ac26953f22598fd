use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::{NetworkParams, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::operators::ComplexImage;

/// Number of tape vars per residual block.
const BLOCK_PARAMS: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DirectConfig {
    pub blocks: usize,
    pub features: usize,
}

impl Default for DirectConfig {
    fn default() -> Self {
        Self {
            blocks: 4,
            features: 16,
        }
    }
}

/// `x + conv₂(relu(affine(conv₁(x))))`.
///
/// `p` holds `[conv1.weight, conv1.bias, affine.scale, affine.shift,
/// conv2.weight, conv2.bias]`.
pub fn residual_block(tape: &mut Tape, input: Var, p: &[Var]) -> Result<Var> {
    if p.len() != BLOCK_PARAMS {
        return Err(Error::Contract(format!(
            "residual block takes {BLOCK_PARAMS} params, got {}",
            p.len()
        )));
    }
    let h = tape.conv2d(input, p[0], p[1])?;
    let h = tape.channel_affine(h, p[2], p[3])?;
    let h = tape.relu(h);
    let h = tape.conv2d(h, p[4], p[5])?;
    tape.add(input, h)
}

/// Gain applied to the last conv of every residual branch at init.
const BRANCH_GAIN: f64 = 0.1;

fn he_normal(shape: &[usize], gain: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let fan_in = shape[1] * shape[2] * shape[3];
    let normal = Normal::new(0.0, gain * (2.0 / fan_in as f64).sqrt()).expect("positive std");
    Tensor::from_fn(shape, |_| normal.sample(rng))
}

/// Residual CNN over the two-channel (real, imaginary) image with a global
/// skip connection: `f(u) = u + tail(blocks(head(u)))`.
#[derive(Clone, Debug, PartialEq)]
pub struct DirectInversionNet {
    config: DirectConfig,
    params: NetworkParams,
}

impl DirectInversionNet {
    /// He-normal conv weights (scaled down on the convs that close a
    /// residual branch, so the untrained net stays near the identity), zero
    /// biases, unit affine scales.
    pub fn new(config: DirectConfig, seed: u64) -> Result<Self> {
        Self::build(config, he_normal, seed)
    }

    /// All conv weights zero: the network is the identity map.
    pub fn identity(config: DirectConfig) -> Result<Self> {
        Self::build(config, |shape, _, _| Tensor::zeros(shape), 0)
    }

    fn build(
        config: DirectConfig,
        mut weight: impl FnMut(&[usize], f64, &mut ChaCha8Rng) -> Tensor,
        seed: u64,
    ) -> Result<Self> {
        if config.features == 0 {
            return Err(Error::Contract("features must be positive".into()));
        }
        let f = config.features;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = NetworkParams::new();
        params.push("head.weight", weight(&[f, 2, 3, 3], 1.0, &mut rng))?;
        params.push("head.bias", Tensor::zeros(&[f]))?;
        for b in 0..config.blocks {
            params.push(format!("block{b}.conv1.weight"), weight(&[f, f, 3, 3], 1.0, &mut rng))?;
            params.push(format!("block{b}.conv1.bias"), Tensor::zeros(&[f]))?;
            params.push(format!("block{b}.affine.scale"), Tensor::full(&[f], 1.0))?;
            params.push(format!("block{b}.affine.shift"), Tensor::zeros(&[f]))?;
            params.push(
                format!("block{b}.conv2.weight"),
                weight(&[f, f, 3, 3], BRANCH_GAIN, &mut rng),
            )?;
            params.push(format!("block{b}.conv2.bias"), Tensor::zeros(&[f]))?;
        }
        params.push("tail.weight", weight(&[2, f, 3, 3], BRANCH_GAIN, &mut rng))?;
        params.push("tail.bias", Tensor::zeros(&[2]))?;
        Ok(Self { config, params })
    }

    pub fn config(&self) -> DirectConfig {
        self.config
    }

    pub fn params(&self) -> &NetworkParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut NetworkParams {
        &mut self.params
    }

    /// Replaces parameters after checking names and shapes.
    pub fn set_params(&mut self, params: NetworkParams) -> Result<()> {
        self.params = self.params.aligned_from(&params)?;
        Ok(())
    }

    /// Records the network applied to a `[1, 2, H, W]` node. `vars` are the
    /// bound parameters in [`NetworkParams`] order.
    pub fn forward_on_tape(&self, tape: &mut Tape, vars: &[Var], input: Var) -> Result<Var> {
        if vars.len() != self.params.len() {
            return Err(Error::dim("direct net params", &[self.params.len()], &[vars.len()]));
        }
        let mut h = tape.conv2d(input, vars[0], vars[1])?;
        for b in 0..self.config.blocks {
            let start = 2 + b * BLOCK_PARAMS;
            h = residual_block(tape, h, &vars[start..start + BLOCK_PARAMS])?;
        }
        let n = vars.len();
        let out = tape.conv2d(h, vars[n - 2], vars[n - 1])?;
        tape.add(input, out)
    }

    pub fn forward(&self, u: &ComplexImage) -> Result<ComplexImage> {
        if !self.params.is_finite() {
            return Err(Error::NonFinite("direct network parameters".into()));
        }
        let mut tape = Tape::new();
        let vars = self.params.bind_frozen(&mut tape);
        let x = tape.constant(u.to_tensor());
        let y = self.forward_on_tape(&mut tape, &vars, x)?;
        ComplexImage::from_tensor(tape.value(y))
    }
}
