//! Parameter-owning building blocks shared by all modules, plus the
//! deterministic initializer.
//!
//! Residual-branch output projections are zero-initialized so every block
//! starts as the identity; everything else uses fan-in-scaled uniform draws
//! from the `init` sub-stream of the run seed.

use eatkit_tensor::{seeds, Conv2dSpec, ParamId, ParamStore, Tape, Tensor, Var};
use rand::Rng;
use rand_chacha::{rand_core::SeedableRng, ChaCha8Rng};

use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Init {
    /// uniform U(-b, b) with b = sqrt(3 / fan_in)
    FanIn,
    Zeros,
}

pub struct Initializer {
    rng: ChaCha8Rng,
}

impl Initializer {
    pub fn new(seed: u64) -> Self {
        Initializer {
            rng: ChaCha8Rng::seed_from_u64(seeds::stream(seed, "init")),
        }
    }

    pub fn tensor(&mut self, shape: &[usize], init: Init, fan_in: usize) -> Tensor {
        match init {
            Init::Zeros => Tensor::zeros(shape.to_vec()),
            Init::FanIn => {
                let bound = (3.0 / fan_in.max(1) as f64).sqrt();
                let numel: usize = shape.iter().product();
                let data = (0..numel).map(|_| self.rng.gen_range(-bound..bound)).collect();
                Tensor::new(shape.to_vec(), data).expect("init tensor")
            }
        }
    }
}

/// Last-axis linear projection with bias.
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        init: &mut Initializer,
        name: &str,
        c_in: usize,
        c_out: usize,
        mode: Init,
    ) -> Result<Self> {
        let weight = store.register(
            format!("{}.weight", name),
            init.tensor(&[c_out, c_in], mode, c_in),
        )?;
        let bias = store.register(format!("{}.bias", name), Tensor::zeros(vec![c_out]))?;
        Ok(Linear { weight, bias })
    }

    pub fn forward<'t>(&self, tape: &'t Tape, store: &ParamStore, x: Var<'t>) -> Result<Var<'t>> {
        let w = tape.param(store, self.weight);
        let b = tape.param(store, self.bias);
        Ok(x.linear(w, Some(b))?)
    }
}

/// 2-D convolution with bias.
pub struct Conv {
    pub weight: ParamId,
    pub bias: ParamId,
    pub spec: Conv2dSpec,
}

impl Conv {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        init: &mut Initializer,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        spec: Conv2dSpec,
        mode: Init,
    ) -> Result<Self> {
        let c_in_g = c_in / spec.groups;
        let fan_in = c_in_g * kernel * kernel;
        let weight = store.register(
            format!("{}.weight", name),
            init.tensor(&[c_out, c_in_g, kernel, kernel], mode, fan_in),
        )?;
        let bias = store.register(format!("{}.bias", name), Tensor::zeros(vec![c_out]))?;
        Ok(Conv { weight, bias, spec })
    }

    pub fn forward<'t>(&self, tape: &'t Tape, store: &ParamStore, x: Var<'t>) -> Result<Var<'t>> {
        let w = tape.param(store, self.weight);
        let b = tape.param(store, self.bias);
        Ok(x.conv2d(w, Some(b), self.spec)?)
    }
}

pub const LN_EPS: f64 = 1e-6;

/// Layer normalization over a fixed axis (1 for NCHW maps, 2 for tokens).
pub struct Norm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub axis: usize,
}

impl Norm {
    pub fn new(store: &mut ParamStore, name: &str, channels: usize, axis: usize) -> Result<Self> {
        let gamma = store.register(format!("{}.gamma", name), Tensor::ones(vec![channels]))?;
        let beta = store.register(format!("{}.beta", name), Tensor::zeros(vec![channels]))?;
        Ok(Norm { gamma, beta, axis })
    }

    pub fn forward<'t>(&self, tape: &'t Tape, store: &ParamStore, x: Var<'t>) -> Result<Var<'t>> {
        let g = tape.param(store, self.gamma);
        let b = tape.param(store, self.beta);
        Ok(x.layer_norm(self.axis, g, b, LN_EPS)?)
    }
}
