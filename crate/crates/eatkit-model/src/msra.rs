//! Multi-Scale Region Aggregation: parallel depthwise convolutions over a
//! shared normalized input, softmax-mixed and projected back by a 1x1
//! convolution. At stride 1 the module is residual and shape-preserving
//! (branches use the configured dilation set); at stride 2/4 it doubles as
//! the stem / between-stage downsampler with dilation 1 on every branch and
//! may change the channel count.

use eatkit_tensor::{Conv2dSpec, ParamStore, Tape, Var};

use crate::error::{ModelError, Result};
use crate::layers::{Conv, Init, Initializer, Norm};
use crate::wom::WomMixer;

pub struct MsraConfig {
    pub in_channels: usize,
    pub out_channels: usize,
    pub stride: usize,
    pub kernel: usize,
    pub dilations: Vec<usize>,
    /// test harness switch: skip the input normalization
    pub bypass_norm: bool,
}

impl MsraConfig {
    /// In-block configuration: stride 1, residual, multi-dilation branches.
    pub fn block(channels: usize, kernel: usize, dilations: &[usize]) -> Self {
        MsraConfig {
            in_channels: channels,
            out_channels: channels,
            stride: 1,
            kernel,
            dilations: dilations.to_vec(),
            bypass_norm: false,
        }
    }

    /// Stem / transition configuration: stride > 1, dilation 1 on every
    /// branch (shape change happens here, so no residual).
    pub fn downsample(in_channels: usize, out_channels: usize, stride: usize, kernel: usize, branches: usize) -> Self {
        MsraConfig {
            in_channels,
            out_channels,
            stride,
            kernel,
            dilations: vec![1; branches],
            bypass_norm: false,
        }
    }
}

pub struct Msra {
    norm: Norm,
    branches: Vec<Conv>,
    mixer: WomMixer,
    proj: Conv,
    residual: bool,
    bypass_norm: bool,
}

impl Msra {
    pub fn new(
        store: &mut ParamStore,
        init: &mut Initializer,
        name: &str,
        cfg: &MsraConfig,
    ) -> Result<Self> {
        if ![1, 2, 4].contains(&cfg.stride) {
            return Err(ModelError::Config(format!(
                "MSRA stride must be 1, 2 or 4, got {}",
                cfg.stride
            )));
        }
        if cfg.dilations.is_empty() {
            return Err(ModelError::Config("MSRA needs at least one branch".into()));
        }
        let residual = cfg.stride == 1;
        if residual && cfg.in_channels != cfg.out_channels {
            return Err(ModelError::Config(format!(
                "MSRA at stride 1 is residual and cannot change channels ({} -> {})",
                cfg.in_channels, cfg.out_channels
            )));
        }
        let norm = Norm::new(store, &format!("{}.norm", name), cfg.in_channels, 1)?;
        let mut branches = Vec::with_capacity(cfg.dilations.len());
        for (n, &dilation) in cfg.dilations.iter().enumerate() {
            let spec = Conv2dSpec {
                stride: cfg.stride,
                padding: dilation * (cfg.kernel - 1) / 2,
                dilation,
                groups: cfg.in_channels,
            };
            branches.push(Conv::new(
                store,
                init,
                &format!("{}.branch{}", name, n),
                cfg.in_channels,
                cfg.in_channels,
                cfg.kernel,
                spec,
                Init::FanIn,
            )?);
        }
        let mixer = WomMixer::new(store, name, cfg.dilations.len())?;
        // residual instances start as the identity (zero projection);
        // downsamplers must transform, so they get a live projection
        let proj_init = if residual { Init::Zeros } else { Init::FanIn };
        let proj = Conv::new(
            store,
            init,
            &format!("{}.proj", name),
            cfg.in_channels,
            cfg.out_channels,
            1,
            Conv2dSpec {
                stride: 1,
                padding: 0,
                dilation: 1,
                groups: 1,
            },
            proj_init,
        )?;
        Ok(Msra {
            norm,
            branches,
            mixer,
            proj,
            residual,
            bypass_norm: cfg.bypass_norm,
        })
    }

    pub fn forward<'t>(&self, tape: &'t Tape, store: &ParamStore, x: Var<'t>) -> Result<Var<'t>> {
        let normed = if self.bypass_norm {
            x
        } else {
            self.norm.forward(tape, store, x)?
        };
        let mut outs = Vec::with_capacity(self.branches.len());
        for branch in &self.branches {
            outs.push(branch.forward(tape, store, normed)?);
        }
        let mixed = self.mixer.mix(tape, store, &outs)?;
        let projected = self.proj.forward(tape, store, mixed)?;
        if self.residual {
            Ok(projected.add(x)?)
        } else {
            Ok(projected)
        }
    }
}
