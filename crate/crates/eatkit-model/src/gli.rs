//! Global and Local Interaction: the normalized input is split on the
//! channel axis, C_g channels flow through attention (MD-MSA or plain MSA)
//! and the remaining C_l through a depthwise + pointwise convolution pair.
//! Both paths are weighted by a two-way WOM, concatenated back to C channels
//! and closed with a block-level residual.

use eatkit_tensor::{concat, Conv2dSpec, ParamStore, Tape, Var};

use crate::attention::MdMsa;
use crate::error::{ModelError, Result};
use crate::layers::{Conv, Init, Initializer, Norm};
use crate::wom::WomMixer;

pub struct LocalPath {
    pub depthwise: Conv,
    pub pointwise: Conv,
}

impl LocalPath {
    fn new(
        store: &mut ParamStore,
        init: &mut Initializer,
        name: &str,
        channels: usize,
        kernel: usize,
    ) -> Result<Self> {
        let depthwise = Conv::new(
            store,
            init,
            &format!("{}.conv", name),
            channels,
            channels,
            kernel,
            Conv2dSpec {
                stride: 1,
                padding: (kernel - 1) / 2,
                dilation: 1,
                groups: channels,
            },
            Init::FanIn,
        )?;
        let pointwise = Conv::new(
            store,
            init,
            &format!("{}.proj", name),
            channels,
            channels,
            1,
            Conv2dSpec {
                stride: 1,
                padding: 0,
                dilation: 1,
                groups: 1,
            },
            Init::Zeros,
        )?;
        Ok(LocalPath {
            depthwise,
            pointwise,
        })
    }

    pub fn forward<'t>(&self, tape: &'t Tape, store: &ParamStore, x: Var<'t>) -> Result<Var<'t>> {
        let h = self.depthwise.forward(tape, store, x)?;
        self.pointwise.forward(tape, store, h)
    }
}

pub struct Gli {
    norm: Norm,
    pub c_g: usize,
    pub c_l: usize,
    pub global: Option<MdMsa>,
    pub local: Option<LocalPath>,
    /// two-way mixer over (alpha_local, alpha_global); unused (identity)
    /// when a degenerate split leaves a single path
    pub mixer: WomMixer,
}

impl Gli {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        init: &mut Initializer,
        name: &str,
        channels: usize,
        c_g: usize,
        heads: usize,
        kernel: usize,
        md_enabled: bool,
        modulation_bypass: bool,
    ) -> Result<Self> {
        if c_g > channels {
            return Err(ModelError::Config(format!(
                "C_g {} exceeds channel count {}",
                c_g, channels
            )));
        }
        let c_l = channels - c_g;
        let norm = Norm::new(store, &format!("{}.norm", name), channels, 1)?;
        let global = (c_g > 0)
            .then(|| {
                MdMsa::new(
                    store,
                    init,
                    &format!("{}.global", name),
                    c_g,
                    heads,
                    md_enabled,
                    modulation_bypass,
                )
            })
            .transpose()?;
        let local = (c_l > 0)
            .then(|| LocalPath::new(store, init, &format!("{}.local", name), c_l, kernel))
            .transpose()?;
        let mixer = WomMixer::new(store, name, 2)?;
        Ok(Gli {
            norm,
            c_g,
            c_l,
            global,
            local,
            mixer,
        })
    }

    /// Attention over the global channel slice; input and output are NCHW.
    pub fn global_path<'t>(&self, tape: &'t Tape, store: &ParamStore, xg: Var<'t>) -> Result<Var<'t>> {
        let global = self.global.as_ref().expect("global path exists");
        let shape = xg.shape();
        let tokens = global.md_msa_forward(tape, store, xg)?;
        Ok(tokens.tokens_to_nchw(shape[2], shape[3])?)
    }

    pub fn forward<'t>(&self, tape: &'t Tape, store: &ParamStore, x: Var<'t>) -> Result<Var<'t>> {
        let normed = self.norm.forward(tape, store, x)?;
        let branch = match (&self.global, &self.local) {
            (Some(_), Some(local)) => {
                let parts = normed.split(1, &[self.c_g, self.c_l])?;
                let g_out = self.global_path(tape, store, parts[0])?;
                let l_out = local.forward(tape, store, parts[1])?;
                // WOM order: (alpha_local, alpha_global)
                let weights = self.mixer.weights(tape, store)?;
                let w = weights.split(0, &[1, 1])?;
                let g_scaled = g_out.mul(w[1])?;
                let l_scaled = l_out.mul(w[0])?;
                concat(tape, &[g_scaled, l_scaled], 1)?
            }
            // degenerate splits: the lone path passes through unweighted,
            // matching the single-path submodule exactly
            (Some(_), None) => self.global_path(tape, store, normed)?,
            (None, Some(local)) => local.forward(tape, store, normed)?,
            (None, None) => unreachable!("channels >= 1"),
        };
        Ok(branch.add(x)?)
    }
}
