//! Four-stage hierarchical backbone. The stem is an MSRA at stride 4
//! (stride 2/1 for reduced configs), stages are stacks of EAT blocks, and
//! each stage transition is an MSRA at stride 2 that changes the channel
//! count. No positional embedding anywhere.

use eatkit_tensor::{ParamStore, Tape, Var};

use crate::block::EatBlock;
use crate::config::ValidatedConfig;
use crate::error::{ModelError, Result};
use crate::layers::Initializer;
use crate::msra::{Msra, MsraConfig};

pub struct Backbone {
    stem: Msra,
    stages: Vec<Vec<EatBlock>>,
    transitions: Vec<Msra>,
    total_stride: usize,
}

impl Backbone {
    pub fn new(store: &mut ParamStore, init: &mut Initializer, cfg: &ValidatedConfig) -> Result<Self> {
        let c = &cfg.config;
        let branches = c.msra_dilations.len();
        let stem = Msra::new(
            store,
            init,
            "stem.msra",
            &MsraConfig::downsample(3, c.stage_dims[0], c.stem_stride, c.local_kernel, branches),
        )?;
        let mut stages = Vec::with_capacity(4);
        let mut transitions = Vec::with_capacity(3);
        for (s, stage) in cfg.stages.iter().enumerate() {
            let mut blocks = Vec::with_capacity(stage.depth);
            for b in 0..stage.depth {
                blocks.push(EatBlock::new(
                    store,
                    init,
                    &format!("stage{}.block{}", s + 1, b),
                    stage,
                    c.local_kernel,
                    &c.msra_dilations,
                    c.ffn_expansion,
                    c.md_msa_enabled,
                    c.modulation_bypass,
                )?);
            }
            stages.push(blocks);
            if s < 3 {
                transitions.push(Msra::new(
                    store,
                    init,
                    &format!("transition{}.msra", s + 1),
                    &MsraConfig::downsample(
                        c.stage_dims[s],
                        c.stage_dims[s + 1],
                        2,
                        c.local_kernel,
                        branches,
                    ),
                )?);
            }
        }
        Ok(Backbone {
            stem,
            stages,
            transitions,
            total_stride: c.total_stride(),
        })
    }

    /// (N, 3, H, W) -> (N, C4, H/total_stride, W/total_stride). H and W must
    /// be divisible by the total stride.
    pub fn forward<'t>(&self, tape: &'t Tape, store: &ParamStore, images: Var<'t>) -> Result<Var<'t>> {
        let shape = images.shape();
        if shape.len() != 4 || shape[1] != 3 {
            return Err(ModelError::Input(format!(
                "expected (N, 3, H, W) images, got {:?}",
                shape
            )));
        }
        let (h, w) = (shape[2], shape[3]);
        if h % self.total_stride != 0 || w % self.total_stride != 0 {
            return Err(ModelError::Input(format!(
                "input {}x{} not divisible by the total stride {}",
                h, w, self.total_stride
            )));
        }
        let mut x = self.stem.forward(tape, store, images)?;
        for (s, blocks) in self.stages.iter().enumerate() {
            for block in blocks {
                x = block.forward(tape, store, x)?;
            }
            if s < 3 {
                x = self.transitions[s].forward(tape, store, x)?;
            }
        }
        Ok(x)
    }

    /// Expected (C, H, W) after each stage for a given input size.
    pub fn stage_shapes(cfg: &ValidatedConfig, h: usize, w: usize) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::with_capacity(4);
        let mut stride = cfg.config.stem_stride;
        for stage in &cfg.stages {
            out.push((stage.channels, h / stride, w / stride));
            stride *= 2;
        }
        out
    }
}
