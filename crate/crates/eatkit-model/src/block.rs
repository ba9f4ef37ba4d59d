//! The EAT block: MSRA -> GLI -> FFN, each wrapped as y = f(x) + x, all
//! shape-preserving on an NCHW map.

use eatkit_tensor::{ParamStore, Tape, Var};

use crate::config::StageGeometry;
use crate::error::Result;
use crate::ffn::Ffn;
use crate::gli::Gli;
use crate::layers::Initializer;
use crate::msra::{Msra, MsraConfig};
use crate::wom;

pub struct EatBlock {
    pub msra: Msra,
    pub gli: Gli,
    pub ffn: Ffn,
}

impl EatBlock {
    pub fn new(
        store: &mut ParamStore,
        init: &mut Initializer,
        name: &str,
        stage: &StageGeometry,
        kernel: usize,
        dilations: &[usize],
        ffn_expansion: f64,
        md_enabled: bool,
        modulation_bypass: bool,
    ) -> Result<Self> {
        let msra = Msra::new(
            store,
            init,
            &format!("{}.msra", name),
            &MsraConfig::block(stage.channels, kernel, dilations),
        )?;
        let gli = Gli::new(
            store,
            init,
            &format!("{}.gli", name),
            stage.channels,
            stage.c_g,
            stage.heads,
            kernel,
            md_enabled,
            modulation_bypass,
        )?;
        let ffn = Ffn::new(
            store,
            init,
            &format!("{}.ffn", name),
            stage.channels,
            ffn_expansion,
        )?;
        Ok(EatBlock { msra, gli, ffn })
    }

    pub fn forward<'t>(&self, tape: &'t Tape, store: &ParamStore, x: Var<'t>) -> Result<Var<'t>> {
        let shape = x.shape();
        let x = self.msra.forward(tape, store, x)?;
        let x = self.gli.forward(tape, store, x)?;
        let tokens = x.nchw_to_tokens()?;
        let tokens = self.ffn.forward(tape, store, tokens)?;
        Ok(tokens.tokens_to_nchw(shape[2], shape[3])?)
    }

    /// Closed-form GLI parameter count for this block's geometry.
    pub fn gli_formula_params(stage: &StageGeometry, kernel: usize) -> i64 {
        wom::gli_param_count(stage.channels as i64, stage.c_g as i64, kernel as i64)
    }
}
