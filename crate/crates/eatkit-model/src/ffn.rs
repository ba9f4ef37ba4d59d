//! Position-wise feed-forward block on token sequences:
//! tokens + fc2(gelu(fc1(norm(tokens)))).

use eatkit_tensor::{ParamStore, Tape, Var};

use crate::error::{ModelError, Result};
use crate::layers::{Init, Initializer, Linear, Norm};

pub struct Ffn {
    norm: Norm,
    fc1: Linear,
    fc2: Linear,
}

impl Ffn {
    pub fn new(
        store: &mut ParamStore,
        init: &mut Initializer,
        name: &str,
        channels: usize,
        expansion: f64,
    ) -> Result<Self> {
        if expansion <= 0.0 {
            return Err(ModelError::Config(format!(
                "FFN expansion must be > 0, got {}",
                expansion
            )));
        }
        let hidden = ((channels as f64 * expansion).round() as usize).max(1);
        let norm = Norm::new(store, &format!("{}.norm", name), channels, 2)?;
        let fc1 = Linear::new(store, init, &format!("{}.fc1", name), channels, hidden, Init::FanIn)?;
        let fc2 = Linear::new(store, init, &format!("{}.fc2", name), hidden, channels, Init::Zeros)?;
        Ok(Ffn { norm, fc1, fc2 })
    }

    /// (N, L, C) -> (N, L, C)
    pub fn forward<'t>(&self, tape: &'t Tape, store: &ParamStore, tokens: Var<'t>) -> Result<Var<'t>> {
        let h = self.norm.forward(tape, store, tokens)?;
        let h = self.fc1.forward(tape, store, h)?.gelu();
        let h = self.fc2.forward(tape, store, h)?;
        Ok(h.add(tokens)?)
    }
}
