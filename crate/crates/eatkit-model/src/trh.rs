//! Task-Related Head: a learnable task token cross-attends (single head)
//! over the flattened final feature map; the attended vector is summed with
//! the global-average-pooled features and mapped to class logits by a
//! zero-initialized linear layer. Attention values are the raw tokens, so a
//! constant feature map passes through the attention unchanged.

use eatkit_tensor::{ParamId, ParamStore, Tape, Tensor, Var};

use crate::error::{ModelError, Result};
use crate::layers::{Init, Initializer, Linear};

pub struct TaskHead {
    channels: usize,
    pub token: ParamId,
    pub query: Linear,
    pub key: Linear,
    pub classifier: Linear,
}

impl TaskHead {
    pub fn new(
        store: &mut ParamStore,
        init: &mut Initializer,
        name: &str,
        channels: usize,
        num_classes: usize,
    ) -> Result<Self> {
        let token = store.register(
            format!("{}.token", name),
            init.tensor(&[channels], Init::FanIn, channels),
        )?;
        let query = Linear::new(store, init, &format!("{}.q", name), channels, channels, Init::FanIn)?;
        let key = Linear::new(store, init, &format!("{}.k", name), channels, channels, Init::FanIn)?;
        let classifier = Linear::new(
            store,
            init,
            &format!("{}.fc", name),
            channels,
            num_classes,
            Init::Zeros,
        )?;
        Ok(TaskHead {
            channels,
            token,
            query,
            key,
            classifier,
        })
    }

    /// (N, C, h, w) features -> (N, num_classes) logits.
    pub fn forward<'t>(&self, tape: &'t Tape, store: &ParamStore, features: Var<'t>) -> Result<Var<'t>> {
        let shape = features.shape();
        if shape.len() != 4 || shape[1] != self.channels {
            return Err(ModelError::Input(format!(
                "expected (N, {}, h, w) features, got {:?}",
                self.channels, shape
            )));
        }
        let n = shape[0];
        let tokens = features.nchw_to_tokens()?; // (N, L, C)
        let keys = self.key.forward(tape, store, tokens)?;

        // scores[n, l] = q . keys[n, l] / sqrt(C): contract the channel axis
        // by using the projected task token as a (1, C) linear weight
        let task = tape.param(store, self.token).reshape(vec![1, self.channels])?;
        let q = self.query.forward(tape, store, task)?; // (1, C)
        let scores = keys
            .linear(q, None)?
            .scale(1.0 / (self.channels as f64).sqrt()); // (N, L, 1)
        let attn = scores.softmax(1)?;
        // attended[n, c] = sum_l attn[n, l] * tokens[n, l, c]
        let attended = attn
            .swap_axes(1, 2)? // (N, 1, L)
            .bmm(tokens)? // (N, 1, C)
            .reshape(vec![n, self.channels])?;

        let pooled = features.mean_pool_spatial()?; // (N, C)
        let fused = attended.add(pooled)?;
        self.classifier.forward(tape, store, fused)
    }
}
