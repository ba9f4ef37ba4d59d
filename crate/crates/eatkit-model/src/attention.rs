//! Multi-head self-attention and its modulated-deformable variant.
//!
//! MD-MSA keeps Q from the input tokens but reads K and V from a fine-tuned
//! map: per-position offsets and a modulation scalar are predicted from Q by
//! a zero-initialized projection, the input map is bilinearly resampled at
//! (position + offset) and scaled by sigmoid(modulation). With the offset
//! predictor at zero and modulation bypassed this is bit-for-bit plain MSA,
//! which the reduction tests rely on.

use eatkit_tensor::{concat, ParamStore, Tape, Var};

use crate::error::{ModelError, Result};
use crate::layers::{Init, Initializer, Linear};

pub struct MdMsa {
    channels: usize,
    heads: usize,
    pub f_q: Linear,
    pub f_k: Linear,
    pub f_v: Linear,
    /// zero-initialized: training starts at the plain-MSA point
    pub f_md: Option<Linear>,
    pub out_proj: Linear,
    pub modulation_bypass: bool,
}

impl MdMsa {
    pub fn new(
        store: &mut ParamStore,
        init: &mut Initializer,
        name: &str,
        channels: usize,
        heads: usize,
        md_enabled: bool,
        modulation_bypass: bool,
    ) -> Result<Self> {
        if channels == 0 || heads == 0 || channels % heads != 0 {
            return Err(ModelError::Config(format!(
                "attention needs channels divisible by heads, got {}/{}",
                channels, heads
            )));
        }
        let f_q = Linear::new(store, init, &format!("{}.q", name), channels, channels, Init::FanIn)?;
        let f_k = Linear::new(store, init, &format!("{}.k", name), channels, channels, Init::FanIn)?;
        let f_v = Linear::new(store, init, &format!("{}.v", name), channels, channels, Init::FanIn)?;
        let f_md = md_enabled
            .then(|| Linear::new(store, init, &format!("{}.md", name), channels, 3, Init::Zeros))
            .transpose()?;
        let out_proj = Linear::new(
            store,
            init,
            &format!("{}.proj", name),
            channels,
            channels,
            Init::Zeros,
        )?;
        Ok(MdMsa {
            channels,
            heads,
            f_q,
            f_k,
            f_v,
            f_md,
            out_proj,
            modulation_bypass,
        })
    }

    /// Scaled dot-product attention over prepared Q/K/V token matrices.
    fn attend<'t>(
        &self,
        tape: &'t Tape,
        store: &ParamStore,
        q: Var<'t>,
        k: Var<'t>,
        v: Var<'t>,
    ) -> Result<Var<'t>> {
        let shape = q.shape(); // (N, L, C)
        let (n, l, c) = (shape[0], shape[1], shape[2]);
        let (h, d) = (self.heads, c / self.heads);
        let to_heads = |t: Var<'t>| -> Result<Var<'t>> {
            Ok(t.reshape(vec![n, l, h, d])?.swap_axes(1, 2)?) // (N, h, L, d)
        };
        let (qh, kh, vh) = (to_heads(q)?, to_heads(k)?, to_heads(v)?);
        let scores = qh
            .bmm(kh.transpose_last2()?)?
            .scale(1.0 / (d as f64).sqrt());
        let attn = scores.softmax(3)?;
        let ctx = attn.bmm(vh)?; // (N, h, L, d)
        let merged = ctx.swap_axes(1, 2)?.reshape(vec![n, l, c])?;
        self.out_proj.forward(tape, store, merged)
    }

    /// Plain multi-head self-attention on (N, L, C) tokens: K and V come
    /// straight from the input. Also the reduction reference for MD-MSA.
    pub fn msa_forward<'t>(
        &self,
        tape: &'t Tape,
        store: &ParamStore,
        tokens: Var<'t>,
    ) -> Result<Var<'t>> {
        self.check_tokens(&tokens)?;
        let q = self.f_q.forward(tape, store, tokens)?;
        let k = self.f_k.forward(tape, store, tokens)?;
        let v = self.f_v.forward(tape, store, tokens)?;
        self.attend(tape, store, q, k, v)
    }

    /// MD-MSA on an (N, C, H, W) map; returns (N, L, C) tokens. When the
    /// module was built without an offset predictor this is plain MSA on the
    /// flattened map.
    pub fn md_msa_forward<'t>(
        &self,
        tape: &'t Tape,
        store: &ParamStore,
        x: Var<'t>,
    ) -> Result<Var<'t>> {
        let shape = x.shape();
        if shape.len() != 4 || shape[1] != self.channels {
            return Err(ModelError::Input(format!(
                "expected (N, {}, H, W) map, got {:?}",
                self.channels, shape
            )));
        }
        let tokens = x.nchw_to_tokens()?;
        let Some(f_md) = &self.f_md else {
            return self.msa_forward(tape, store, tokens);
        };

        let q = self.f_q.forward(tape, store, tokens)?;
        // (N, L, 3) -> offsets (dy, dx) and raw modulation
        let md = f_md.forward(tape, store, q)?;
        let parts = md.split(2, &[1, 1, 1])?;
        let offsets = concat(tape, &[parts[0], parts[1]], 2)?;
        let sampled = x.deform_sample(offsets)?;
        let mut xhat = sampled.nchw_to_tokens()?;
        if !self.modulation_bypass {
            let modulation = parts[2].sigmoid(); // (N, L, 1), broadcast over C
            xhat = xhat.mul(modulation)?;
        }
        let k = self.f_k.forward(tape, store, xhat)?;
        let v = self.f_v.forward(tape, store, xhat)?;
        self.attend(tape, store, q, k, v)
    }

    fn check_tokens(&self, tokens: &Var<'_>) -> Result<()> {
        let shape = tokens.shape();
        if shape.len() != 3 || shape[2] != self.channels {
            return Err(ModelError::Input(format!(
                "expected (N, L, {}) tokens, got {:?}",
                self.channels, shape
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use eatkit_tensor::{ParamStore, Tensor};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = shape.iter().product();
        Tensor::new(
            shape.to_vec(),
            (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    }

    fn randomize_all(store: &mut ParamStore, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ids: Vec<_> = store.iter().map(|(id, p)| (id, p.value.shape().to_vec())).collect();
        for (id, shape) in ids {
            let n: usize = shape.iter().product();
            let t = Tensor::new(shape, (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect()).unwrap();
            store.set_value(id, t).unwrap();
        }
    }

    #[test]
    fn single_token_attention_weight_is_one() {
        let mut store = ParamStore::new();
        let mut init = Initializer::new(1);
        let msa = MdMsa::new(&mut store, &mut init, "msa", 4, 2, false, false).unwrap();
        randomize_all(&mut store, 5);
        let tape = Tape::new();
        let x = tape.constant(random(&[1, 1, 4], 2));
        let out = msa.msa_forward(&tape, &store, x).unwrap();
        // single token: softmax over one key is exactly 1, so the output is
        // out_proj(v(x)); check against that composition
        let v = msa.f_v.forward(&tape, &store, x).unwrap();
        let expected = msa.out_proj.forward(&tape, &store, v).unwrap();
        assert!(out.tensor().max_abs_diff(&expected.tensor()) < 1e-14);
    }

    #[test]
    fn identical_tokens_get_identical_rows() {
        let mut store = ParamStore::new();
        let mut init = Initializer::new(2);
        let msa = MdMsa::new(&mut store, &mut init, "msa", 6, 3, false, false).unwrap();
        randomize_all(&mut store, 6);
        let tape = Tape::new();
        let row = random(&[1, 1, 6], 3);
        let mut data = row.data().to_vec();
        data.extend_from_slice(row.data());
        let x = tape.constant(Tensor::new(vec![1, 2, 6], data).unwrap());
        let out = msa.msa_forward(&tape, &store, x).unwrap().tensor();
        let (a, b) = (&out.data()[..6], &out.data()[6..]);
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn token_permutation_equivariance() {
        let mut store = ParamStore::new();
        let mut init = Initializer::new(3);
        let msa = MdMsa::new(&mut store, &mut init, "msa", 4, 1, false, false).unwrap();
        randomize_all(&mut store, 7);
        let tape = Tape::new();
        let x = random(&[1, 5, 4], 11);
        let perm = [3usize, 0, 4, 1, 2];
        let mut permuted = vec![0.0; x.numel()];
        for (dst, &src) in perm.iter().enumerate() {
            permuted[dst * 4..(dst + 1) * 4].copy_from_slice(&x.data()[src * 4..(src + 1) * 4]);
        }
        let out = msa
            .msa_forward(&tape, &store, tape.constant(x.clone()))
            .unwrap()
            .tensor();
        let out_p = msa
            .msa_forward(
                &tape,
                &store,
                tape.constant(Tensor::new(vec![1, 5, 4], permuted).unwrap()),
            )
            .unwrap()
            .tensor();
        for (dst, &src) in perm.iter().enumerate() {
            for c in 0..4 {
                let a = out_p.data()[dst * 4 + c];
                let b = out.data()[src * 4 + c];
                assert!((a - b).abs() < 1e-12, "row {} channel {}", dst, c);
            }
        }
    }

    #[test]
    fn zero_offsets_with_bypass_reduce_to_plain_msa() {
        let mut store = ParamStore::new();
        let mut init = Initializer::new(4);
        let md = MdMsa::new(&mut store, &mut init, "md", 8, 2, true, true).unwrap();
        randomize_all(&mut store, 8);
        // restore the zero offset predictor after randomizing
        store
            .set_value(md.f_md.as_ref().unwrap().weight, Tensor::zeros(vec![3, 8]))
            .unwrap();
        store
            .set_value(md.f_md.as_ref().unwrap().bias, Tensor::zeros(vec![3]))
            .unwrap();
        let tape = Tape::new();
        let x = tape.constant(random(&[2, 8, 3, 3], 9));
        let deformed = md.md_msa_forward(&tape, &store, x).unwrap();
        let plain = md
            .msa_forward(&tape, &store, x.nchw_to_tokens().unwrap())
            .unwrap();
        assert_eq!(
            deformed.tensor(),
            plain.tensor(),
            "bypassed zero-offset MD-MSA must equal MSA bit-for-bit"
        );
    }

    #[test]
    fn zero_offsets_without_bypass_halve_the_kv_map() {
        // sigmoid(0) = 0.5: K and V are computed from 0.5 * X
        let mut store = ParamStore::new();
        let mut init = Initializer::new(5);
        let md = MdMsa::new(&mut store, &mut init, "md", 4, 1, true, false).unwrap();
        randomize_all(&mut store, 10);
        store
            .set_value(md.f_md.as_ref().unwrap().weight, Tensor::zeros(vec![3, 4]))
            .unwrap();
        store
            .set_value(md.f_md.as_ref().unwrap().bias, Tensor::zeros(vec![3]))
            .unwrap();
        let tape = Tape::new();
        let x = tape.constant(random(&[1, 4, 2, 2], 13));
        let out = md.md_msa_forward(&tape, &store, x).unwrap();

        // reference: plain attention but with K, V from the halved tokens
        let tokens = x.nchw_to_tokens().unwrap();
        let halved = tokens.scale(0.5);
        let q = md.f_q.forward(&tape, &store, tokens).unwrap();
        let k = md.f_k.forward(&tape, &store, halved).unwrap();
        let v = md.f_v.forward(&tape, &store, halved).unwrap();
        let expected = md.attend(&tape, &store, q, k, v).unwrap();
        assert!(out.tensor().max_abs_diff(&expected.tensor()) < 1e-12);
    }
}
