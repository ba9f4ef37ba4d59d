//! Weighted Operation Mixing: a softmax over learnable scalars turns N
//! parallel branches into one convex combination. Alphas start at zero so
//! every branch begins with equal weight.

use eatkit_tensor::{ParamId, ParamStore, Tape, Tensor, Var};

use crate::error::{ModelError, Result};

pub struct WomMixer {
    pub alphas: ParamId,
    n: usize,
}

impl WomMixer {
    pub fn new(store: &mut ParamStore, name: &str, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(ModelError::Config("WOM needs at least one branch".into()));
        }
        let alphas = store.register(format!("{}.alphas", name), Tensor::zeros(vec![n]))?;
        Ok(WomMixer { alphas, n })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// softmax(alphas): the mixing weights, differentiable.
    pub fn weights<'t>(&self, tape: &'t Tape, store: &ParamStore) -> Result<Var<'t>> {
        let a = tape.param(store, self.alphas);
        Ok(a.softmax(0)?)
    }

    /// Convex combination of the branches. A single branch passes through
    /// untouched (the singleton softmax weight is exactly 1).
    pub fn mix<'t>(&self, tape: &'t Tape, store: &ParamStore, branches: &[Var<'t>]) -> Result<Var<'t>> {
        if branches.len() != self.n {
            return Err(ModelError::Config(format!(
                "WOM built for {} branches, got {}",
                self.n,
                branches.len()
            )));
        }
        if self.n == 1 {
            return Ok(branches[0]);
        }
        let weights = self.weights(tape, store)?;
        let per_branch = weights.split(0, &vec![1; self.n])?;
        let mut acc: Option<Var<'t>> = None;
        for (w, &b) in per_branch.iter().zip(branches) {
            let scaled = b.mul(*w)?;
            acc = Some(match acc {
                None => scaled,
                Some(acc) => acc.add(scaled)?,
            });
        }
        Ok(acc.expect("n >= 1"))
    }
}

/// Closed-form parameter count of a GLI module as a function of the channel
/// count, global-channel count and local kernel size:
/// 5*C_g^2 + (2 - 2C - k^2)*C_g + (k^2 + 2 + C)*C.
pub fn gli_param_count(c: i64, c_g: i64, k: i64) -> i64 {
    5 * c_g * c_g + (2 - 2 * c - k * k) * c_g + (k * k + 2 + c) * c
}
