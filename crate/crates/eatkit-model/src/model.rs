//! Backbone + task head assembly, parameter registration and the training
//! loss surface.

use eatkit_tensor::{ParamStore, Tape, Var};

use crate::backbone::Backbone;
use crate::config::{ModelConfig, ValidatedConfig};
use crate::error::Result;
use crate::layers::Initializer;
use crate::trh::TaskHead;

pub struct Model {
    pub validated: ValidatedConfig,
    pub backbone: Backbone,
    pub head: TaskHead,
}

impl Model {
    /// Validate the config and register every parameter. Initialization
    /// draws from the `init` sub-stream of `seed` in construction order.
    pub fn build(config: &ModelConfig, seed: u64, store: &mut ParamStore) -> Result<Model> {
        let validated = config.validate()?;
        let mut init = Initializer::new(seed);
        let backbone = Backbone::new(store, &mut init, &validated)?;
        let head = TaskHead::new(
            store,
            &mut init,
            "trh",
            config.stage_dims[3],
            config.num_classes,
        )?;
        Ok(Model {
            validated,
            backbone,
            head,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.validated.config
    }

    /// (N, 3, H, W) -> (N, num_classes)
    pub fn forward_logits<'t>(
        &self,
        tape: &'t Tape,
        store: &ParamStore,
        images: Var<'t>,
    ) -> Result<Var<'t>> {
        let features = self.backbone.forward(tape, store, images)?;
        self.head.forward(tape, store, features)
    }

    /// Mean cross-entropy over the batch; returns (logits, loss).
    pub fn loss<'t>(
        &self,
        tape: &'t Tape,
        store: &ParamStore,
        images: Var<'t>,
        labels: &[usize],
    ) -> Result<(Var<'t>, Var<'t>)> {
        let logits = self.forward_logits(tape, store, images)?;
        let loss = logits.cross_entropy(labels)?;
        Ok((logits, loss))
    }
}

/// Argmax with lowest-index tie-break, one prediction per logit row.
pub fn predict_labels(logits: &eatkit_tensor::Tensor) -> Vec<usize> {
    let shape = logits.shape();
    debug_assert_eq!(shape.len(), 2);
    let (n, k) = (shape[0], shape[1]);
    (0..n)
        .map(|r| {
            let row = &logits.data()[r * k..(r + 1) * k];
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ModelConfig;
    use eatkit_tensor::Tensor;

    #[test]
    fn argmax_breaks_ties_toward_the_lowest_index() {
        let logits = Tensor::new(vec![3, 3], vec![
            0.0, 0.0, 0.0, // tie -> 0
            1.0, 2.0, 2.0, // tie between 1 and 2 -> 1
            -1.0, -3.0, 0.5,
        ])
        .unwrap();
        assert_eq!(predict_labels(&logits), vec![0, 1, 2]);
    }

    #[test]
    fn parameter_names_are_unique_and_follow_the_scheme() {
        let mut store = ParamStore::new();
        let model = Model::build(&ModelConfig::micro(3), 7, &mut store).unwrap();
        // uniqueness is enforced by the store; check the census is complete
        // and the naming contract holds
        assert!(store.len() > 0);
        let mut stage_params = 0;
        for (_, p) in store.iter() {
            let name = &p.name;
            assert!(
                name.starts_with("stem.")
                    || name.starts_with("stage")
                    || name.starts_with("transition")
                    || name.starts_with("trh."),
                "unexpected parameter name {}",
                name
            );
            if name.starts_with("stage") {
                stage_params += 1;
                let rest = name.split('.').nth(1).unwrap();
                assert!(rest.starts_with("block"), "{}", name);
                let module = name.split('.').nth(2).unwrap();
                assert!(
                    ["msra", "gli", "ffn"].contains(&module),
                    "stage parameter outside msra/gli/ffn: {}",
                    name
                );
            }
        }
        assert!(stage_params > 0);
        drop(model);
    }

    #[test]
    fn two_images_give_different_logits_after_aging_the_classifier() {
        let mut store = ParamStore::new();
        let model = Model::build(&ModelConfig::micro(2), 1, &mut store).unwrap();
        // the classifier starts at zero; nudge it so logits depend on input
        let shape = store.value(model.head.classifier.weight).shape().to_vec();
        let n: usize = shape.iter().product();
        store
            .set_value(
                model.head.classifier.weight,
                Tensor::new(shape, (0..n).map(|i| ((i * 37 % 11) as f64 - 5.0) * 0.1).collect())
                    .unwrap(),
            )
            .unwrap();
        let tape = Tape::new();
        let a = tape.constant(Tensor::full(vec![1, 3, 32, 32], 0.2));
        let mut bump = Tensor::full(vec![1, 3, 32, 32], 0.2);
        for i in 0..200 {
            bump.data_mut()[i] = 0.9;
        }
        let b = tape.constant(bump);
        let la = model.forward_logits(&tape, &store, a).unwrap().tensor();
        let lb = model.forward_logits(&tape, &store, b).unwrap().tensor();
        assert_ne!(la, lb);
    }
}
