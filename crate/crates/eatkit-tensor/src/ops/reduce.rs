//! Reductions and the classification loss.

use crate::error::{Result, TensorError};
use crate::tape::Var;
use crate::tensor::Tensor;

impl<'t> Var<'t> {
    /// Sum of all elements, as a rank-0 scalar.
    pub fn sum(self) -> Var<'t> {
        let x = self.tensor();
        let total: f64 = x.data().iter().sum();
        let shape = x.shape().to_vec();
        self.tape
            .push_op(
                Tensor::scalar(total),
                &[self],
                "sum",
                Box::new(move |_ctx, grad, _needs| {
                    vec![Some(Tensor::full(shape.clone(), grad.item()))]
                }),
            )
            .expect("sum on own tape")
    }

    /// Mean of all elements, as a rank-0 scalar.
    pub fn mean(self) -> Var<'t> {
        let n = self.value().numel() as f64;
        self.sum().scale(1.0 / n)
    }

    /// NCHW -> NC spatial average.
    pub fn mean_pool_spatial(self) -> Result<Var<'t>> {
        let x = self.tensor();
        if x.rank() != 4 {
            return Err(TensorError::shape(
                "mean_pool_spatial",
                format!("expected NCHW rank 4, got {:?}", x.shape()),
            ));
        }
        let (n, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
        let hw = h * w;
        let mut out = vec![0.0; n * c];
        for i in 0..n * c {
            let s: f64 = x.data()[i * hw..(i + 1) * hw].iter().sum();
            out[i] = s / hw as f64;
        }
        let value = Tensor::new(vec![n, c], out)?;
        self.tape.push_op(
            value,
            &[self],
            "mean_pool_spatial",
            Box::new(move |_ctx, grad, _needs| {
                let mut dx = vec![0.0; n * c * hw];
                for i in 0..n * c {
                    let g = grad.data()[i] / hw as f64;
                    for v in &mut dx[i * hw..(i + 1) * hw] {
                        *v = g;
                    }
                }
                vec![Some(Tensor::new(vec![n, c, h, w], dx).expect("pool grad"))]
            }),
        )
    }

    /// Mean negative log-likelihood of `labels` under softmax of the logits.
    /// Accepts (N, K) logits with N labels, or rank-1 (K,) with one label.
    pub fn cross_entropy(self, labels: &[usize]) -> Result<Var<'t>> {
        let x = self.tensor();
        let (rows, k) = match x.rank() {
            1 => (1, x.shape()[0]),
            2 => (x.shape()[0], x.shape()[1]),
            _ => {
                return Err(TensorError::shape(
                    "cross_entropy",
                    format!("logits must be rank 1 or 2, got {:?}", x.shape()),
                ))
            }
        };
        if labels.len() != rows {
            return Err(TensorError::arg(
                "cross_entropy",
                format!("{} labels for {} logit rows", labels.len(), rows),
            ));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(TensorError::arg(
                "cross_entropy",
                format!("label {} out of range for {} classes", bad, k),
            ));
        }

        let xd = x.data();
        let mut total = 0.0;
        for (r, &label) in labels.iter().enumerate() {
            let row = &xd[r * k..(r + 1) * k];
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = mx + row.iter().map(|v| (v - mx).exp()).sum::<f64>().ln();
            total += lse - row[label];
        }
        let value = Tensor::scalar(total / rows as f64);

        let labels = labels.to_vec();
        let xid = self.id;
        self.tape.push_op(
            value,
            &[self],
            "cross_entropy",
            Box::new(move |ctx, grad, _needs| {
                let x = ctx.value(xid);
                let xd = x.data();
                let scale = grad.item() / rows as f64;
                let mut dx = vec![0.0; xd.len()];
                for (r, &label) in labels.iter().enumerate() {
                    let row = &xd[r * k..(r + 1) * k];
                    let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let sum: f64 = row.iter().map(|v| (v - mx).exp()).sum();
                    for c in 0..k {
                        let p = (row[c] - mx).exp() / sum;
                        dx[r * k + c] = scale * (p - if c == label { 1.0 } else { 0.0 });
                    }
                }
                vec![Some(Tensor::new(x.shape().to_vec(), dx).expect("ce grad"))]
            }),
        )
    }
}
