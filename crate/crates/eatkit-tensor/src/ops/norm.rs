//! Layer normalization over a chosen axis and numerically stable softmax.

use crate::error::{Result, TensorError};
use crate::tape::Var;
use crate::tensor::Tensor;

/// Decompose a shape around `axis` into (outer, m, inner) extents.
fn around_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer: usize = shape[..axis].iter().product();
    let m = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    (outer, m, inner)
}

impl<'t> Var<'t> {
    /// Normalize to zero mean / unit variance over `axis`, then apply the
    /// per-channel affine `gamma * xhat + beta`.
    pub fn layer_norm(
        self,
        axis: usize,
        gamma: Var<'t>,
        beta: Var<'t>,
        eps: f64,
    ) -> Result<Var<'t>> {
        let x = self.tensor();
        if axis >= x.rank() {
            return Err(TensorError::AxisOutOfRange {
                op: "layer_norm",
                axis,
                rank: x.rank(),
            });
        }
        let (outer, m, inner) = around_axis(x.shape(), axis);
        if m == 0 {
            return Err(TensorError::arg("layer_norm", "zero-length channel axis"));
        }
        if eps <= 0.0 {
            return Err(TensorError::arg("layer_norm", format!("eps must be > 0, got {}", eps)));
        }
        let g = gamma.tensor();
        let b = beta.tensor();
        if g.shape() != [m] || b.shape() != [m] {
            return Err(TensorError::shape(
                "layer_norm",
                format!(
                    "gamma {:?} / beta {:?} must both be [{}] (length of axis {})",
                    g.shape(),
                    b.shape(),
                    m,
                    axis
                ),
            ));
        }

        let xd = x.data();
        let mut out = vec![0.0; xd.len()];
        for o in 0..outer {
            for i in 0..inner {
                let base = o * m * inner + i;
                let mut mean = 0.0;
                for c in 0..m {
                    mean += xd[base + c * inner];
                }
                mean /= m as f64;
                let mut var = 0.0;
                for c in 0..m {
                    let d = xd[base + c * inner] - mean;
                    var += d * d;
                }
                var /= m as f64;
                let inv = 1.0 / (var + eps).sqrt();
                for c in 0..m {
                    let xhat = (xd[base + c * inner] - mean) * inv;
                    out[base + c * inner] = g.data()[c] * xhat + b.data()[c];
                }
            }
        }
        let value = Tensor::new(x.shape().to_vec(), out)?;
        let (xid, gid) = (self.id, gamma.id);
        self.tape.push_op(
            value,
            &[self, gamma, beta],
            "layer_norm",
            Box::new(move |ctx, grad, needs| {
                let x = ctx.value(xid);
                let g = ctx.value(gid);
                let xd = x.data();
                let gd = grad.data();
                let mut dx = needs[0].then(|| vec![0.0; xd.len()]);
                let mut dgamma = vec![0.0; m];
                let mut dbeta = vec![0.0; m];
                for o in 0..outer {
                    for i in 0..inner {
                        let base = o * m * inner + i;
                        let mut mean = 0.0;
                        for c in 0..m {
                            mean += xd[base + c * inner];
                        }
                        mean /= m as f64;
                        let mut var = 0.0;
                        for c in 0..m {
                            let d = xd[base + c * inner] - mean;
                            var += d * d;
                        }
                        var /= m as f64;
                        let inv = 1.0 / (var + eps).sqrt();

                        // a = grad * gamma; dx = (a - mean(a) - xhat*mean(a*xhat)) / sigma
                        let mut mean_a = 0.0;
                        let mut mean_ax = 0.0;
                        for c in 0..m {
                            let xhat = (xd[base + c * inner] - mean) * inv;
                            let gv = gd[base + c * inner];
                            let a = gv * g.data()[c];
                            mean_a += a;
                            mean_ax += a * xhat;
                            dgamma[c] += gv * xhat;
                            dbeta[c] += gv;
                        }
                        mean_a /= m as f64;
                        mean_ax /= m as f64;
                        if let Some(dx) = dx.as_mut() {
                            for c in 0..m {
                                let xhat = (xd[base + c * inner] - mean) * inv;
                                let a = gd[base + c * inner] * g.data()[c];
                                dx[base + c * inner] = (a - mean_a - xhat * mean_ax) * inv;
                            }
                        }
                    }
                }
                vec![
                    dx.map(|dx| Tensor::new(x.shape().to_vec(), dx).expect("ln grad x")),
                    needs[1].then(|| Tensor::new(vec![m], dgamma).expect("ln grad gamma")),
                    needs[2].then(|| Tensor::new(vec![m], dbeta).expect("ln grad beta")),
                ]
            }),
        )
    }

    /// Max-subtracted softmax over `axis`.
    pub fn softmax(self, axis: usize) -> Result<Var<'t>> {
        let x = self.tensor();
        if axis >= x.rank() {
            return Err(TensorError::AxisOutOfRange {
                op: "softmax",
                axis,
                rank: x.rank(),
            });
        }
        let (outer, m, inner) = around_axis(x.shape(), axis);
        let xd = x.data();
        let mut out = vec![0.0; xd.len()];
        for o in 0..outer {
            for i in 0..inner {
                let base = o * m * inner + i;
                let mut mx = f64::NEG_INFINITY;
                for c in 0..m {
                    mx = mx.max(xd[base + c * inner]);
                }
                let mut sum = 0.0;
                for c in 0..m {
                    let e = (xd[base + c * inner] - mx).exp();
                    out[base + c * inner] = e;
                    sum += e;
                }
                for c in 0..m {
                    out[base + c * inner] /= sum;
                }
            }
        }
        let value = Tensor::new(x.shape().to_vec(), out)?;
        let out_id = self.tape.len(); // id the new node will get
        self.tape.push_op(
            value,
            &[self],
            "softmax",
            Box::new(move |ctx, grad, _needs| {
                let y = ctx.value(out_id);
                let yd = y.data();
                let gd = grad.data();
                let mut dx = vec![0.0; yd.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let base = o * m * inner + i;
                        let mut dot = 0.0;
                        for c in 0..m {
                            dot += gd[base + c * inner] * yd[base + c * inner];
                        }
                        for c in 0..m {
                            let idx = base + c * inner;
                            dx[idx] = yd[idx] * (gd[idx] - dot);
                        }
                    }
                }
                vec![Some(Tensor::new(y.shape().to_vec(), dx).expect("softmax grad"))]
            }),
        )
    }
}
