//! Concatenation, channel splitting and NCHW <-> token layout changes.

use crate::error::{Result, TensorError};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Concatenate along `axis`. All other axes must agree.
pub fn concat<'t>(tape: &'t Tape, parts: &[Var<'t>], axis: usize) -> Result<Var<'t>> {
    if parts.is_empty() {
        return Err(TensorError::arg("concat", "no operands"));
    }
    let first = parts[0].tensor();
    let rank = first.rank();
    if axis >= rank {
        return Err(TensorError::AxisOutOfRange {
            op: "concat",
            axis,
            rank,
        });
    }
    let mut axis_sizes = Vec::with_capacity(parts.len());
    for p in parts {
        let s = p.value().shape().to_vec();
        if s.len() != rank
            || s[..axis] != first.shape()[..axis]
            || s[axis + 1..] != first.shape()[axis + 1..]
        {
            return Err(TensorError::shape(
                "concat",
                format!(
                    "operand shape {:?} incompatible with {:?} along axis {}",
                    s,
                    first.shape(),
                    axis
                ),
            ));
        }
        axis_sizes.push(s[axis]);
    }
    let outer: usize = first.shape()[..axis].iter().product();
    let inner: usize = first.shape()[axis + 1..].iter().product();
    let total_axis: usize = axis_sizes.iter().sum();

    let mut out = Vec::with_capacity(outer * total_axis * inner);
    for o in 0..outer {
        for p in parts {
            let t = p.value();
            let m = t.shape()[axis];
            out.extend_from_slice(&t.data()[o * m * inner..(o + 1) * m * inner]);
        }
    }
    let mut out_shape = first.shape().to_vec();
    out_shape[axis] = total_axis;
    let value = Tensor::new(out_shape, out)?;

    let part_shapes: Vec<Vec<usize>> = parts.iter().map(|p| p.value().shape().to_vec()).collect();
    tape.push_op(
        value,
        parts,
        "concat",
        Box::new(move |_ctx, grad, needs| {
            let gd = grad.data();
            let mut grads: Vec<Option<Tensor>> = Vec::with_capacity(part_shapes.len());
            let mut offset = 0;
            for (pi, shape) in part_shapes.iter().enumerate() {
                let m = shape[axis];
                if needs[pi] {
                    let mut dp = Vec::with_capacity(outer * m * inner);
                    for o in 0..outer {
                        let start = o * total_axis * inner + offset * inner;
                        dp.extend_from_slice(&gd[start..start + m * inner]);
                    }
                    grads.push(Some(Tensor::new(shape.clone(), dp).expect("concat grad")));
                } else {
                    grads.push(None);
                }
                offset += m;
            }
            grads
        }),
    )
}

impl<'t> Var<'t> {
    /// Split along `axis` into chunks of the given sizes (must sum to the
    /// axis extent). Zero-sized chunks are allowed and yield empty tensors.
    pub fn split(self, axis: usize, sizes: &[usize]) -> Result<Vec<Var<'t>>> {
        let x = self.tensor();
        let rank = x.rank();
        if axis >= rank {
            return Err(TensorError::AxisOutOfRange {
                op: "split",
                axis,
                rank,
            });
        }
        let m = x.shape()[axis];
        let total: usize = sizes.iter().sum();
        if total != m {
            return Err(TensorError::shape(
                "split",
                format!("chunk sizes {:?} do not sum to axis {} extent {}", sizes, axis, m),
            ));
        }
        let outer: usize = x.shape()[..axis].iter().product();
        let inner: usize = x.shape()[axis + 1..].iter().product();

        let mut outputs = Vec::with_capacity(sizes.len());
        let mut offset = 0usize;
        for &sz in sizes {
            let mut data = Vec::with_capacity(outer * sz * inner);
            for o in 0..outer {
                let start = o * m * inner + offset * inner;
                data.extend_from_slice(&x.data()[start..start + sz * inner]);
            }
            let mut shape = x.shape().to_vec();
            shape[axis] = sz;
            let value = Tensor::new(shape, data)?;
            let in_shape = x.shape().to_vec();
            let this_offset = offset;
            let out = self.tape.push_op(
                value,
                &[self],
                "split",
                Box::new(move |_ctx, grad, _needs| {
                    let mut dx = vec![0.0; outer * m * inner];
                    let gd = grad.data();
                    for o in 0..outer {
                        let dst = o * m * inner + this_offset * inner;
                        let src = o * sz * inner;
                        dx[dst..dst + sz * inner].copy_from_slice(&gd[src..src + sz * inner]);
                    }
                    vec![Some(Tensor::new(in_shape.clone(), dx).expect("split grad"))]
                }),
            )?;
            outputs.push(out);
            offset += sz;
        }
        Ok(outputs)
    }

    /// (N, C, H, W) -> (N, H·W, C) with positions flattened row-major.
    pub fn nchw_to_tokens(self) -> Result<Var<'t>> {
        let x = self.tensor();
        if x.rank() != 4 {
            return Err(TensorError::shape(
                "nchw_to_tokens",
                format!("expected rank 4, got {:?}", x.shape()),
            ));
        }
        let (n, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
        let l = h * w;
        let mut out = vec![0.0; n * l * c];
        let xd = x.data();
        for ni in 0..n {
            for ci in 0..c {
                let src = (ni * c + ci) * l;
                for li in 0..l {
                    out[(ni * l + li) * c + ci] = xd[src + li];
                }
            }
        }
        let value = Tensor::new(vec![n, l, c], out)?;
        self.tape.push_op(
            value,
            &[self],
            "nchw_to_tokens",
            Box::new(move |_ctx, grad, _needs| {
                let gd = grad.data();
                let mut dx = vec![0.0; n * c * l];
                for ni in 0..n {
                    for ci in 0..c {
                        let dst = (ni * c + ci) * l;
                        for li in 0..l {
                            dx[dst + li] = gd[(ni * l + li) * c + ci];
                        }
                    }
                }
                vec![Some(Tensor::new(vec![n, c, h, w], dx).expect("tokens grad"))]
            }),
        )
    }

    /// (N, H·W, C) -> (N, C, H, W); `h * w` must equal the token count.
    pub fn tokens_to_nchw(self, h: usize, w: usize) -> Result<Var<'t>> {
        let x = self.tensor();
        if x.rank() != 3 || x.shape()[1] != h * w {
            return Err(TensorError::shape(
                "tokens_to_nchw",
                format!("expected (N, {}, C) tokens, got {:?}", h * w, x.shape()),
            ));
        }
        let (n, l, c) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let mut out = vec![0.0; n * c * l];
        let xd = x.data();
        for ni in 0..n {
            for li in 0..l {
                for ci in 0..c {
                    out[(ni * c + ci) * l + li] = xd[(ni * l + li) * c + ci];
                }
            }
        }
        let value = Tensor::new(vec![n, c, h, w], out)?;
        self.tape.push_op(
            value,
            &[self],
            "tokens_to_nchw",
            Box::new(move |_ctx, grad, _needs| {
                let gd = grad.data();
                let mut dx = vec![0.0; n * l * c];
                for ni in 0..n {
                    for li in 0..l {
                        for ci in 0..c {
                            dx[(ni * l + li) * c + ci] = gd[(ni * c + ci) * l + li];
                        }
                    }
                }
                vec![Some(Tensor::new(vec![n, l, c], dx).expect("nchw grad"))]
            }),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concat_then_split_round_trips() {
        let tape = Tape::new();
        let a = tape.watch(Tensor::new(vec![1, 2, 1, 1], vec![1.0, 2.0]).unwrap());
        let b = tape.watch(Tensor::new(vec![1, 3, 1, 1], vec![3.0, 4.0, 5.0]).unwrap());
        let joined = concat(&tape, &[a, b], 1).unwrap();
        assert_eq!(joined.tensor().data(), &[1.0, 2.0, 3.0, 4.0, 5.0]);
        let parts = joined.split(1, &[2, 3]).unwrap();
        assert_eq!(parts[0].tensor(), a.tensor());
        assert_eq!(parts[1].tensor(), b.tensor());
    }

    #[test]
    fn split_gradient_scatters_into_slice() {
        let tape = Tape::new();
        let x = tape.watch(Tensor::from_slice(&[1.0, 2.0, 3.0]));
        let parts = x.split(0, &[1, 2]).unwrap();
        let loss = parts[1].sum();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.wrt(x).unwrap().data(), &[0.0, 1.0, 1.0]);
    }

    #[test]
    fn token_layout_round_trip() {
        let tape = Tape::new();
        let x = tape.watch(Tensor::new(vec![1, 2, 2, 2], (0..8).map(|v| v as f64).collect()).unwrap());
        let tokens = x.nchw_to_tokens().unwrap();
        assert_eq!(tokens.shape(), vec![1, 4, 2]);
        // token 0 holds channel values at position (0,0): 0 and 4
        assert_eq!(tokens.tensor().data()[..2], [0.0, 4.0]);
        let back = tokens.tokens_to_nchw(2, 2).unwrap();
        assert_eq!(back.tensor(), x.tensor());
    }
}
