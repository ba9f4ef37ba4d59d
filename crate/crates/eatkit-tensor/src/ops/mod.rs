//! Differentiable operations. Each op computes its forward value eagerly and
//! records a backward rule on the tape.

pub mod conv;
pub mod elementwise;
pub mod linalg;
pub mod norm;
pub mod reduce;
pub mod sample;
pub mod shape_ops;

use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

/// Right-aligned broadcast shape; each axis pair must be equal or contain a 1.
pub(crate) fn broadcast_shape(op: &'static str, a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i < rank - a.len() { 1 } else { a[i - (rank - a.len())] };
        let db = if i < rank - b.len() { 1 } else { b[i - (rank - b.len())] };
        out[i] = if da == db || db == 1 {
            da
        } else if da == 1 {
            db
        } else {
            return Err(TensorError::shape(
                op,
                format!("cannot broadcast {:?} with {:?} (axis {})", a, b, i),
            ));
        };
    }
    Ok(out)
}

/// Per-output-axis stride into `shape`, 0 where `shape` broadcasts.
fn bcast_strides(shape: &[usize], out: &[usize]) -> Vec<usize> {
    let offset = out.len() - shape.len();
    let mut own = vec![0usize; shape.len()];
    let mut s = 1;
    for i in (0..shape.len()).rev() {
        own[i] = s;
        s *= shape[i];
    }
    let mut strides = vec![0usize; out.len()];
    for i in offset..out.len() {
        if shape[i - offset] != 1 {
            strides[i] = own[i - offset];
        }
    }
    strides
}

/// Elementwise combine with broadcasting.
pub(crate) fn broadcast_zip(
    a: &Tensor,
    b: &Tensor,
    out_shape: &[usize],
    f: impl Fn(f64, f64) -> f64,
) -> Tensor {
    if a.shape() == b.shape() {
        // fast path: same layout
        let data = a
            .data()
            .iter()
            .zip(b.data().iter())
            .map(|(&x, &y)| f(x, y))
            .collect();
        return Tensor::new(out_shape.to_vec(), data).expect("same-shape zip");
    }
    let rank = out_shape.len();
    let sa = bcast_strides(a.shape(), out_shape);
    let sb = bcast_strides(b.shape(), out_shape);
    let numel: usize = out_shape.iter().product();
    let mut data = Vec::with_capacity(numel);
    let mut coords = vec![0usize; rank];
    let (mut ia, mut ib) = (0usize, 0usize);
    let (ad, bd) = (a.data(), b.data());
    for _ in 0..numel {
        data.push(f(ad[ia], bd[ib]));
        for ax in (0..rank).rev() {
            coords[ax] += 1;
            ia += sa[ax];
            ib += sb[ax];
            if coords[ax] < out_shape[ax] {
                break;
            }
            coords[ax] = 0;
            ia -= sa[ax] * out_shape[ax];
            ib -= sb[ax] * out_shape[ax];
        }
    }
    Tensor::new(out_shape.to_vec(), data).expect("broadcast zip")
}

/// Sum `grad` down to `target` shape (inverse of broadcasting).
pub(crate) fn reduce_to_shape(grad: &Tensor, target: &[usize]) -> Tensor {
    if grad.shape() == target {
        return grad.clone();
    }
    let out_shape = grad.shape();
    let rank = out_shape.len();
    let st = bcast_strides(target, out_shape);
    let mut acc = Tensor::zeros(target.to_vec());
    let accd = acc.data_mut();
    let mut coords = vec![0usize; rank];
    let mut it = 0usize;
    for &g in grad.data() {
        accd[it] += g;
        for ax in (0..rank).rev() {
            coords[ax] += 1;
            it += st[ax];
            if coords[ax] < out_shape[ax] {
                break;
            }
            coords[ax] = 0;
            it -= st[ax] * out_shape[ax];
        }
    }
    acc
}
