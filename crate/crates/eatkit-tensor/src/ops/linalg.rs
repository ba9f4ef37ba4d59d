//! Matrix products, axis permutations and the linear (fully connected) layer.

use crate::error::{Result, TensorError};
use crate::tape::Var;
use crate::tensor::Tensor;

/// C(M,N) = A(M,K) · B(K,N), plain row-major loops.
pub(crate) fn matmul2(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
    out
}

/// dA(M,K) from grad(M,N) and B(K,N): dA[i,p] = sum_n g[i,n]·B[p,n].
fn matmul_grad_a(g: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * k];
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            let mut s = 0.0;
            for (gv, bv) in grow.iter().zip(brow) {
                s += gv * bv;
            }
            out[i * k + p] = s;
        }
    }
    out
}

/// dB(K,N) from A(M,K) and grad(M,N): dB[p,n] = sum_m A[m,p]·g[m,n].
fn matmul_grad_b(a: &[f64], g: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; k * n];
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, &gv) in orow.iter_mut().zip(grow) {
                *o += aip * gv;
            }
        }
    }
    out
}

fn batch_dims_match(op: &'static str, a: &[usize], b: &[usize]) -> Result<(Vec<usize>, usize)> {
    if a.len() < 2 || b.len() < 2 {
        return Err(TensorError::shape(
            op,
            format!("need rank >= 2 operands, got {:?} and {:?}", a, b),
        ));
    }
    if a.len() != b.len() || a[..a.len() - 2] != b[..b.len() - 2] {
        return Err(TensorError::shape(
            op,
            format!("batch dims differ: {:?} vs {:?}", a, b),
        ));
    }
    let batch: usize = a[..a.len() - 2].iter().product();
    Ok((a[..a.len() - 2].to_vec(), batch))
}

impl<'t> Var<'t> {
    /// 2-D matrix product.
    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>> {
        let (sa, sb) = (self.shape(), other.shape());
        if sa.len() != 2 || sb.len() != 2 {
            return Err(TensorError::shape(
                "matmul",
                format!("expected rank-2 operands, got {:?} and {:?}", sa, sb),
            ));
        }
        self.bmm(other)
    }

    /// Batched matrix product over identical leading dims:
    /// (B..., M, K) · (B..., K, N) -> (B..., M, N).
    pub fn bmm(self, other: Var<'t>) -> Result<Var<'t>> {
        let (a, b) = (self.tensor(), other.tensor());
        let (sa, sb) = (a.shape().to_vec(), b.shape().to_vec());
        let (lead, batch) = batch_dims_match("bmm", &sa, &sb)?;
        let (m, ka) = (sa[sa.len() - 2], sa[sa.len() - 1]);
        let (kb, n) = (sb[sb.len() - 2], sb[sb.len() - 1]);
        if ka != kb {
            return Err(TensorError::shape(
                "bmm",
                format!("inner dims differ: {} (lhs last axis) vs {} (rhs axis {})", ka, kb, sb.len() - 2),
            ));
        }
        let mut out_shape = lead;
        out_shape.extend_from_slice(&[m, n]);
        let mut data = Vec::with_capacity(batch * m * n);
        for t in 0..batch {
            data.extend(matmul2(
                &a.data()[t * m * ka..(t + 1) * m * ka],
                &b.data()[t * kb * n..(t + 1) * kb * n],
                m,
                ka,
                n,
            ));
        }
        let value = Tensor::new(out_shape, data)?;
        let (aid, bid) = (self.id, other.id);
        let k = ka;
        self.tape.push_op(
            value,
            &[self, other],
            "bmm",
            Box::new(move |ctx, grad, needs| {
                let a = ctx.value(aid);
                let b = ctx.value(bid);
                let ga = needs[0].then(|| {
                    let mut data = Vec::with_capacity(batch * m * k);
                    for t in 0..batch {
                        data.extend(matmul_grad_a(
                            &grad.data()[t * m * n..(t + 1) * m * n],
                            &b.data()[t * k * n..(t + 1) * k * n],
                            m,
                            k,
                            n,
                        ));
                    }
                    Tensor::new(a.shape().to_vec(), data).expect("bmm grad a")
                });
                let gb = needs[1].then(|| {
                    let mut data = Vec::with_capacity(batch * k * n);
                    for t in 0..batch {
                        data.extend(matmul_grad_b(
                            &a.data()[t * m * k..(t + 1) * m * k],
                            &grad.data()[t * m * n..(t + 1) * m * n],
                            m,
                            k,
                            n,
                        ));
                    }
                    Tensor::new(b.shape().to_vec(), data).expect("bmm grad b")
                });
                vec![ga, gb]
            }),
        )
    }

    /// Swap two axes, materializing the permuted layout.
    pub fn swap_axes(self, ax0: usize, ax1: usize) -> Result<Var<'t>> {
        let input = self.tensor();
        let rank = input.rank();
        for &ax in &[ax0, ax1] {
            if ax >= rank {
                return Err(TensorError::AxisOutOfRange {
                    op: "swap_axes",
                    axis: ax,
                    rank,
                });
            }
        }
        let value = swap_axes_raw(&input, ax0, ax1);
        self.tape.push_op(
            value,
            &[self],
            "swap_axes",
            Box::new(move |_ctx, grad, _needs| vec![Some(swap_axes_raw(grad, ax0, ax1))]),
        )
    }

    /// Transpose the last two axes (attention convenience).
    pub fn transpose_last2(self) -> Result<Var<'t>> {
        let rank = self.value().rank();
        if rank < 2 {
            return Err(TensorError::shape(
                "transpose_last2",
                format!("rank {} tensor", rank),
            ));
        }
        self.swap_axes(rank - 2, rank - 1)
    }

    /// View with a new shape (same element count, no data movement).
    pub fn reshape(self, shape: impl Into<Vec<usize>>) -> Result<Var<'t>> {
        let value = self.tensor().reshaped(shape)?;
        let in_shape = self.shape();
        self.tape.push_op(
            value,
            &[self],
            "reshape",
            Box::new(move |_ctx, grad, _needs| {
                vec![Some(grad.reshaped(in_shape.clone()).expect("reshape grad"))]
            }),
        )
    }

    /// Last-axis contraction: (..., Cin) · weight(Cout, Cin) + bias -> (..., Cout).
    pub fn linear(self, weight: Var<'t>, bias: Option<Var<'t>>) -> Result<Var<'t>> {
        let x = self.tensor();
        let w = weight.tensor();
        if w.rank() != 2 {
            return Err(TensorError::shape(
                "linear",
                format!("weight must be rank 2 (Cout, Cin), got {:?}", w.shape()),
            ));
        }
        let (c_out, c_in) = (w.shape()[0], w.shape()[1]);
        if x.rank() == 0 || *x.shape().last().unwrap() != c_in {
            return Err(TensorError::shape(
                "linear",
                format!(
                    "input last axis {:?} does not match weight Cin {}",
                    x.shape(),
                    c_in
                ),
            ));
        }
        let b = bias.map(|b| b.tensor());
        if let Some(b) = &b {
            if b.shape() != [c_out] {
                return Err(TensorError::shape(
                    "linear",
                    format!("bias shape {:?} != [{}]", b.shape(), c_out),
                ));
            }
        }
        let rows: usize = x.shape()[..x.rank() - 1].iter().product();
        let mut out = Vec::with_capacity(rows * c_out);
        for r in 0..rows {
            let xrow = &x.data()[r * c_in..(r + 1) * c_in];
            for o in 0..c_out {
                let wrow = &w.data()[o * c_in..(o + 1) * c_in];
                let mut s = match &b {
                    Some(b) => b.data()[o],
                    None => 0.0,
                };
                for (xv, wv) in xrow.iter().zip(wrow) {
                    s += xv * wv;
                }
                out.push(s);
            }
        }
        let mut out_shape = x.shape()[..x.rank() - 1].to_vec();
        out_shape.push(c_out);
        let value = Tensor::new(out_shape, out)?;

        let (xid, wid) = (self.id, weight.id);
        let mut parents = vec![self, weight];
        if let Some(b) = bias {
            parents.push(b);
        }
        let has_bias = bias.is_some();
        self.tape.push_op(
            value,
            &parents,
            "linear",
            Box::new(move |ctx, grad, needs| {
                let x = ctx.value(xid);
                let w = ctx.value(wid);
                let gd = grad.data();
                let gx = needs[0].then(|| {
                    let mut dx = vec![0.0; rows * c_in];
                    for r in 0..rows {
                        let grow = &gd[r * c_out..(r + 1) * c_out];
                        let drow = &mut dx[r * c_in..(r + 1) * c_in];
                        for (o, &g) in grow.iter().enumerate() {
                            if g == 0.0 {
                                continue;
                            }
                            let wrow = &w.data()[o * c_in..(o + 1) * c_in];
                            for (d, &wv) in drow.iter_mut().zip(wrow) {
                                *d += g * wv;
                            }
                        }
                    }
                    Tensor::new(x.shape().to_vec(), dx).expect("linear grad x")
                });
                let gw = needs[1].then(|| {
                    let mut dw = vec![0.0; c_out * c_in];
                    for r in 0..rows {
                        let xrow = &x.data()[r * c_in..(r + 1) * c_in];
                        let grow = &gd[r * c_out..(r + 1) * c_out];
                        for (o, &g) in grow.iter().enumerate() {
                            if g == 0.0 {
                                continue;
                            }
                            let wrow = &mut dw[o * c_in..(o + 1) * c_in];
                            for (d, &xv) in wrow.iter_mut().zip(xrow) {
                                *d += g * xv;
                            }
                        }
                    }
                    Tensor::new(vec![c_out, c_in], dw).expect("linear grad w")
                });
                let mut grads = vec![gx, gw];
                if has_bias {
                    grads.push(needs[2].then(|| {
                        let mut db = vec![0.0; c_out];
                        for r in 0..rows {
                            for (d, &g) in db.iter_mut().zip(&gd[r * c_out..(r + 1) * c_out]) {
                                *d += g;
                            }
                        }
                        Tensor::new(vec![c_out], db).expect("linear grad b")
                    }));
                }
                grads
            }),
        )
    }
}

pub(crate) fn swap_axes_raw(t: &Tensor, ax0: usize, ax1: usize) -> Tensor {
    if ax0 == ax1 {
        return t.clone();
    }
    let in_shape = t.shape();
    let rank = in_shape.len();
    let mut out_shape = in_shape.to_vec();
    out_shape.swap(ax0, ax1);

    // strides of the input, then permuted to out-axis order
    let mut in_strides = vec![1usize; rank];
    for i in (0..rank - 1).rev() {
        in_strides[i] = in_strides[i + 1] * in_shape[i + 1];
    }
    let mut perm_strides = in_strides.clone();
    perm_strides.swap(ax0, ax1);

    let numel = t.numel();
    let mut data = Vec::with_capacity(numel);
    let mut coords = vec![0usize; rank];
    let mut src = 0usize;
    for _ in 0..numel {
        data.push(t.data()[src]);
        for ax in (0..rank).rev() {
            coords[ax] += 1;
            src += perm_strides[ax];
            if coords[ax] < out_shape[ax] {
                break;
            }
            coords[ax] = 0;
            src -= perm_strides[ax] * out_shape[ax];
        }
    }
    Tensor::new(out_shape, data).expect("swap_axes")
}
