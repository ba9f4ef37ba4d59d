//! 2-D convolution (NCHW input, OIHW weight) with stride, zero padding,
//! dilation and groups.

use crate::error::{Result, TensorError};
use crate::tape::Var;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
pub struct Conv2dSpec {
    pub stride: usize,
    pub padding: usize,
    pub dilation: usize,
    pub groups: usize,
}

impl Conv2dSpec {
    pub fn out_extent(&self, input: usize, kernel: usize) -> Option<usize> {
        let span = self.dilation * (kernel - 1) + 1;
        let padded = input + 2 * self.padding;
        if padded < span {
            return None;
        }
        Some((padded - span) / self.stride + 1)
    }
}

impl<'t> Var<'t> {
    pub fn conv2d(
        self,
        weight: Var<'t>,
        bias: Option<Var<'t>>,
        spec: Conv2dSpec,
    ) -> Result<Var<'t>> {
        let x = self.tensor();
        let w = weight.tensor();
        if x.rank() != 4 {
            return Err(TensorError::shape(
                "conv2d",
                format!("input must be NCHW rank 4, got {:?}", x.shape()),
            ));
        }
        if w.rank() != 4 {
            return Err(TensorError::shape(
                "conv2d",
                format!("weight must be OIHW rank 4, got {:?}", w.shape()),
            ));
        }
        if spec.stride < 1 || spec.dilation < 1 || spec.groups < 1 {
            return Err(TensorError::arg(
                "conv2d",
                format!(
                    "stride/dilation/groups must be >= 1, got {}/{}/{}",
                    spec.stride, spec.dilation, spec.groups
                ),
            ));
        }
        let (n, c_in, h, wid) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
        let (c_out, c_in_g, kh, kw) = (w.shape()[0], w.shape()[1], w.shape()[2], w.shape()[3]);
        if c_in % spec.groups != 0 {
            return Err(TensorError::shape(
                "conv2d",
                format!(
                    "input channel axis ({}) not divisible by groups ({})",
                    c_in, spec.groups
                ),
            ));
        }
        if c_out % spec.groups != 0 {
            return Err(TensorError::shape(
                "conv2d",
                format!(
                    "output channel axis ({}) not divisible by groups ({})",
                    c_out, spec.groups
                ),
            ));
        }
        if c_in_g != c_in / spec.groups {
            return Err(TensorError::shape(
                "conv2d",
                format!(
                    "weight input-channel axis is {}, expected {} (= {} channels / {} groups)",
                    c_in_g,
                    c_in / spec.groups,
                    c_in,
                    spec.groups
                ),
            ));
        }
        let (oh, ow) = match (spec.out_extent(h, kh), spec.out_extent(wid, kw)) {
            (Some(oh), Some(ow)) if oh > 0 && ow > 0 => (oh, ow),
            _ => {
                return Err(TensorError::shape(
                    "conv2d",
                    format!(
                        "kernel {}x{} (dilation {}) does not fit input {}x{} with padding {}",
                        kh, kw, spec.dilation, h, wid, spec.padding
                    ),
                ))
            }
        };
        let b = bias.map(|b| b.tensor());
        if let Some(b) = &b {
            if b.shape() != [c_out] {
                return Err(TensorError::shape(
                    "conv2d",
                    format!("bias shape {:?} != [{}] (output channel axis)", b.shape(), c_out),
                ));
            }
        }

        let value = conv2d_forward(&x, &w, b.as_ref(), spec, (n, c_in, h, wid), (c_out, c_in_g, kh, kw), (oh, ow));

        let (xid, wid_) = (self.id, weight.id);
        let mut parents = vec![self, weight];
        if let Some(b) = bias {
            parents.push(b);
        }
        let has_bias = bias.is_some();
        self.tape.push_op(
            value,
            &parents,
            "conv2d",
            Box::new(move |ctx, grad, needs| {
                let x = ctx.value(xid);
                let w = ctx.value(wid_);
                let (gx, gw, gb) = conv2d_backward(
                    x,
                    w,
                    grad,
                    spec,
                    (n, c_in, h, wid),
                    (c_out, c_in_g, kh, kw),
                    (oh, ow),
                    (needs[0], needs[1], has_bias && needs[2]),
                );
                let mut grads = vec![gx, gw];
                if has_bias {
                    grads.push(gb);
                }
                grads
            }),
        )
    }
}

#[allow(clippy::too_many_arguments)]
fn conv2d_forward(
    x: &Tensor,
    w: &Tensor,
    b: Option<&Tensor>,
    spec: Conv2dSpec,
    (n, c_in, h, wid): (usize, usize, usize, usize),
    (c_out, c_in_g, kh, kw): (usize, usize, usize, usize),
    (oh, ow): (usize, usize),
) -> Tensor {
    let groups = spec.groups;
    let oc_per_g = c_out / groups;
    let xd = x.data();
    let wd = w.data();
    let mut out = vec![0.0; n * c_out * oh * ow];
    for ni in 0..n {
        for g in 0..groups {
            for ocg in 0..oc_per_g {
                let oc = g * oc_per_g + ocg;
                let base_out = ((ni * c_out) + oc) * oh * ow;
                let bias = b.map_or(0.0, |b| b.data()[oc]);
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = bias;
                        for icg in 0..c_in_g {
                            let ic = g * c_in_g + icg;
                            let base_in = ((ni * c_in) + ic) * h * wid;
                            let base_w = ((oc * c_in_g) + icg) * kh * kw;
                            for ky in 0..kh {
                                let iy = (oy * spec.stride + ky * spec.dilation) as isize
                                    - spec.padding as isize;
                                if iy < 0 || iy >= h as isize {
                                    continue;
                                }
                                for kx in 0..kw {
                                    let ix = (ox * spec.stride + kx * spec.dilation) as isize
                                        - spec.padding as isize;
                                    if ix < 0 || ix >= wid as isize {
                                        continue;
                                    }
                                    acc += xd[base_in + iy as usize * wid + ix as usize]
                                        * wd[base_w + ky * kw + kx];
                                }
                            }
                        }
                        out[base_out + oy * ow + ox] = acc;
                    }
                }
            }
        }
    }
    Tensor::new(vec![n, c_out, oh, ow], out).expect("conv2d forward")
}

#[allow(clippy::too_many_arguments)]
fn conv2d_backward(
    x: &Tensor,
    w: &Tensor,
    grad: &Tensor,
    spec: Conv2dSpec,
    (n, c_in, h, wid): (usize, usize, usize, usize),
    (c_out, c_in_g, kh, kw): (usize, usize, usize, usize),
    (oh, ow): (usize, usize),
    (need_x, need_w, need_b): (bool, bool, bool),
) -> (Option<Tensor>, Option<Tensor>, Option<Tensor>) {
    let groups = spec.groups;
    let oc_per_g = c_out / groups;
    let xd = x.data();
    let wd = w.data();
    let gd = grad.data();
    let mut dx = if need_x { vec![0.0; xd.len()] } else { vec![] };
    let mut dw = if need_w { vec![0.0; wd.len()] } else { vec![] };
    let mut db = if need_b { vec![0.0; c_out] } else { vec![] };
    for ni in 0..n {
        for g in 0..groups {
            for ocg in 0..oc_per_g {
                let oc = g * oc_per_g + ocg;
                let base_out = ((ni * c_out) + oc) * oh * ow;
                for oy in 0..oh {
                    for ox in 0..ow {
                        let go = gd[base_out + oy * ow + ox];
                        if go == 0.0 {
                            continue;
                        }
                        if need_b {
                            db[oc] += go;
                        }
                        if !(need_x || need_w) {
                            continue;
                        }
                        for icg in 0..c_in_g {
                            let ic = g * c_in_g + icg;
                            let base_in = ((ni * c_in) + ic) * h * wid;
                            let base_w = ((oc * c_in_g) + icg) * kh * kw;
                            for ky in 0..kh {
                                let iy = (oy * spec.stride + ky * spec.dilation) as isize
                                    - spec.padding as isize;
                                if iy < 0 || iy >= h as isize {
                                    continue;
                                }
                                for kx in 0..kw {
                                    let ix = (ox * spec.stride + kx * spec.dilation) as isize
                                        - spec.padding as isize;
                                    if ix < 0 || ix >= wid as isize {
                                        continue;
                                    }
                                    let xi = base_in + iy as usize * wid + ix as usize;
                                    let wi = base_w + ky * kw + kx;
                                    if need_x {
                                        dx[xi] += go * wd[wi];
                                    }
                                    if need_w {
                                        dw[wi] += go * xd[xi];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    (
        need_x.then(|| Tensor::new(x.shape().to_vec(), dx).expect("conv2d grad x")),
        need_w.then(|| Tensor::new(w.shape().to_vec(), dw).expect("conv2d grad w")),
        need_b.then(|| Tensor::new(vec![c_out], db).expect("conv2d grad b")),
    )
}
