//! Pointwise ops with numpy-style broadcasting on `add`/`sub`/`mul`.

use super::{broadcast_shape, broadcast_zip, reduce_to_shape};
use crate::error::Result;
use crate::tape::Var;
use crate::tensor::Tensor;

const GELU_SCALE: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_CUBIC: f64 = 0.044_715;

#[derive(Clone, Copy)]
enum BinaryKind {
    Add,
    Sub,
    Mul,
}

/// Forward value of the tanh-form GELU.
pub fn gelu_value(x: f64) -> f64 {
    let u = GELU_SCALE * (x + GELU_CUBIC * x * x * x);
    0.5 * x * (1.0 + u.tanh())
}

/// Exact derivative of `gelu_value`.
pub fn gelu_derivative(x: f64) -> f64 {
    let u = GELU_SCALE * (x + GELU_CUBIC * x * x * x);
    let t = u.tanh();
    let du = GELU_SCALE * (1.0 + 3.0 * GELU_CUBIC * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
}

pub fn sigmoid_value(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl<'t> Var<'t> {
    pub fn add(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary_broadcast(other, "add", |a, b| a + b, BinaryKind::Add)
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary_broadcast(other, "sub", |a, b| a - b, BinaryKind::Sub)
    }

    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary_broadcast(other, "mul", |a, b| a * b, BinaryKind::Mul)
    }

    fn binary_broadcast(
        self,
        other: Var<'t>,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
        kind: BinaryKind,
    ) -> Result<Var<'t>> {
        let (a, b) = (self.tensor(), other.tensor());
        let out_shape = broadcast_shape(op, a.shape(), b.shape())?;
        let value = broadcast_zip(&a, &b, &out_shape, f);
        let (aid, bid) = (self.id, other.id);
        self.tape.push_op(
            value,
            &[self, other],
            op,
            Box::new(move |ctx, grad, needs| {
                let a = ctx.value(aid);
                let b = ctx.value(bid);
                let ga = if needs[0] {
                    Some(match kind {
                        BinaryKind::Add | BinaryKind::Sub => reduce_to_shape(grad, a.shape()),
                        BinaryKind::Mul => {
                            let gb = broadcast_zip(grad, b, grad.shape(), |g, bv| g * bv);
                            reduce_to_shape(&gb, a.shape())
                        }
                    })
                } else {
                    None
                };
                let gb = if needs[1] {
                    Some(match kind {
                        BinaryKind::Add => reduce_to_shape(grad, b.shape()),
                        BinaryKind::Sub => reduce_to_shape(grad, b.shape()).map(|v| -v),
                        BinaryKind::Mul => {
                            let ga = broadcast_zip(grad, a, grad.shape(), |g, av| g * av);
                            reduce_to_shape(&ga, b.shape())
                        }
                    })
                } else {
                    None
                };
                vec![ga, gb]
            }),
        )
    }

    pub fn neg(self) -> Var<'t> {
        self.unary("neg", |x| -x, |_, _| -1.0)
    }

    /// Multiply by a compile-time constant.
    pub fn scale(self, c: f64) -> Var<'t> {
        self.unary("scale", move |x| c * x, move |_, _| c)
    }

    pub fn add_scalar(self, c: f64) -> Var<'t> {
        self.unary("add_scalar", move |x| x + c, |_, _| 1.0)
    }

    pub fn gelu(self) -> Var<'t> {
        self.unary("gelu", gelu_value, |x, _| gelu_derivative(x))
    }

    pub fn sigmoid(self) -> Var<'t> {
        self.unary("sigmoid", sigmoid_value, |_, y| y * (1.0 - y))
    }

    /// Pointwise op defined by value and derivative (as functions of the
    /// input and the output).
    fn unary(
        self,
        op: &'static str,
        f: impl Fn(f64) -> f64 + 'static,
        dfdx: impl Fn(f64, f64) -> f64 + 'static,
    ) -> Var<'t> {
        let value = self.tensor().map(&f);
        let id = self.id;
        self.tape
            .push_op(
                value,
                &[self],
                op,
                Box::new(move |ctx, grad, _needs| {
                    let x = ctx.value(id);
                    let data: Vec<f64> = x
                        .data()
                        .iter()
                        .zip(grad.data().iter())
                        .map(|(&xv, &g)| {
                            // recompute forward for the output-dependent rules
                            g * dfdx(xv, f(xv))
                        })
                        .collect();
                    vec![Some(
                        Tensor::new(x.shape().to_vec(), data).expect("unary grad"),
                    )]
                }),
            )
            .expect("unary op on own tape")
    }
}
