//! Tape-based reverse-mode automatic differentiation.
//!
//! A `Tape` is an append-only record of operations. Every op pushes one node
//! holding its forward value, the ids of its parents and a backward rule that
//! turns the node's output gradient into parent gradients. Insertion order is
//! a topological order by construction, so one reverse sweep computes all
//! gradients. A tape is single-threaded; independent tapes may run in
//! parallel.

use std::cell::{Ref, RefCell};
use std::collections::BTreeMap;

use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

/// Read access to forward values while a backward rule runs.
pub struct ValueCtx<'a> {
    nodes: &'a [Node],
}

impl<'a> ValueCtx<'a> {
    pub fn value(&self, id: usize) -> &Tensor {
        &self.nodes[id].value
    }
}

/// Backward rule: (forward values, gradient of this node, which parents need
/// gradients) -> one optional gradient per parent, in parent order.
pub type BackwardFn = Box<dyn Fn(&ValueCtx<'_>, &Tensor, &[bool]) -> Vec<Option<Tensor>>>;

struct Node {
    value: Tensor,
    parents: Vec<usize>,
    backward: Option<BackwardFn>,
    requires_grad: bool,
    op: &'static str,
    param: Option<ParamId>,
}

pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// A value recorded on a tape. Copyable handle; the data lives in the tape.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    pub(crate) tape: &'t Tape,
    pub(crate) id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var(id={}, shape={:?})", self.id, self.value().shape())
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    fn push(
        &self,
        value: Tensor,
        parents: Vec<usize>,
        backward: Option<BackwardFn>,
        requires_grad: bool,
        op: &'static str,
        param: Option<ParamId>,
    ) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len();
        nodes.push(Node {
            value,
            parents,
            backward,
            requires_grad,
            op,
            param,
        });
        Var { tape: self, id }
    }

    /// Record a leaf. Gradient tracking follows the tensor's `requires_grad`.
    pub fn leaf(&self, value: Tensor) -> Var<'_> {
        let rg = value.requires_grad();
        self.push(value, vec![], None, rg, "leaf", None)
    }

    /// Record a leaf that always tracks gradients.
    pub fn watch(&self, value: Tensor) -> Var<'_> {
        self.push(value, vec![], None, true, "leaf", None)
    }

    /// Record a leaf that never tracks gradients (detached input).
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value, vec![], None, false, "const", None)
    }

    /// Bind a stored parameter as a gradient-tracking leaf.
    pub fn param(&self, store: &ParamStore, id: ParamId) -> Var<'_> {
        self.push(
            store.value(id).clone(),
            vec![],
            None,
            true,
            "param",
            Some(id),
        )
    }

    /// Record an op node. Used by every built-in op and open for custom ops.
    pub fn push_op(
        &self,
        value: Tensor,
        parents: &[Var<'_>],
        op: &'static str,
        backward: BackwardFn,
    ) -> Result<Var<'_>> {
        let mut requires_grad = false;
        let mut ids = Vec::with_capacity(parents.len());
        for p in parents {
            if !std::ptr::eq(p.tape, self) {
                return Err(TensorError::TapeMismatch);
            }
            ids.push(p.id);
            requires_grad |= self.nodes.borrow()[p.id].requires_grad;
        }
        Ok(self.push(value, ids, Some(backward), requires_grad, op, None))
    }

    pub fn value(&self, id: usize) -> Ref<'_, Tensor> {
        Ref::map(self.nodes.borrow(), |nodes| &nodes[id].value)
    }

    pub fn op_name(&self, id: usize) -> &'static str {
        self.nodes.borrow()[id].op
    }

    /// Reverse sweep from a scalar loss. Gradients of all tracked leaves are
    /// collected; repeated leaves of the same parameter accumulate additively.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        if !std::ptr::eq(loss.tape, self) {
            return Err(TensorError::TapeMismatch);
        }
        let nodes = self.nodes.borrow();
        let loss_node = &nodes[loss.id];
        if !loss_node.value.is_scalar() {
            return Err(TensorError::NonScalarLoss {
                shape: loss_node.value.shape().to_vec(),
            });
        }

        let mut grads: Vec<Option<Tensor>> = (0..nodes.len()).map(|_| None).collect();
        grads[loss.id] = Some(Tensor::scalar(1.0));

        let ctx = ValueCtx { nodes: &nodes };
        let mut leaf_grads: Vec<Option<Tensor>> = (0..nodes.len()).map(|_| None).collect();

        for id in (0..=loss.id).rev() {
            let Some(grad) = grads[id].take() else {
                continue;
            };
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            match &node.backward {
                None => leaf_grads[id] = Some(grad),
                Some(rule) => {
                    let needs: Vec<bool> = node
                        .parents
                        .iter()
                        .map(|&p| nodes[p].requires_grad)
                        .collect();
                    let parent_grads = rule(&ctx, &grad, &needs);
                    debug_assert_eq!(parent_grads.len(), node.parents.len());
                    for (slot, pg) in node.parents.iter().zip(parent_grads) {
                        let (slot, pg) = (*slot, match pg {
                            Some(pg) => pg,
                            None => continue,
                        });
                        if !nodes[slot].requires_grad {
                            continue;
                        }
                        debug_assert_eq!(
                            pg.shape(),
                            nodes[slot].value.shape(),
                            "gradient shape mismatch from op `{}` into `{}`",
                            node.op,
                            nodes[slot].op
                        );
                        match &mut grads[slot] {
                            Some(acc) => acc.add_assign(&pg)?,
                            empty => *empty = Some(pg),
                        }
                    }
                }
            }
        }

        // Parameter gradients keyed by ParamId, summed over repeated bindings
        // in node order (deterministic).
        let mut param_grads: BTreeMap<ParamId, Tensor> = BTreeMap::new();
        for (id, g) in leaf_grads.iter().enumerate() {
            if let (Some(pid), Some(g)) = (nodes[id].param, g) {
                match param_grads.get_mut(&pid) {
                    Some(acc) => acc.add_assign(g)?,
                    None => {
                        param_grads.insert(pid, g.clone());
                    }
                }
            }
        }

        Ok(Gradients {
            leaf_grads,
            param_grads,
        })
    }
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    /// Borrow the forward value.
    pub fn value(&self) -> Ref<'t, Tensor> {
        Ref::map(self.tape.nodes.borrow(), |nodes| &nodes[self.id].value)
    }

    /// Clone the forward value out of the tape.
    pub fn tensor(&self) -> Tensor {
        self.value().clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    pub fn item(&self) -> f64 {
        self.value().item()
    }
}

/// Result of a backward pass: gradients for every tracked leaf.
#[derive(Debug)]
pub struct Gradients {
    leaf_grads: Vec<Option<Tensor>>,
    param_grads: BTreeMap<ParamId, Tensor>,
}

impl Gradients {
    /// Gradient w.r.t. a leaf var, if any reached it. Detached subgraphs get
    /// none; `wrt_or_zeros` reports those as zero.
    pub fn wrt(&self, var: Var<'_>) -> Option<&Tensor> {
        self.leaf_grads.get(var.id).and_then(|g| g.as_ref())
    }

    pub fn wrt_or_zeros(&self, var: Var<'_>) -> Tensor {
        match self.wrt(var) {
            Some(g) => g.clone(),
            None => Tensor::zeros(var.shape()),
        }
    }

    pub fn param(&self, id: ParamId) -> Option<&Tensor> {
        self.param_grads.get(&id)
    }

    /// Add this pass's parameter gradients into the store (grads accumulate
    /// across calls until `zero_grads`).
    pub fn accumulate_into(&self, store: &mut ParamStore) -> Result<()> {
        for (pid, g) in &self.param_grads {
            store.params[pid.0].grad.add_assign(g)?;
        }
        Ok(())
    }
}

/// Stable handle to a parameter in a `ParamStore`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(usize);

/// A named learnable tensor plus its accumulated gradient.
#[derive(Clone, Debug)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
}

/// Owns every parameter of a model. Names are unique; insertion order is the
/// optimizer order, lexicographic order is the checkpoint order.
#[derive(Default)]
pub struct ParamStore {
    params: Vec<Parameter>,
    index: BTreeMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: impl Into<String>, value: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(TensorError::DuplicateParameter(name));
        }
        let grad = Tensor::zeros(value.shape().to_vec());
        let id = self.params.len();
        self.index.insert(name.clone(), id);
        self.params.push(Parameter {
            name,
            value: value.with_grad(),
            grad,
        });
        Ok(ParamId(id))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].grad
    }

    pub fn set_value(&mut self, id: ParamId, value: Tensor) -> Result<()> {
        if value.shape() != self.params[id.0].value.shape() {
            return Err(TensorError::shape(
                "ParamStore::set_value",
                format!(
                    "parameter `{}` has shape {:?}, got {:?}",
                    self.params[id.0].name,
                    self.params[id.0].value.shape(),
                    value.shape()
                ),
            ));
        }
        self.params[id.0].value = value.with_grad();
        Ok(())
    }

    pub fn nudge(&mut self, id: ParamId, flat_index: usize, delta: f64) {
        self.params[id.0].value.data_mut()[flat_index] += delta;
    }

    pub fn id_of(&self, name: &str) -> Result<ParamId> {
        self.index
            .get(name)
            .map(|&i| ParamId(i))
            .ok_or_else(|| TensorError::UnknownParameter(name.to_string()))
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad = Tensor::zeros(p.value.shape().to_vec());
        }
    }

    /// Insertion order (stable optimizer order).
    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    /// Lexicographic name order (checkpoint order).
    pub fn iter_sorted(&self) -> impl Iterator<Item = (ParamId, &Parameter)> {
        self.index.values().map(|&i| (ParamId(i), &self.params[i]))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (ParamId, &mut Parameter)> {
        self.params
            .iter_mut()
            .enumerate()
            .map(|(i, p)| (ParamId(i), p))
    }

    pub fn total_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }
}
