use std::cell::{Cell, Ref, RefCell};
use std::fmt;

use super::{Real, Tensor};
use crate::error::{Error, Result};

/// Values a backward rule may read.
pub(crate) struct BackwardCtx<'a, T> {
    pub grad: &'a Tensor<T>,
    pub inputs: Vec<&'a Tensor<T>>,
    pub output: &'a Tensor<T>,
}

/// Vector-Jacobian product of one recorded operation. Returns one entry per
/// input; `None` means no gradient flows to that input.
pub(crate) type BackwardFn<T> = Box<dyn Fn(&BackwardCtx<'_, T>) -> Vec<Option<Tensor<T>>>>;

struct Node<T> {
    op: &'static str,
    value: Tensor<T>,
    parents: Vec<usize>,
    backward: Option<BackwardFn<T>>,
    requires_grad: bool,
}

/// Computation graph recorded during one forward pass.
///
/// Nodes are appended in execution order, so parents always precede their
/// children and reverse insertion order is a reverse topological order.
pub struct Tape<T: Real = f64> {
    nodes: RefCell<Vec<Node<T>>>,
    strict: bool,
    flops: Cell<u64>,
    branches: Cell<u64>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> fmt::Debug for Tape<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tape")
            .field("nodes", &self.nodes.borrow().len())
            .field("strict", &self.strict)
            .finish()
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t, T: Real = f64> {
    pub(crate) tape: &'t Tape<T>,
    pub(crate) id: usize,
}

impl<T: Real> fmt::Debug for Var<'_, T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var(#{} {:?})", self.id, self.shape())
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: RefCell::new(Vec::new()), strict: false, flops: Cell::new(0), branches: Cell::new(0xcbf2_9ce4_8422_2325) }
    }

    /// A tape that rejects non-finite operands.
    pub fn strict() -> Self {
        Tape { strict: true, ..Self::new() }
    }

    pub fn is_strict(&self) -> bool {
        self.strict
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Multiply-add count accumulated by the recorded operations.
    pub fn flops(&self) -> u64 {
        self.flops.get()
    }

    /// Hash of every branch taken by piecewise ops (the sign pattern of relu
    /// inputs). Two evaluations with equal signatures lie on the same smooth
    /// piece of the objective.
    pub fn branch_signature(&self) -> u64 {
        self.branches.get()
    }

    pub(crate) fn record_branches(&self, taken: impl Iterator<Item = bool>) {
        let mut h = self.branches.get();
        for b in taken {
            h = (h ^ b as u64).wrapping_mul(0x0100_0000_01b3);
        }
        self.branches.set(h);
    }

    pub(crate) fn add_flops(&self, n: usize) {
        self.flops.set(self.flops.get() + n as u64);
    }

    pub fn leaf(&self, value: Tensor<T>, requires_grad: bool) -> Var<'_, T> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { op: "leaf", value, parents: vec![], backward: None, requires_grad });
        Var { tape: self, id: nodes.len() - 1 }
    }

    pub fn constant(&self, value: Tensor<T>) -> Var<'_, T> {
        self.leaf(value, false)
    }

    pub fn variable(&self, value: Tensor<T>) -> Var<'_, T> {
        self.leaf(value, true)
    }

    pub(crate) fn check_inputs(&self, op: &'static str, inputs: &[Var<'_, T>]) -> Result<()> {
        if self.strict {
            let nodes = self.nodes.borrow();
            for v in inputs {
                if !nodes[v.id].value.all_finite() {
                    return Err(Error::NonFinite { op });
                }
            }
        }
        Ok(())
    }

    pub(crate) fn push(
        &self,
        op: &'static str,
        value: Tensor<T>,
        parents: &[Var<'_, T>],
        backward: BackwardFn<T>,
    ) -> Var<'_, T> {
        let mut nodes = self.nodes.borrow_mut();
        let requires_grad = parents.iter().any(|p| nodes[p.id].requires_grad);
        nodes.push(Node {
            op,
            value,
            parents: parents.iter().map(|p| p.id).collect(),
            backward: if requires_grad { Some(backward) } else { None },
            requires_grad,
        });
        Var { tape: self, id: nodes.len() - 1 }
    }

    pub(crate) fn value(&self, id: usize) -> Ref<'_, Tensor<T>> {
        Ref::map(self.nodes.borrow(), |n| &n[id].value)
    }

    /// Reverse-mode sweep from a scalar `loss`.
    ///
    /// Gradients of intermediate nodes are released as soon as they have
    /// been propagated; leaf gradients are kept in the result.
    pub fn backward(&self, loss: Var<'_, T>) -> Result<Gradients<T>> {
        let nodes = self.nodes.borrow();
        let root = &nodes[loss.id];
        if root.value.len() != 1 {
            return Err(Error::shape(
                "backward",
                format!("loss must be a scalar, got shape {:?}", root.value.shape()),
            ));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..nodes.len()).map(|_| None).collect();
        if !root.requires_grad {
            return Ok(Gradients { grads });
        }
        grads[loss.id] = Some(Tensor::full(root.value.shape(), T::one()));
        for id in (0..=loss.id).rev() {
            let node = &nodes[id];
            let Some(bw) = node.backward.as_ref() else { continue };
            let Some(g) = grads[id].take() else { continue };
            let inputs: Vec<&Tensor<T>> = node.parents.iter().map(|&p| &nodes[p].value).collect();
            let ctx = BackwardCtx { grad: &g, inputs, output: &node.value };
            let parent_grads = bw(&ctx);
            debug_assert_eq!(parent_grads.len(), node.parents.len(), "op {}", node.op);
            for (&p, pg) in node.parents.iter().zip(parent_grads) {
                let Some(pg) = pg else { continue };
                if !nodes[p].requires_grad {
                    continue;
                }
                debug_assert_eq!(pg.shape(), nodes[p].value.shape(), "grad shape of {}", node.op);
                match &mut grads[p] {
                    Some(acc) => acc.add_assign(&pg),
                    slot @ None => *slot = Some(pg),
                }
            }
        }
        Ok(Gradients { grads })
    }
}

/// Leaf gradients produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, v: Var<'_, T>) -> Option<&Tensor<T>> {
        self.grads.get(v.id).and_then(|g| g.as_ref())
    }

    /// Gradient of `v`, or zeros of its shape when nothing reached it.
    pub fn get_or_zeros(&self, v: Var<'_, T>) -> Tensor<T> {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(&v.shape()))
    }
}

impl<'t, T: Real> Var<'t, T> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape<T> {
        self.tape
    }

    pub fn value(&self) -> Ref<'t, Tensor<T>> {
        self.tape.value(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.value(self.id).shape().to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.nodes.borrow()[self.id].requires_grad
    }

    /// Scalar value of a one-element node.
    pub fn item(&self) -> T {
        self.value().item()
    }

    /// Same value recorded as a constant: gradients stop here.
    pub fn detach(&self) -> Var<'t, T> {
        let v = self.value().clone();
        self.tape.constant(v)
    }
}
