use std::cell::{Cell, Ref, RefCell};
use std::collections::HashMap;

use super::ops::Op;
use super::params::{ParamId, ParamStore};
use super::real::Real;
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub usize);

pub(crate) struct Node<T> {
    pub(crate) op: Op<T>,
    pub(crate) value: Tensor<T>,
    pub(crate) requires_grad: bool,
}

/// Record of every indicator decision taken during a forward pass.
///
/// `signature` folds the outcome of each mask test, `min_margin` is the
/// smallest absolute indicator argument seen. Two evaluations with the same
/// signature took the same branch everywhere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskTrace {
    pub signature: u64,
    pub min_margin: f64,
    pub tests: u64,
}

impl Default for MaskTrace {
    fn default() -> Self {
        Self {
            signature: 0xcbf2_9ce4_8422_2325,
            min_margin: f64::INFINITY,
            tests: 0,
        }
    }
}

impl MaskTrace {
    pub(crate) fn record(&mut self, arg: f64, outcome: bool) {
        self.signature = (self.signature ^ u64::from(outcome) ^ 0x9e).wrapping_mul(0x0100_0000_01b3);
        self.min_margin = self.min_margin.min(arg.abs());
        self.tests += 1;
    }
}

/// Append-only tape of tensor operations.
///
/// A graph is built for one forward pass, differentiated once with
/// [`Graph::backward`] and dropped. It is not `Sync`; independent graphs may
/// live on different threads.
pub struct Graph<T: Real> {
    nodes: RefCell<Vec<Node<T>>>,
    param_nodes: RefCell<HashMap<ParamId, NodeId>>,
    trace: RefCell<Option<MaskTrace>>,
    finite_checks: Cell<bool>,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
            param_nodes: RefCell::new(HashMap::new()),
            trace: RefCell::new(None),
            finite_checks: Cell::new(true),
        }
    }

    /// Starts recording indicator outcomes (see [`MaskTrace`]).
    pub fn with_mask_trace(self) -> Self {
        *self.trace.borrow_mut() = Some(MaskTrace::default());
        self
    }

    /// Disables the non-finite check performed after every op.
    pub fn without_finite_checks(self) -> Self {
        self.finite_checks.set(false);
        self
    }

    pub fn mask_trace(&self) -> Option<MaskTrace> {
        *self.trace.borrow()
    }

    pub(crate) fn tracing(&self) -> bool {
        self.trace.borrow().is_some()
    }

    pub(crate) fn with_trace(&self, f: impl FnOnce(&mut MaskTrace)) {
        if let Some(t) = self.trace.borrow_mut().as_mut() {
            f(t);
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&self, value: Tensor<T>) -> Var<'_, T> {
        self.push_leaf(value, false)
    }

    /// Leaf that receives a gradient but is not tied to a parameter store.
    pub fn variable(&self, value: Tensor<T>) -> Var<'_, T> {
        self.push_leaf(value, true)
    }

    /// Leaf holding the current value of a stored parameter.
    ///
    /// Requesting the same parameter twice returns the same node, so layers
    /// that share a bank accumulate into one gradient.
    pub fn param(&self, store: &ParamStore<T>, id: ParamId) -> Var<'_, T> {
        if let Some(&node) = self.param_nodes.borrow().get(&id) {
            return Var { graph: self, id: node };
        }
        let p = store.get(id);
        let var = self.push_leaf(p.value.clone(), p.trainable);
        self.param_nodes.borrow_mut().insert(id, var.id);
        var
    }

    fn push_leaf(&self, value: Tensor<T>, requires_grad: bool) -> Var<'_, T> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            op: Op::Leaf,
            value,
            requires_grad,
        });
        Var {
            graph: self,
            id: NodeId(nodes.len() - 1),
        }
    }

    pub(crate) fn push(&self, op: Op<T>, value: Tensor<T>) -> Result<Var<'_, T>> {
        if self.finite_checks.get() && !value.all_finite() {
            return Err(Error::NonFinite(op.name()));
        }
        let mut nodes = self.nodes.borrow_mut();
        let requires_grad = op.inputs().iter().any(|i| nodes[i.0].requires_grad);
        nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Ok(Var {
            graph: self,
            id: NodeId(nodes.len() - 1),
        })
    }

    pub fn value(&self, id: NodeId) -> Ref<'_, Tensor<T>> {
        Ref::map(self.nodes.borrow(), |n| &n[id.0].value)
    }

    /// Reverse-mode sweep from a scalar `loss`.
    ///
    /// Nodes are visited once each, newest first. Only leaves that require a
    /// gradient keep one in the result.
    pub fn backward(&self, loss: Var<'_, T>) -> Result<Gradients<T>> {
        let nodes = self.nodes.borrow();
        let root = &nodes[loss.id.0];
        if root.value.len() != 1 {
            return Err(Error::NonScalarLoss(root.value.shape().to_vec()));
        }
        let mut pending: Vec<Option<Tensor<T>>> = (0..=loss.id.0).map(|_| None).collect();
        pending[loss.id.0] = Some(Tensor::full(root.value.shape(), T::one()));
        let mut leaves = HashMap::new();

        for idx in (0..=loss.id.0).rev() {
            let Some(upstream) = pending[idx].take() else {
                continue;
            };
            let node = &nodes[idx];
            if !node.requires_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                leaves.insert(NodeId(idx), upstream);
                continue;
            }
            for (input, grad) in node.op.backward(&nodes, &node.value, &upstream)? {
                if !nodes[input.0].requires_grad {
                    continue;
                }
                match &mut pending[input.0] {
                    Some(acc) => acc.add_scaled(&grad, T::one())?,
                    slot => *slot = Some(grad),
                }
            }
        }

        Ok(Gradients {
            grads: leaves,
            params: self.param_nodes.borrow().clone(),
        })
    }
}

/// Gradients of a scalar with respect to the leaves of one graph.
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    grads: HashMap<NodeId, Tensor<T>>,
    params: HashMap<ParamId, NodeId>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, var: Var<'_, T>) -> Option<&Tensor<T>> {
        self.grads.get(&var.id)
    }

    pub fn node(&self, id: NodeId) -> Option<&Tensor<T>> {
        self.grads.get(&id)
    }

    pub fn param(&self, id: ParamId) -> Option<&Tensor<T>> {
        self.params.get(&id).and_then(|n| self.grads.get(n))
    }

    /// Parameter gradients ordered by parameter id.
    pub fn params(&self) -> Vec<(ParamId, &Tensor<T>)> {
        let mut out: Vec<_> = self
            .params
            .iter()
            .filter_map(|(&p, n)| self.grads.get(n).map(|g| (p, g)))
            .collect();
        out.sort_by_key(|(p, _)| *p);
        out
    }
}

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy)]
pub struct Var<'g, T: Real> {
    pub(crate) graph: &'g Graph<T>,
    pub(crate) id: NodeId,
}

impl<T: Real> std::fmt::Debug for Var<'_, T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.id)
            .field("shape", &self.shape())
            .finish()
    }
}

impl<'g, T: Real> Var<'g, T> {
    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn graph(&self) -> &'g Graph<T> {
        self.graph
    }

    pub fn value(&self) -> Ref<'g, Tensor<T>> {
        self.graph.value(self.id)
    }

    pub fn to_tensor(&self) -> Tensor<T> {
        self.value().clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    pub fn item(&self) -> Result<T> {
        self.value().item()
    }

    pub(crate) fn same_graph(&self, other: &Var<'g, T>) {
        assert!(std::ptr::eq(self.graph, other.graph), "vars belong to different graphs");
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_trace_tracks_margin_and_branches() {
        let run = |x: f64| {
            let g = Graph::<f64>::new().with_mask_trace();
            let v = g.variable(Tensor::vector(vec![x, 2.0]));
            v.relu().unwrap();
            g.mask_trace().unwrap()
        };
        let (a, b, c) = (run(0.3), run(0.1), run(-0.1));
        assert_eq!(a.min_margin, 0.3);
        assert_eq!(a.signature, b.signature);
        assert_ne!(b.signature, c.signature);
        assert!(Graph::<f64>::new().mask_trace().is_none());
    }

    #[test]
    fn param_nodes_are_deduplicated() {
        let mut store = ParamStore::new();
        let id = store.add("w", Tensor::vector(vec![1.0, 2.0]));
        let g = Graph::new();
        let (a, b) = (g.param(&store, id), g.param(&store, id));
        assert_eq!(a.id(), b.id());
        let loss = a.mul(b).unwrap().sum().unwrap();
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.param(id).unwrap().data(), &[2.0, 4.0]);
    }
}
