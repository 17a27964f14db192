//! Dense row-major tensors with reverse-mode automatic differentiation.
//!
//! A [`Tensor`] is immutable once built. Every differentiable kernel records
//! its inputs and an analytic backward closure when at least one input
//! requires a gradient; [`Tensor::backward`] walks that record in reverse
//! topological order and returns the gradients of all leaves.

mod gradcheck;
mod nn_ops;
mod ops;

pub use gradcheck::{grad_check, GradCheckReport};

use std::collections::HashMap;
use std::fmt;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::Scalar;

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

type BackwardFn<S> = Box<dyn Fn(&[S], &[S], &[bool]) -> Vec<Option<Vec<S>>> + Send + Sync>;

struct GradFn<S: Scalar> {
    name: &'static str,
    inputs: Vec<Tensor<S>>,
    // (grad_out, out_data, needs_grad) -> per-input gradient
    backward: BackwardFn<S>,
}

struct Inner<S: Scalar> {
    id: u64,
    shape: Vec<usize>,
    data: Vec<S>,
    requires_grad: bool,
    grad_fn: Option<GradFn<S>>,
    consumed: AtomicBool,
}

// Unwinds long op chains iteratively instead of through nested Arc drops.
// Backward closures only capture tensors that are also listed as inputs.
impl<S: Scalar> Drop for Inner<S> {
    fn drop(&mut self) {
        let Some(gf) = self.grad_fn.take() else {
            return;
        };
        drop(gf.backward);
        let mut stack = gf.inputs;
        while let Some(t) = stack.pop() {
            if let Ok(mut inner) = Arc::try_unwrap(t.0) {
                if let Some(gf) = inner.grad_fn.take() {
                    drop(gf.backward);
                    stack.extend(gf.inputs);
                }
            }
        }
    }
}

/// Reference-counted tensor handle. Cloning is cheap and shares storage.
pub struct Tensor<S: Scalar>(Arc<Inner<S>>);

impl<S: Scalar> Clone for Tensor<S> {
    fn clone(&self) -> Self {
        Tensor(Arc::clone(&self.0))
    }
}

impl<S: Scalar> fmt::Debug for Tensor<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = self.0.grad_fn.as_ref().map(|g| g.name).unwrap_or("leaf");
        write!(f, "Tensor{:?}[{}]", self.0.shape, op)?;
        if self.numel() <= 8 {
            write!(f, "{:?}", self.0.data)?;
        }
        Ok(())
    }
}

fn fresh_id() -> u64 {
    NEXT_ID.fetch_add(1, Ordering::Relaxed)
}

impl<S: Scalar> Tensor<S> {
    fn build(shape: Vec<usize>, data: Vec<S>, requires_grad: bool, grad_fn: Option<GradFn<S>>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor(Arc::new(Inner {
            id: fresh_id(),
            shape,
            data,
            requires_grad,
            grad_fn,
            consumed: AtomicBool::new(false),
        }))
    }

    /// Constant leaf tensor.
    pub fn new(data: Vec<S>, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::ShapeMismatch {
                op: "new",
                lhs: shape.to_vec(),
                rhs: vec![data.len()],
            });
        }
        Ok(Self::build(shape.to_vec(), data, false, None))
    }

    /// Trainable leaf tensor.
    pub fn param(data: Vec<S>, shape: &[usize]) -> Result<Self> {
        Ok(Self::new(data, shape)?.requires_grad_(true))
    }

    pub fn from_f64(data: &[f64], shape: &[usize]) -> Result<Self> {
        Self::new(data.iter().map(|&v| S::of(v)).collect(), shape)
    }

    pub fn scalar(v: f64) -> Self {
        Self::build(vec![], vec![S::of(v)], false, None)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, 1.0)
    }

    pub fn full(shape: &[usize], v: f64) -> Self {
        let n = shape.iter().product();
        Self::build(shape.to_vec(), vec![S::of(v); n], false, None)
    }

    /// A new leaf sharing no history with `self`, with the given grad flag.
    pub fn requires_grad_(self, flag: bool) -> Self {
        if self.0.grad_fn.is_none() && self.0.requires_grad == flag {
            return self;
        }
        let data = match Arc::try_unwrap(self.0) {
            Ok(mut inner) => (std::mem::take(&mut inner.shape), std::mem::take(&mut inner.data)),
            Err(shared) => (shared.shape.clone(), shared.data.clone()),
        };
        Self::build(data.0, data.1, flag, None)
    }

    /// Constant copy cut from the graph.
    pub fn detach(&self) -> Self {
        Self::build(self.0.shape.clone(), self.0.data.clone(), false, None)
    }

    /// Records an op result. Drops the backward closure when no input needs it.
    pub(crate) fn from_op(
        name: &'static str,
        shape: Vec<usize>,
        data: Vec<S>,
        inputs: Vec<Tensor<S>>,
        backward: impl Fn(&[S], &[S], &[bool]) -> Vec<Option<Vec<S>>> + Send + Sync + 'static,
    ) -> Self {
        if inputs.iter().any(|t| t.requires_grad()) {
            let grad_fn = GradFn {
                name,
                inputs,
                backward: Box::new(backward),
            };
            Self::build(shape, data, true, Some(grad_fn))
        } else {
            Self::build(shape, data, false, None)
        }
    }

    pub fn id(&self) -> u64 {
        self.0.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn rank(&self) -> usize {
        self.0.shape.len()
    }

    pub fn dim(&self, axis: usize) -> Result<usize> {
        self.0.shape.get(axis).copied().ok_or(Error::UnknownAxis {
            op: "dim",
            axis,
            rank: self.rank(),
        })
    }

    pub fn numel(&self) -> usize {
        self.0.data.len()
    }

    pub fn data(&self) -> &[S] {
        &self.0.data
    }

    pub fn to_vec(&self) -> Vec<S> {
        self.0.data.clone()
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.0.data.iter().map(|v| v.wide()).collect()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.0.grad_fn.is_none()
    }

    /// Name of the op that produced this tensor, `"leaf"` for leaves.
    pub fn op_name(&self) -> &'static str {
        self.0.grad_fn.as_ref().map(|g| g.name).unwrap_or("leaf")
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> Result<f64> {
        if self.numel() != 1 {
            return Err(Error::NonScalarLoss(self.shape().to_vec()));
        }
        Ok(self.0.data[0].wide())
    }

    pub fn all_finite(&self) -> bool {
        self.0.data.iter().all(|v| v.is_finite())
    }

    /// Clears the consumed flag so `backward` may run again on this loss.
    pub fn reset_backward(&self) {
        self.0.consumed.store(false, Ordering::SeqCst);
    }

    /// Reverse-mode sweep from a scalar loss.
    pub fn backward(&self) -> Result<Gradients<S>> {
        if self.numel() != 1 {
            return Err(Error::NonScalarLoss(self.shape().to_vec()));
        }
        if !self.requires_grad() {
            return Err(Error::DetachedGraph);
        }
        if self.0.consumed.swap(true, Ordering::SeqCst) {
            return Err(Error::BackwardTwice);
        }

        let order = self.topo_order();
        let mut pending: HashMap<u64, Vec<S>> = HashMap::new();
        pending.insert(self.id(), vec![S::one()]);
        let mut leaves = HashMap::new();

        for node in order.iter().rev() {
            let Some(grad) = pending.remove(&node.id()) else {
                continue;
            };
            let Some(grad_fn) = node.0.grad_fn.as_ref() else {
                leaves.insert(node.id(), grad);
                continue;
            };
            let needs: Vec<bool> = grad_fn.inputs.iter().map(|t| t.requires_grad()).collect();
            let input_grads = (grad_fn.backward)(&grad, node.data(), &needs);
            for ((input, g), need) in grad_fn.inputs.iter().zip(input_grads).zip(needs) {
                let (Some(g), true) = (g, need) else {
                    continue;
                };
                debug_assert_eq!(g.len(), input.numel(), "{} backward", grad_fn.name);
                match pending.get_mut(&input.id()) {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += *b),
                    None => {
                        pending.insert(input.id(), g);
                    }
                }
            }
        }
        Ok(Gradients { grads: leaves })
    }

    // Iterative post-order DFS over the grad-requiring subgraph.
    fn topo_order(&self) -> Vec<Tensor<S>> {
        let mut order = Vec::new();
        let mut visited = std::collections::HashSet::new();
        let mut stack: Vec<(Tensor<S>, bool)> = vec![(self.clone(), false)];
        while let Some((node, expanded)) = stack.pop() {
            if expanded {
                order.push(node);
                continue;
            }
            if !visited.insert(node.id()) {
                continue;
            }
            stack.push((node.clone(), true));
            if let Some(gf) = node.0.grad_fn.as_ref() {
                for input in gf.inputs.iter().rev() {
                    if input.requires_grad() && !visited.contains(&input.id()) {
                        stack.push((input.clone(), false));
                    }
                }
            }
        }
        order
    }
}

/// Gradients of a loss with respect to the leaves it depends on.
#[derive(Debug, Default)]
pub struct Gradients<S: Scalar> {
    grads: HashMap<u64, Vec<S>>,
}

impl<S: Scalar> Gradients<S> {
    pub fn get(&self, t: &Tensor<S>) -> Option<&[S]> {
        self.grads.get(&t.id()).map(|g| g.as_slice())
    }

    /// Gradient as a tensor; zeros when the loss does not depend on `t`.
    pub fn wrt(&self, t: &Tensor<S>) -> Tensor<S> {
        match self.grads.get(&t.id()) {
            Some(g) => Tensor::build(t.shape().to_vec(), g.clone(), false, None),
            None => Tensor::zeros(t.shape()),
        }
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}

pub(crate) fn check_axis(op: &'static str, axis: usize, rank: usize) -> Result<()> {
    if axis >= rank {
        Err(Error::UnknownAxis { op, axis, rank })
    } else {
        Ok(())
    }
}

/// (outer, axis_len, inner) strides for reducing over `axis`.
pub(crate) fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}
