//! Dense `f64` tensors with reverse-mode automatic differentiation.
//!
//! Every operation that touches a tensor with `requires_grad` records a
//! [`Node`] holding its inputs and a backward rule. [`Tensor::backward`]
//! walks the recorded graph once in reverse topological order and
//! accumulates gradients into the leaves. Gradients accumulate across
//! calls until [`Tensor::zero_grad`] is invoked.
//!
//! ```
//! use freqalign::tensor::Tensor;
//!
//! let x = Tensor::param(vec![1], vec![3.0]).unwrap();
//! let y = x.mul(&x).unwrap().sum();
//! y.backward().unwrap();
//! assert_eq!(x.grad().unwrap(), vec![6.0]);
//! ```

mod conv;
mod gemm;
mod ops;

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, RwLock, RwLockReadGuard};

use crate::error::{Error, Result};

pub(crate) use gemm::gemm;

static NEXT_ID: AtomicUsize = AtomicUsize::new(0);

type BackwardFn = dyn Fn(&[f64], &[bool]) -> Vec<Option<Vec<f64>>> + Send + Sync;

/// A recorded operation: its tag, the tensors it consumed and the rule
/// mapping the output gradient to input gradients. Saved intermediates live
/// inside the closure.
pub(crate) struct Node {
    op: &'static str,
    inputs: Vec<Tensor>,
    backward: Box<BackwardFn>,
}

struct Inner {
    id: usize,
    shape: Vec<usize>,
    data: RwLock<Vec<f64>>,
    grad: Mutex<Option<Vec<f64>>>,
    requires_grad: bool,
    node: Option<Node>,
}

/// Reference-counted handle to a dense row-major array.
///
/// Cloning is cheap and shares storage; parameters are updated in place
/// through [`Tensor::update`].
#[derive(Clone)]
pub struct Tensor {
    inner: Arc<Inner>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let data = self.data();
        let preview: Vec<f64> = data.iter().take(8).copied().collect();
        f.debug_struct("Tensor")
            .field("shape", &self.inner.shape)
            .field("requires_grad", &self.inner.requires_grad)
            .field("op", &self.inner.node.as_ref().map(|n| n.op))
            .field("data", &preview)
            .finish()
    }
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tensor {
    fn build(shape: Vec<usize>, data: Vec<f64>, requires_grad: bool, node: Option<Node>) -> Self {
        debug_assert_eq!(numel(&shape), data.len());
        Tensor {
            inner: Arc::new(Inner {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape,
                data: RwLock::new(data),
                grad: Mutex::new(None),
                requires_grad,
                node,
            }),
        }
    }

    /// Constant tensor (no gradient tracking).
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if numel(&shape) != data.len() {
            return Err(Error::shape(format!(
                "shape {:?} holds {} values, got {}",
                shape,
                numel(&shape),
                data.len()
            )));
        }
        Ok(Self::build(shape, data, false, None))
    }

    /// Leaf tensor that receives gradients.
    pub fn param(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if numel(&shape) != data.len() {
            return Err(Error::shape(format!(
                "shape {:?} holds {} values, got {}",
                shape,
                numel(&shape),
                data.len()
            )));
        }
        Ok(Self::build(shape, data, true, None))
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = numel(&shape);
        Self::build(shape, vec![0.0; n], false, None)
    }

    pub fn full(shape: Vec<usize>, value: f64) -> Self {
        let n = numel(&shape);
        Self::build(shape, vec![value; n], false, None)
    }

    pub fn scalar(value: f64) -> Self {
        Self::build(vec![], vec![value], false, None)
    }

    /// Records the result of an operation. The backward rule is only kept
    /// when at least one input tracks gradients.
    pub(crate) fn from_op<F>(
        op: &'static str,
        shape: Vec<usize>,
        data: Vec<f64>,
        inputs: &[&Tensor],
        backward: F,
    ) -> Tensor
    where
        F: Fn(&[f64], &[bool]) -> Vec<Option<Vec<f64>>> + Send + Sync + 'static,
    {
        let requires_grad = inputs.iter().any(|t| t.requires_grad());
        let node = requires_grad.then(|| Node {
            op,
            inputs: inputs.iter().map(|t| (*t).clone()).collect(),
            backward: Box::new(backward),
        });
        Self::build(shape, data, requires_grad, node)
    }

    pub fn id(&self) -> usize {
        self.inner.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn numel(&self) -> usize {
        numel(&self.inner.shape)
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    /// Operation tag of the node that produced this tensor, if recorded.
    pub fn op(&self) -> Option<&'static str> {
        self.inner.node.as_ref().map(|n| n.op)
    }

    pub fn data(&self) -> RwLockReadGuard<'_, Vec<f64>> {
        self.inner.data.read().expect("tensor data lock poisoned")
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.data().clone()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> f64 {
        let data = self.data();
        assert_eq!(data.len(), 1, "item() on tensor of shape {:?}", self.shape());
        data[0]
    }

    pub fn grad(&self) -> Option<Vec<f64>> {
        self.inner.grad.lock().expect("grad lock poisoned").clone()
    }

    pub fn zero_grad(&self) {
        *self.inner.grad.lock().expect("grad lock poisoned") = None;
    }

    /// Mutates the stored values in place (optimizer updates, loading).
    pub fn update<F: FnOnce(&mut [f64])>(&self, f: F) {
        let mut data = self.inner.data.write().expect("tensor data lock poisoned");
        f(&mut data);
    }

    /// Same values, cut from the graph.
    pub fn detach(&self) -> Tensor {
        Self::build(self.shape().to_vec(), self.to_vec(), false, None)
    }

    fn accumulate_grad(&self, g: &[f64]) {
        let mut slot = self.inner.grad.lock().expect("grad lock poisoned");
        match slot.as_mut() {
            Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
            None => *slot = Some(g.to_vec()),
        }
    }

    /// Reverse-mode sweep from a single-element loss.
    ///
    /// Gradients are added to whatever the leaves already hold.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(Error::usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape()
            )));
        }
        if !self.requires_grad() {
            return Err(Error::usage("loss is not connected to any tensor that requires grad"));
        }

        let order = self.topo_order();
        let mut grads: HashMap<usize, Vec<f64>> = HashMap::new();
        grads.insert(self.id(), vec![1.0]);

        for t in order.iter().rev() {
            let Some(g) = grads.remove(&t.id()) else { continue };
            match &t.inner.node {
                Some(node) => {
                    let needs: Vec<bool> = node.inputs.iter().map(Tensor::requires_grad).collect();
                    let input_grads = (node.backward)(&g, &needs);
                    for ((input, gi), need) in node.inputs.iter().zip(input_grads).zip(needs) {
                        let Some(gi) = gi else { continue };
                        if !need {
                            continue;
                        }
                        debug_assert_eq!(gi.len(), input.numel(), "grad size for op {}", node.op);
                        match grads.get_mut(&input.id()) {
                            Some(acc) => acc.iter_mut().zip(&gi).for_each(|(a, b)| *a += b),
                            None => {
                                grads.insert(input.id(), gi);
                            }
                        }
                    }
                }
                None => t.accumulate_grad(&g),
            }
        }
        Ok(())
    }

    /// Gradient-tracking ancestors in topological order (inputs first).
    fn topo_order(&self) -> Vec<Tensor> {
        let mut order = Vec::new();
        let mut visited = HashSet::new();
        let mut stack: Vec<(Tensor, bool)> = vec![(self.clone(), false)];
        while let Some((t, expanded)) = stack.pop() {
            if expanded {
                order.push(t);
                continue;
            }
            if !visited.insert(t.id()) {
                continue;
            }
            stack.push((t.clone(), true));
            if let Some(node) = &t.inner.node {
                for input in &node.inputs {
                    if input.requires_grad() && !visited.contains(&input.id()) {
                        stack.push((input.clone(), false));
                    }
                }
            }
        }
        order
    }
}
