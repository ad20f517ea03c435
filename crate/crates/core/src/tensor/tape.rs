use super::ops::Op;
use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

pub(crate) struct Node {
    pub(crate) shape: Vec<usize>,
    pub(crate) value: Vec<f64>,
    pub(crate) op: Op,
    pub(crate) requires_grad: bool,
}

/// Append-only record of a forward computation.
///
/// Nodes are pushed in evaluation order, so every node's inputs have
/// smaller indices than the node itself and the tape is topologically
/// sorted by construction.
#[derive(Default)]
pub struct Tape {
    pub(crate) nodes: Vec<Node>,
}

/// Gradients of one scalar with respect to every node on a tape.
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// `None` when the node does not depend on any trainable leaf or does
    /// not influence the loss.
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a tensor as a leaf. Trainable tensors become gradient sinks.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        self.push_raw(t.shape().to_vec(), t.data().to_vec(), Op::Leaf, t.requires_grad())
    }

    /// Records a non-trainable leaf.
    pub fn constant(&mut self, shape: &[usize], data: Vec<f64>) -> Result<Var> {
        let t = Tensor::new(shape, data)?;
        Ok(self.leaf(&t))
    }

    /// Records a trainable leaf.
    pub fn variable(&mut self, shape: &[usize], data: Vec<f64>) -> Result<Var> {
        let t = Tensor::new(shape, data)?.with_grad();
        Ok(self.leaf(&t))
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Copies a recorded value out as a standalone tensor.
    pub fn to_tensor(&self, v: Var) -> Tensor {
        let n = &self.nodes[v.0];
        Tensor::new(&n.shape, n.value.clone()).expect("tape nodes always hold valid shapes")
    }

    /// Value of a single-element node.
    pub fn scalar(&self, v: Var) -> Result<f64> {
        match self.value(v) {
            [x] => Ok(*x),
            other => Err(Error::contract(format!(
                "expected a scalar, found {} elements",
                other.len()
            ))),
        }
    }

    pub(crate) fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op) -> Var {
        let requires_grad = op.inputs().iter().any(|v| self.nodes[v.0].requires_grad);
        self.push_raw(shape, value, op, requires_grad)
    }

    fn push_raw(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op, requires_grad: bool) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        let id = self.nodes.len();
        self.nodes.push(Node {
            shape,
            value,
            op,
            requires_grad,
        });
        Var(id)
    }

    /// Reverse-mode sweep from a scalar `loss`.
    ///
    /// Each node at or before `loss` is visited once, in reverse recording
    /// order; its gradient is complete at that point because all consumers
    /// were recorded later.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.nodes[loss.0].shape
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let (before, rest) = grads.split_at_mut(idx);
            let Some(g) = rest[0].as_deref() else {
                continue;
            };
            node.op.backward(
                self,
                node,
                g,
                &mut GradSink {
                    grads: before,
                    tape: self,
                },
            );
        }
        Ok(Gradients { grads })
    }
}

/// Accumulation target for backward rules; only nodes that need a gradient
/// receive one.
pub(crate) struct GradSink<'a> {
    grads: &'a mut [Option<Vec<f64>>],
    tape: &'a Tape,
}

impl GradSink<'_> {
    /// Gradient buffer of `v`, or `None` if `v` needs no gradient.
    pub(crate) fn buf(&mut self, v: Var) -> Option<&mut Vec<f64>> {
        let node = &self.tape.nodes[v.0];
        if !node.requires_grad {
            return None;
        }
        let len = node.value.len();
        Some(self.grads[v.0].get_or_insert_with(|| vec![0.0; len]))
    }

    pub(crate) fn add(&mut self, v: Var, g: &[f64]) {
        if let Some(buf) = self.buf(v) {
            buf.iter_mut().zip(g).for_each(|(b, x)| *b += x);
        }
    }

    pub(crate) fn add_with(&mut self, v: Var, f: impl FnOnce(&mut [f64])) {
        if let Some(buf) = self.buf(v) {
            f(buf);
        }
    }
}
