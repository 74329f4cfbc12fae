use super::ops::{self, Op, Saved};
use super::{DiffError, Element, Result};

/// Index of a value inside its [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub(crate) usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A shaped array participating in a recorded graph.
#[derive(Debug, Clone)]
pub struct DiffValue<T> {
    shape: Vec<usize>,
    data: Vec<T>,
    grad: Vec<T>,
    id: NodeId,
}

impl<T: Element> DiffValue<T> {
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn grad(&self) -> &[T] {
        &self.grad
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Scalar value of a single-element array.
    pub fn item(&self) -> Option<T> {
        (self.data.len() == 1).then(|| self.data[0])
    }
}

pub(crate) struct Record<T> {
    pub op: Op,
    pub inputs: Vec<NodeId>,
    pub saved: Saved<T>,
}

/// Recording of one forward pass.
///
/// Leaves are created with [`Tape::leaf`]; every other value comes from
/// [`Tape::apply`] (or one of the typed shorthands) and carries the rule
/// used to push gradients back to its inputs.
pub struct Tape<T> {
    nodes: Vec<DiffValue<T>>,
    records: Vec<Option<Record<T>>>,
}

impl<T: Element> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Element> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), records: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Adds an input array (parameter, data or constant).
    pub fn leaf(&mut self, shape: &[usize], data: Vec<T>) -> Result<NodeId> {
        if shape.is_empty() || shape.contains(&0) || shape.iter().product::<usize>() != data.len() {
            return Err(DiffError::DataLength { shape: shape.to_vec(), len: data.len() });
        }
        Ok(self.push(shape.to_vec(), data, None))
    }

    /// Adds a leaf converted from `f32` storage.
    pub fn leaf_f32(&mut self, shape: &[usize], data: &[f32]) -> Result<NodeId> {
        let converted = data.iter().map(|&v| T::of(f64::from(v))).collect();
        self.leaf(shape, converted)
    }

    pub fn scalar(&mut self, v: T) -> NodeId {
        self.push(vec![1], vec![v], None)
    }

    pub fn get(&self, id: NodeId) -> Result<&DiffValue<T>> {
        self.nodes.get(id.0).ok_or(DiffError::UnknownNode(id.0))
    }

    /// Panicking accessor for ids known to come from this tape.
    pub fn value(&self, id: NodeId) -> &DiffValue<T> {
        &self.nodes[id.0]
    }

    pub fn data(&self, id: NodeId) -> &[T] {
        &self.nodes[id.0].data
    }

    pub fn grad(&self, id: NodeId) -> &[T] {
        &self.nodes[id.0].grad
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    pub fn zero_grads(&mut self) {
        for node in &mut self.nodes {
            node.grad.iter_mut().for_each(|g| *g = T::zero());
        }
    }

    /// Records `op` applied to `inputs` and returns the output node.
    pub fn apply(&mut self, op: Op, inputs: &[NodeId]) -> Result<NodeId> {
        for id in inputs {
            if id.0 >= self.nodes.len() {
                return Err(DiffError::UnknownNode(id.0));
            }
        }
        let views: Vec<&DiffValue<T>> = inputs.iter().map(|id| &self.nodes[id.0]).collect();
        let out = ops::forward(&op, &views)?;
        let record = Record { op, inputs: inputs.to_vec(), saved: out.saved };
        Ok(self.push(out.shape, out.data, Some(record)))
    }

    /// Accumulates `d loss / d value` into the grad of every ancestor of `loss`.
    ///
    /// Adjoints are computed in a scratch buffer and only then added to the
    /// stored grads, so calling this twice exactly doubles every grad.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        let node = self.get(loss)?;
        if node.data.len() != 1 {
            return Err(DiffError::NonScalarLoss(node.shape.clone()));
        }
        let mut adj: Vec<Option<Vec<T>>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(vec![T::one()]);
        for idx in (0..=loss.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            if let Some(rec) = &self.records[idx] {
                ops::backward(rec, &self.nodes, &self.nodes[idx], &g, &mut adj);
            }
            for (dst, src) in self.nodes[idx].grad.iter_mut().zip(&g) {
                *dst = *dst + *src;
            }
        }
        Ok(())
    }

    fn push(&mut self, shape: Vec<usize>, data: Vec<T>, record: Option<Record<T>>) -> NodeId {
        let id = NodeId(self.nodes.len());
        let grad = vec![T::zero(); data.len()];
        self.nodes.push(DiffValue { shape, data, grad, id });
        self.records.push(record);
        id
    }

    // Typed shorthands over `apply`.

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Op::Add, &[a, b])
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Op::Sub, &[a, b])
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Op::Mul, &[a, b])
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Op::MatMul { transpose_rhs: false }, &[a, b])
    }

    /// `a @ b^T`.
    pub fn matmul_t(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Op::MatMul { transpose_rhs: true }, &[a, b])
    }

    pub fn conv1d(&mut self, x: NodeId, w: NodeId, bias: Option<NodeId>, stride: usize) -> Result<NodeId> {
        match bias {
            Some(b) => self.apply(Op::Conv1d { stride }, &[x, w, b]),
            None => self.apply(Op::Conv1d { stride }, &[x, w]),
        }
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        self.apply(Op::Relu, &[x])
    }

    pub fn max_pool1d(&mut self, x: NodeId, size: usize) -> Result<NodeId> {
        self.apply(Op::MaxPool1d { size }, &[x])
    }

    pub fn global_mean_pool(&mut self, x: NodeId) -> Result<NodeId> {
        self.apply(Op::GlobalMeanPool, &[x])
    }

    pub fn exp(&mut self, x: NodeId) -> Result<NodeId> {
        self.apply(Op::Exp, &[x])
    }

    pub fn log(&mut self, x: NodeId) -> Result<NodeId> {
        self.apply(Op::Log, &[x])
    }

    pub fn sum(&mut self, x: NodeId) -> Result<NodeId> {
        self.apply(Op::Sum, &[x])
    }

    pub fn mean(&mut self, x: NodeId) -> Result<NodeId> {
        self.apply(Op::Mean, &[x])
    }

    pub fn scale(&mut self, x: NodeId, factor: f64) -> Result<NodeId> {
        self.apply(Op::ScalarScale(factor), &[x])
    }

    pub fn l2_normalize_rows(&mut self, x: NodeId) -> Result<NodeId> {
        self.apply(Op::L2NormalizeRows, &[x])
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        self.apply(Op::ConcatRows, parts)
    }

    pub fn dot_rows(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Op::DotRows, &[a, b])
    }

    pub fn softmax_rows(&mut self, x: NodeId) -> Result<NodeId> {
        self.apply(Op::SoftmaxRows, &[x])
    }

    /// Per-row `logsumexp(z) - z[target]`, shape `[rows]`.
    pub fn cross_entropy(&mut self, logits: NodeId, targets: Vec<usize>) -> Result<NodeId> {
        self.apply(Op::CrossEntropyWithLogits { targets }, &[logits])
    }
}
