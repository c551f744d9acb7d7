//! The computation tape: vector-valued ops recorded eagerly on a forward
//! pass, differentiated exactly by a reverse sweep.
//!
//! Nodes only reference earlier nodes, so creation order is a topological
//! order and the reverse sweep visits every node after all its consumers.

use crate::error::{Error, Result};

use super::params::{backprop_cached, forward_cached, CachedForward, EncoderParams, Grads};

pub type NodeId = usize;

enum Op {
    Input,
    /// Forward through the first `layers` network layers.
    Net {
        x: NodeId,
        layers: usize,
        cache: CachedForward,
    },
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Scale(NodeId, f64),
    Square(NodeId),
    Sum(NodeId),
    SqDist(NodeId, NodeId),
    Softmax(NodeId),
    Blend {
        weights: NodeId,
        items: Vec<NodeId>,
    },
    DotConst(NodeId, Vec<f64>),
    Softplus(NodeId),
    AddMany(Vec<NodeId>),
    MeanMany(Vec<NodeId>),
    /// Assemble scalar nodes into one vector node.
    ConcatScalars(Vec<NodeId>),
}

struct Node {
    op: Op,
    value: Vec<f64>,
}

/// A tape over one parameter set. Build the loss with the op methods, then
/// call [`Tape::backward`].
pub struct Tape<'p> {
    params: &'p EncoderParams,
    nodes: Vec<Node>,
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p EncoderParams) -> Self {
        Self {
            params,
            nodes: Vec::new(),
        }
    }

    fn push(&mut self, op: Op, value: Vec<f64>) -> NodeId {
        self.nodes.push(Node { op, value });
        self.nodes.len() - 1
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.nodes[id].value
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        debug_assert_eq!(self.nodes[id].value.len(), 1);
        self.nodes[id].value[0]
    }

    pub fn input(&mut self, values: &[f64]) -> NodeId {
        self.push(Op::Input, values.to_vec())
    }

    pub fn scalar_input(&mut self, v: f64) -> NodeId {
        self.push(Op::Input, vec![v])
    }

    /// Trunk forward: frame values -> latent.
    pub fn encode(&mut self, x: NodeId) -> Result<NodeId> {
        self.net(x, self.params.trunk_layers)
    }

    /// Full forward including the scalar head: frame values -> scalar.
    pub fn head(&mut self, x: NodeId) -> Result<NodeId> {
        if !self.params.has_head() {
            return Err(Error::Usage("encoder has no scalar head".into()));
        }
        self.net(x, self.params.layers.len())
    }

    fn net(&mut self, x: NodeId, layers: usize) -> Result<NodeId> {
        let input = &self.nodes[x].value;
        if input.len() != self.params.input_dim() {
            return Err(Error::Usage(format!(
                "input length {} does not match encoder input dim {}",
                input.len(),
                self.params.input_dim()
            )));
        }
        let cache = forward_cached(self.params, input, layers);
        let value = cache.output().to_vec();
        Ok(self.push(Op::Net { x, layers, cache }, value))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v: Vec<f64> = self.nodes[a]
            .value
            .iter()
            .zip(&self.nodes[b].value)
            .map(|(x, y)| x + y)
            .collect();
        self.push(Op::Add(a, b), v)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v: Vec<f64> = self.nodes[a]
            .value
            .iter()
            .zip(&self.nodes[b].value)
            .map(|(x, y)| x - y)
            .collect();
        self.push(Op::Sub(a, b), v)
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        let v: Vec<f64> = self.nodes[x].value.iter().map(|a| a * c).collect();
        self.push(Op::Scale(x, c), v)
    }

    pub fn square(&mut self, x: NodeId) -> NodeId {
        let v: Vec<f64> = self.nodes[x].value.iter().map(|a| a * a).collect();
        self.push(Op::Square(x), v)
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let s: f64 = self.nodes[x].value.iter().sum();
        self.push(Op::Sum(x), vec![s])
    }

    /// Squared Euclidean distance between two vectors, as a scalar node.
    pub fn sq_dist(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let s: f64 = self.nodes[a]
            .value
            .iter()
            .zip(&self.nodes[b].value)
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        self.push(Op::SqDist(a, b), vec![s])
    }

    pub fn softmax(&mut self, x: NodeId) -> NodeId {
        let v = &self.nodes[x].value;
        let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = v.iter().map(|&a| (a - m).exp()).collect();
        let z: f64 = exps.iter().sum();
        let y: Vec<f64> = exps.iter().map(|&e| e / z).collect();
        self.push(Op::Softmax(x), y)
    }

    /// Weighted sum of vectors: `sum_k weights[k] * items[k]`.
    pub fn blend(&mut self, weights: NodeId, items: &[NodeId]) -> NodeId {
        let k = items.len();
        debug_assert_eq!(self.nodes[weights].value.len(), k);
        let dim = self.nodes[items[0]].value.len();
        let mut v = vec![0.0; dim];
        for (i, &it) in items.iter().enumerate() {
            let w = self.nodes[weights].value[i];
            for (o, &x) in v.iter_mut().zip(&self.nodes[it].value) {
                *o += w * x;
            }
        }
        self.push(
            Op::Blend {
                weights,
                items: items.to_vec(),
            },
            v,
        )
    }

    pub fn dot_const(&mut self, x: NodeId, c: &[f64]) -> NodeId {
        let s: f64 = self.nodes[x].value.iter().zip(c).map(|(a, b)| a * b).sum();
        self.push(Op::DotConst(x, c.to_vec()), vec![s])
    }

    pub fn softplus(&mut self, x: NodeId) -> NodeId {
        let v: Vec<f64> = self.nodes[x].value.iter().map(|&a| softplus(a)).collect();
        self.push(Op::Softplus(x), v)
    }

    pub fn add_many(&mut self, items: &[NodeId]) -> NodeId {
        let dim = self.nodes[items[0]].value.len();
        let mut v = vec![0.0; dim];
        for &it in items {
            for (o, &x) in v.iter_mut().zip(&self.nodes[it].value) {
                *o += x;
            }
        }
        self.push(Op::AddMany(items.to_vec()), v)
    }

    pub fn concat_scalars(&mut self, items: &[NodeId]) -> NodeId {
        let v: Vec<f64> = items
            .iter()
            .map(|&it| {
                debug_assert_eq!(self.nodes[it].value.len(), 1);
                self.nodes[it].value[0]
            })
            .collect();
        self.push(Op::ConcatScalars(items.to_vec()), v)
    }

    pub fn mean_many(&mut self, items: &[NodeId]) -> NodeId {
        let dim = self.nodes[items[0]].value.len();
        let k = items.len() as f64;
        let mut v = vec![0.0; dim];
        for &it in items {
            for (o, &x) in v.iter_mut().zip(&self.nodes[it].value) {
                *o += x / k;
            }
        }
        self.push(Op::MeanMany(items.to_vec()), v)
    }

    /// Reverse sweep from a scalar loss; returns parameter gradients.
    pub fn backward(&self, loss: NodeId) -> Result<Grads> {
        Ok(self.backward_with_inputs(loss, &[])?.0)
    }

    /// Reverse sweep that also returns the adjoints of selected nodes
    /// (used to split batch losses from the shared encoder backprop).
    pub fn backward_with_inputs(
        &self,
        loss: NodeId,
        watched: &[NodeId],
    ) -> Result<(Grads, Vec<Vec<f64>>)> {
        if self.nodes[loss].value.len() != 1 {
            return Err(Error::Usage(format!(
                "backward target must be scalar, got length {}",
                self.nodes[loss].value.len()
            )));
        }
        let mut grads = Grads::zeros(self.params);
        let mut adj: Vec<Vec<f64>> = self.nodes.iter().map(|_| Vec::new()).collect();
        adj[loss] = vec![1.0];

        for id in (0..=loss).rev() {
            if adj[id].is_empty() {
                continue;
            }
            let dy = std::mem::take(&mut adj[id]);
            let touch = |adj: &mut Vec<Vec<f64>>, node: NodeId, dim: usize| {
                if adj[node].is_empty() {
                    adj[node] = vec![0.0; dim];
                }
            };
            match &self.nodes[id].op {
                Op::Input => {
                    adj[id] = dy;
                    continue;
                }
                Op::Net { x, layers, cache } => {
                    backprop_cached(self.params, cache, &dy, *layers, &mut grads);
                    // Inputs are constants; propagate only if someone watches
                    // the input node via another op (not supported: frame
                    // inputs are leaves).
                    let _ = x;
                }
                Op::Add(a, b) => {
                    touch(&mut adj, *a, dy.len());
                    touch(&mut adj, *b, dy.len());
                    for i in 0..dy.len() {
                        adj[*a][i] += dy[i];
                        adj[*b][i] += dy[i];
                    }
                }
                Op::Sub(a, b) => {
                    touch(&mut adj, *a, dy.len());
                    touch(&mut adj, *b, dy.len());
                    for i in 0..dy.len() {
                        adj[*a][i] += dy[i];
                        adj[*b][i] -= dy[i];
                    }
                }
                Op::Scale(x, c) => {
                    touch(&mut adj, *x, dy.len());
                    for i in 0..dy.len() {
                        adj[*x][i] += c * dy[i];
                    }
                }
                Op::Square(x) => {
                    touch(&mut adj, *x, dy.len());
                    for i in 0..dy.len() {
                        adj[*x][i] += 2.0 * self.nodes[*x].value[i] * dy[i];
                    }
                }
                Op::Sum(x) => {
                    let n = self.nodes[*x].value.len();
                    touch(&mut adj, *x, n);
                    for i in 0..n {
                        adj[*x][i] += dy[0];
                    }
                }
                Op::SqDist(a, b) => {
                    let n = self.nodes[*a].value.len();
                    touch(&mut adj, *a, n);
                    touch(&mut adj, *b, n);
                    for i in 0..n {
                        let diff = self.nodes[*a].value[i] - self.nodes[*b].value[i];
                        adj[*a][i] += 2.0 * diff * dy[0];
                        adj[*b][i] -= 2.0 * diff * dy[0];
                    }
                }
                Op::Softmax(x) => {
                    let y = &self.nodes[id].value;
                    let dot: f64 = dy.iter().zip(y).map(|(d, v)| d * v).sum();
                    touch(&mut adj, *x, y.len());
                    for i in 0..y.len() {
                        adj[*x][i] += y[i] * (dy[i] - dot);
                    }
                }
                Op::Blend { weights, items } => {
                    touch(&mut adj, *weights, items.len());
                    for (k, &it) in items.iter().enumerate() {
                        let w = self.nodes[*weights].value[k];
                        let dwk: f64 = dy
                            .iter()
                            .zip(&self.nodes[it].value)
                            .map(|(d, v)| d * v)
                            .sum();
                        adj[*weights][k] += dwk;
                        touch(&mut adj, it, dy.len());
                        for i in 0..dy.len() {
                            adj[it][i] += w * dy[i];
                        }
                    }
                }
                Op::DotConst(x, c) => {
                    touch(&mut adj, *x, c.len());
                    for i in 0..c.len() {
                        adj[*x][i] += c[i] * dy[0];
                    }
                }
                Op::Softplus(x) => {
                    touch(&mut adj, *x, dy.len());
                    for i in 0..dy.len() {
                        adj[*x][i] += sigmoid(self.nodes[*x].value[i]) * dy[i];
                    }
                }
                Op::AddMany(items) => {
                    for &it in items {
                        touch(&mut adj, it, dy.len());
                        for i in 0..dy.len() {
                            adj[it][i] += dy[i];
                        }
                    }
                }
                Op::MeanMany(items) => {
                    let k = items.len() as f64;
                    for &it in items {
                        touch(&mut adj, it, dy.len());
                        for i in 0..dy.len() {
                            adj[it][i] += dy[i] / k;
                        }
                    }
                }
                Op::ConcatScalars(items) => {
                    for (i, &it) in items.iter().enumerate() {
                        touch(&mut adj, it, 1);
                        adj[it][0] += dy[i];
                    }
                }
            }
        }

        let watched_adjoints = watched
            .iter()
            .map(|&w| {
                if adj[w].is_empty() {
                    vec![0.0; self.nodes[w].value.len()]
                } else {
                    adj[w].clone()
                }
            })
            .collect();
        Ok((grads, watched_adjoints))
    }
}
