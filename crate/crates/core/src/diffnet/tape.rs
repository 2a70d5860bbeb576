//! Reverse-mode differentiation over vector-valued nodes.
//!
//! Every forward call appends one node holding its output value. `backward`
//! walks the nodes from the requested output down to the first node, so
//! operations are visited in exact reverse order of recording. Parameter
//! gradients are accumulated into a flat buffer aligned with the
//! [`ParamSet`](super::ParamSet) the forward pass read from.

use super::layers::{sigmoid, DenseLayer, LstmCell, VqcLayer};
use crate::error::{Error, Result};
use crate::qsim;

pub type NodeId = usize;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Dense { layer: DenseLayer, x: NodeId },
    Vqc { layer: VqcLayer, x: NodeId },
    Tanh(NodeId),
    Sigmoid(NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Concat(NodeId, NodeId),
    Softmax(NodeId),
    Log(NodeId),
    Square(NodeId),
    Sum(NodeId),
    Pick(NodeId, usize),
}

#[derive(Debug, Default, Clone)]
pub struct Tape {
    values: Vec<Vec<f64>>,
    ops: Vec<Op>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn clear(&mut self) {
        self.values.clear();
        self.ops.clear();
    }

    pub fn value(&self, node: NodeId) -> &[f64] {
        &self.values[node]
    }

    pub fn scalar(&self, node: NodeId) -> f64 {
        self.values[node][0]
    }

    fn push(&mut self, op: Op, value: Vec<f64>) -> NodeId {
        self.ops.push(op);
        self.values.push(value);
        self.ops.len() - 1
    }

    fn check_same_len(&self, a: NodeId, b: NodeId) -> Result<()> {
        if self.values[a].len() != self.values[b].len() {
            return Err(Error::usage(format!(
                "elementwise operands have lengths {} and {}",
                self.values[a].len(),
                self.values[b].len()
            )));
        }
        Ok(())
    }

    /// A constant input. Gradients do not flow past leaves.
    pub fn leaf(&mut self, value: Vec<f64>) -> NodeId {
        self.push(Op::Leaf, value)
    }

    pub fn constant(&mut self, value: f64) -> NodeId {
        self.leaf(vec![value])
    }

    pub fn dense(&mut self, params: &[f64], layer: &DenseLayer, x: NodeId) -> Result<NodeId> {
        let y = layer.forward(params, &self.values[x])?;
        Ok(self.push(Op::Dense { layer: *layer, x }, y))
    }

    pub fn vqc(&mut self, params: &[f64], layer: &VqcLayer, x: NodeId) -> Result<NodeId> {
        let y = layer.forward(params, &self.values[x])?;
        Ok(self.push(Op::Vqc { layer: *layer, x }, y))
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let y = self.values[x].iter().map(|v| v.tanh()).collect();
        self.push(Op::Tanh(x), y)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let y = self.values[x].iter().map(|v| sigmoid(*v)).collect();
        self.push(Op::Sigmoid(x), y)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check_same_len(a, b)?;
        let y = self.values[a]
            .iter()
            .zip(&self.values[b])
            .map(|(x, y)| x + y)
            .collect();
        Ok(self.push(Op::Add(a, b), y))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check_same_len(a, b)?;
        let y = self.values[a]
            .iter()
            .zip(&self.values[b])
            .map(|(x, y)| x - y)
            .collect();
        Ok(self.push(Op::Sub(a, b), y))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check_same_len(a, b)?;
        let y = self.values[a]
            .iter()
            .zip(&self.values[b])
            .map(|(x, y)| x * y)
            .collect();
        Ok(self.push(Op::Mul(a, b), y))
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        let y = self.values[x].iter().map(|v| v * c).collect();
        self.push(Op::Scale(x, c), y)
    }

    pub fn concat(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let mut y = self.values[a].clone();
        y.extend_from_slice(&self.values[b]);
        self.push(Op::Concat(a, b), y)
    }

    pub fn softmax(&mut self, x: NodeId) -> NodeId {
        let y = super::layers::softmax(&self.values[x]);
        self.push(Op::Softmax(x), y)
    }

    pub fn log(&mut self, x: NodeId) -> NodeId {
        let y = self.values[x].iter().map(|v| v.ln()).collect();
        self.push(Op::Log(x), y)
    }

    pub fn square(&mut self, x: NodeId) -> NodeId {
        let y = self.values[x].iter().map(|v| v * v).collect();
        self.push(Op::Square(x), y)
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let y = vec![self.values[x].iter().sum()];
        self.push(Op::Sum(x), y)
    }

    pub fn pick(&mut self, x: NodeId, index: usize) -> Result<NodeId> {
        let v = *self.values[x].get(index).ok_or_else(|| {
            Error::usage(format!(
                "index {index} out of range for node of length {}",
                self.values[x].len()
            ))
        })?;
        Ok(self.push(Op::Pick(x, index), vec![v]))
    }

    /// One LSTM step recorded from primitives. Returns `(h, c)`.
    pub fn lstm_step(
        &mut self,
        params: &[f64],
        cell: &LstmCell,
        x: NodeId,
        h: NodeId,
        c: NodeId,
    ) -> Result<(NodeId, NodeId)> {
        let xh = self.concat(x, h);
        let i = self.dense(params, &cell.input_gate, xh)?;
        let i = self.sigmoid(i);
        let f = self.dense(params, &cell.forget_gate, xh)?;
        let f = self.sigmoid(f);
        let o = self.dense(params, &cell.output_gate, xh)?;
        let o = self.sigmoid(o);
        let g = self.dense(params, &cell.candidate, xh)?;
        let g = self.tanh(g);
        let keep = self.mul(f, c)?;
        let write = self.mul(i, g)?;
        let c_new = self.add(keep, write)?;
        let squashed = self.tanh(c_new);
        let h_new = self.mul(o, squashed)?;
        Ok((h_new, c_new))
    }

    /// Gradients of the scalar node `output` scaled by `loss_grad`, with
    /// respect to every parameter (flat layout of `params`).
    pub fn backward(&self, params: &[f64], output: NodeId, loss_grad: f64) -> Result<Vec<f64>> {
        let mut grads = vec![0.0; params.len()];
        self.backward_into(params, output, loss_grad, &mut grads)?;
        Ok(grads)
    }

    /// Like [`Tape::backward`] but accumulates into an existing buffer.
    pub fn backward_into(
        &self,
        params: &[f64],
        output: NodeId,
        loss_grad: f64,
        grads: &mut [f64],
    ) -> Result<()> {
        if self.is_empty() {
            return Err(Error::usage("backward called before any forward pass"));
        }
        if output >= self.len() {
            return Err(Error::usage(format!("node {output} is not on the tape")));
        }
        if self.values[output].len() != 1 {
            return Err(Error::usage(format!(
                "backward needs a scalar output, node {output} has length {}",
                self.values[output].len()
            )));
        }
        if grads.len() != params.len() {
            return Err(Error::usage("gradient buffer does not match parameters"));
        }

        let mut adj: Vec<Option<Vec<f64>>> = vec![None; output + 1];
        adj[output] = Some(vec![loss_grad]);

        fn acc<'a>(
            adj: &'a mut [Option<Vec<f64>>],
            values: &[Vec<f64>],
            node: NodeId,
        ) -> &'a mut Vec<f64> {
            adj[node].get_or_insert_with(|| vec![0.0; values[node].len()])
        }

        for node in (0..=output).rev() {
            let Some(g) = adj[node].take() else { continue };
            let y = &self.values[node];
            match &self.ops[node] {
                Op::Leaf => {}
                Op::Dense { layer, x } => {
                    let xv = &self.values[*x];
                    let w = layer.weight.slice(params);
                    {
                        let gw = layer.weight.slice_mut(grads);
                        for o in 0..layer.n_out {
                            for j in 0..layer.n_in {
                                gw[o * layer.n_in + j] += g[o] * xv[j];
                            }
                        }
                    }
                    {
                        let gb = layer.bias.slice_mut(grads);
                        for o in 0..layer.n_out {
                            gb[o] += g[o];
                        }
                    }
                    let gx = acc(&mut adj, &self.values, *x);
                    for o in 0..layer.n_out {
                        for j in 0..layer.n_in {
                            gx[j] += w[o * layer.n_in + j] * g[o];
                        }
                    }
                }
                Op::Vqc { layer, x } => {
                    let vp = layer.vqc_params(params)?;
                    let vg = qsim::vqc_gradients(&self.values[*x], &vp, &g)?;
                    for (dst, src) in layer.angles.slice_mut(grads).iter_mut().zip(&vg.params) {
                        *dst += src;
                    }
                    let gx = acc(&mut adj, &self.values, *x);
                    for (dst, src) in gx.iter_mut().zip(&vg.input) {
                        *dst += src;
                    }
                }
                Op::Tanh(x) => {
                    let gx = acc(&mut adj, &self.values, *x);
                    for k in 0..g.len() {
                        gx[k] += g[k] * (1.0 - y[k] * y[k]);
                    }
                }
                Op::Sigmoid(x) => {
                    let gx = acc(&mut adj, &self.values, *x);
                    for k in 0..g.len() {
                        gx[k] += g[k] * y[k] * (1.0 - y[k]);
                    }
                }
                Op::Add(a, b) => {
                    for (dst, src) in acc(&mut adj, &self.values, *a).iter_mut().zip(&g) {
                        *dst += src;
                    }
                    for (dst, src) in acc(&mut adj, &self.values, *b).iter_mut().zip(&g) {
                        *dst += src;
                    }
                }
                Op::Sub(a, b) => {
                    for (dst, src) in acc(&mut adj, &self.values, *a).iter_mut().zip(&g) {
                        *dst += src;
                    }
                    for (dst, src) in acc(&mut adj, &self.values, *b).iter_mut().zip(&g) {
                        *dst -= src;
                    }
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (&self.values[*a], &self.values[*b]);
                    let ga: Vec<f64> = g.iter().zip(bv).map(|(g, b)| g * b).collect();
                    let gb: Vec<f64> = g.iter().zip(av).map(|(g, a)| g * a).collect();
                    for (dst, src) in acc(&mut adj, &self.values, *a).iter_mut().zip(&ga) {
                        *dst += src;
                    }
                    for (dst, src) in acc(&mut adj, &self.values, *b).iter_mut().zip(&gb) {
                        *dst += src;
                    }
                }
                Op::Scale(x, c) => {
                    for (dst, src) in acc(&mut adj, &self.values, *x).iter_mut().zip(&g) {
                        *dst += c * src;
                    }
                }
                Op::Concat(a, b) => {
                    let split = self.values[*a].len();
                    for (dst, src) in acc(&mut adj, &self.values, *a).iter_mut().zip(&g[..split]) {
                        *dst += src;
                    }
                    for (dst, src) in acc(&mut adj, &self.values, *b).iter_mut().zip(&g[split..]) {
                        *dst += src;
                    }
                }
                Op::Softmax(x) => {
                    let dot: f64 = g.iter().zip(y).map(|(g, y)| g * y).sum();
                    let gx = acc(&mut adj, &self.values, *x);
                    for k in 0..g.len() {
                        gx[k] += y[k] * (g[k] - dot);
                    }
                }
                Op::Log(x) => {
                    let xv = &self.values[*x];
                    let gx: Vec<f64> = g.iter().zip(xv).map(|(g, x)| g / x).collect();
                    for (dst, src) in acc(&mut adj, &self.values, *x).iter_mut().zip(&gx) {
                        *dst += src;
                    }
                }
                Op::Square(x) => {
                    let xv = &self.values[*x];
                    let gx: Vec<f64> = g.iter().zip(xv).map(|(g, x)| 2.0 * g * x).collect();
                    for (dst, src) in acc(&mut adj, &self.values, *x).iter_mut().zip(&gx) {
                        *dst += src;
                    }
                }
                Op::Sum(x) => {
                    for dst in acc(&mut adj, &self.values, *x).iter_mut() {
                        *dst += g[0];
                    }
                }
                Op::Pick(x, index) => {
                    acc(&mut adj, &self.values, *x)[*index] += g[0];
                }
            }
        }
        Ok(())
    }
}
