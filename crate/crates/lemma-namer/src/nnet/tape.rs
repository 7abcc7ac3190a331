//! Reverse-mode differentiation over vector-valued nodes.
//!
//! A forward pass records ops on a tape; `backward` walks the tape in reverse
//! and accumulates parameter gradients into a `GradStore`. Parameter tensors
//! are referenced by ops directly rather than copied onto the tape.

use super::tensor::{GradStore, ParamSet};

pub type NodeId = usize;

#[derive(Debug)]
enum Op {
    /// Constant input; no gradient flows.
    Const,
    /// Row `row` of the matrix parameter `param` (shape [rows, dim]).
    EmbedRow { param: usize, row: usize },
    /// W x with W the parameter `param` of shape [rows, cols].
    MatVec { param: usize, x: NodeId },
    /// W^T x with W the parameter `param` of shape [rows, cols].
    MatVecT { param: usize, x: NodeId },
    /// x + b with b the parameter `param`.
    AddParam { x: NodeId, param: usize },
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Concat(Vec<NodeId>),
    Softmax(NodeId),
    /// Scalar dot product of two equal-length vectors.
    Dot(NodeId, NodeId),
    /// Sum over i of weights[i] * vectors[i].
    WeightedSum { weights: NodeId, vectors: Vec<NodeId> },
    /// Elementwise multiply by a fixed mask (dropout with inverted scaling).
    MulMask { x: NodeId, mask: Vec<f64> },
    /// Pointer-generator mixture over vocab + per-example copy slots:
    /// out[w] = pgen * pv[w] + (1-pgen) * sum of attn[i] with token_ids[i]==w.
    Mix { pv: NodeId, pgen: NodeId, attn: NodeId, token_ids: Vec<usize> },
    /// -ln(max(p[idx], floor)).
    NegLogIndex { p: NodeId, idx: usize },
    /// Mean of scalar nodes.
    MeanScalars(Vec<NodeId>),
}

struct Node {
    value: Vec<f64>,
    op: Op,
}

pub struct Tape<'p> {
    params: &'p ParamSet,
    nodes: Vec<Node>,
}

const PROB_FLOOR: f64 = 1e-30;

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamSet) -> Tape<'p> {
        Tape { params, nodes: Vec::with_capacity(1024) }
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.nodes[id].value
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        debug_assert_eq!(self.nodes[id].value.len(), 1);
        self.nodes[id].value[0]
    }

    fn push(&mut self, value: Vec<f64>, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        self.nodes.len() - 1
    }

    pub fn constant(&mut self, value: Vec<f64>) -> NodeId {
        self.push(value, Op::Const)
    }

    pub fn zeros(&mut self, len: usize) -> NodeId {
        self.constant(vec![0.0; len])
    }

    pub fn embed_row(&mut self, param: usize, row: usize) -> NodeId {
        let t = self.params.get(param);
        debug_assert_eq!(t.shape.len(), 2);
        let dim = t.shape[1];
        let value = t.data[row * dim..(row + 1) * dim].to_vec();
        self.push(value, Op::EmbedRow { param, row })
    }

    pub fn matvec(&mut self, param: usize, x: NodeId) -> NodeId {
        let w = self.params.get(param);
        let (rows, cols) = (w.shape[0], w.shape[1]);
        let xv = &self.nodes[x].value;
        debug_assert_eq!(xv.len(), cols);
        let mut value = vec![0.0; rows];
        for r in 0..rows {
            let row = &w.data[r * cols..(r + 1) * cols];
            value[r] = row.iter().zip(xv).map(|(a, b)| a * b).sum();
        }
        self.push(value, Op::MatVec { param, x })
    }

    pub fn matvec_t(&mut self, param: usize, x: NodeId) -> NodeId {
        let w = self.params.get(param);
        let (rows, cols) = (w.shape[0], w.shape[1]);
        let xv = &self.nodes[x].value;
        debug_assert_eq!(xv.len(), rows);
        let mut value = vec![0.0; cols];
        for r in 0..rows {
            let row = &w.data[r * cols..(r + 1) * cols];
            let xr = xv[r];
            for (v, wv) in value.iter_mut().zip(row) {
                *v += wv * xr;
            }
        }
        self.push(value, Op::MatVecT { param, x })
    }

    pub fn add_param(&mut self, x: NodeId, param: usize) -> NodeId {
        let b = &self.params.get(param).data;
        let value = self.nodes[x].value.iter().zip(b).map(|(a, c)| a + c).collect();
        self.push(value, Op::AddParam { x, param })
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.nodes[a]
            .value
            .iter()
            .zip(&self.nodes[b].value)
            .map(|(x, y)| x + y)
            .collect();
        self.push(value, Op::Add(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.nodes[a]
            .value
            .iter()
            .zip(&self.nodes[b].value)
            .map(|(x, y)| x * y)
            .collect();
        self.push(value, Op::Mul(a, b))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let value = self.nodes[x].value.iter().map(|&v| 1.0 / (1.0 + (-v).exp())).collect();
        self.push(value, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let value = self.nodes[x].value.iter().map(|&v| v.tanh()).collect();
        self.push(value, Op::Tanh(x))
    }

    pub fn concat(&mut self, parts: Vec<NodeId>) -> NodeId {
        let mut value = Vec::new();
        for &p in &parts {
            value.extend_from_slice(&self.nodes[p].value);
        }
        self.push(value, Op::Concat(parts))
    }

    pub fn softmax(&mut self, x: NodeId) -> NodeId {
        let xs = &self.nodes[x].value;
        let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = xs.iter().map(|&v| (v - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        let value = exps.into_iter().map(|e| e / sum).collect();
        self.push(value, Op::Softmax(x))
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value: f64 = self.nodes[a]
            .value
            .iter()
            .zip(&self.nodes[b].value)
            .map(|(x, y)| x * y)
            .sum();
        self.push(vec![value], Op::Dot(a, b))
    }

    pub fn weighted_sum(&mut self, weights: NodeId, vectors: Vec<NodeId>) -> NodeId {
        let dim = self.nodes[vectors[0]].value.len();
        let mut value = vec![0.0; dim];
        for (i, &v) in vectors.iter().enumerate() {
            let w = self.nodes[weights].value[i];
            for (o, x) in value.iter_mut().zip(&self.nodes[v].value) {
                *o += w * x;
            }
        }
        self.push(value, Op::WeightedSum { weights, vectors })
    }

    pub fn mul_mask(&mut self, x: NodeId, mask: Vec<f64>) -> NodeId {
        let value = self.nodes[x].value.iter().zip(&mask).map(|(a, m)| a * m).collect();
        self.push(value, Op::MulMask { x, mask })
    }

    /// Copy-augmented output distribution. `token_ids[i]` maps encoder
    /// position i into [0, vocab + n_copy_slots); positions aligned with the
    /// attention vector.
    pub fn mix_copy(
        &mut self,
        pv: NodeId,
        pgen: NodeId,
        attn: NodeId,
        token_ids: Vec<usize>,
        ext_size: usize,
    ) -> NodeId {
        let g = self.nodes[pgen].value[0];
        let mut value = vec![0.0; ext_size];
        for (o, p) in value.iter_mut().zip(&self.nodes[pv].value) {
            *o = g * p;
        }
        for (i, &tid) in token_ids.iter().enumerate() {
            value[tid] += (1.0 - g) * self.nodes[attn].value[i];
        }
        self.push(value, Op::Mix { pv, pgen, attn, token_ids })
    }

    pub fn neg_log_index(&mut self, p: NodeId, idx: usize) -> NodeId {
        let v = self.nodes[p].value[idx].max(PROB_FLOOR);
        self.push(vec![-v.ln()], Op::NegLogIndex { p, idx })
    }

    pub fn mean_scalars(&mut self, parts: Vec<NodeId>) -> NodeId {
        let sum: f64 = parts.iter().map(|&p| self.nodes[p].value[0]).sum();
        let value = vec![sum / parts.len() as f64];
        self.push(value, Op::MeanScalars(parts))
    }

    /// Accumulate d(loss)/d(param) into `grads` for a scalar loss node.
    pub fn backward(&self, loss: NodeId, grads: &mut GradStore) {
        let mut node_grads: Vec<Vec<f64>> = self
            .nodes
            .iter()
            .map(|n| vec![0.0; n.value.len()])
            .collect();
        node_grads[loss][0] = 1.0;
        for id in (0..=loss).rev() {
            if node_grads[id].iter().all(|&g| g == 0.0) {
                continue;
            }
            let g = std::mem::take(&mut node_grads[id]);
            match &self.nodes[id].op {
                Op::Const => {}
                Op::EmbedRow { param, row } => {
                    let dim = g.len();
                    let dst = &mut grads.grads[*param][row * dim..(row + 1) * dim];
                    for (d, gv) in dst.iter_mut().zip(&g) {
                        *d += gv;
                    }
                }
                Op::MatVec { param, x } => {
                    let w = self.params.get(*param);
                    let (rows, cols) = (w.shape[0], w.shape[1]);
                    let xv = self.nodes[*x].value.clone();
                    let dw = &mut grads.grads[*param];
                    let mut dx = vec![0.0; cols];
                    for r in 0..rows {
                        let gr = g[r];
                        if gr == 0.0 {
                            continue;
                        }
                        let row = &w.data[r * cols..(r + 1) * cols];
                        let drow = &mut dw[r * cols..(r + 1) * cols];
                        for c in 0..cols {
                            drow[c] += gr * xv[c];
                            dx[c] += row[c] * gr;
                        }
                    }
                    accumulate(&mut node_grads[*x], &dx);
                }
                Op::MatVecT { param, x } => {
                    let w = self.params.get(*param);
                    let (rows, cols) = (w.shape[0], w.shape[1]);
                    let xv = self.nodes[*x].value.clone();
                    let dw = &mut grads.grads[*param];
                    let mut dx = vec![0.0; rows];
                    for r in 0..rows {
                        let row = &w.data[r * cols..(r + 1) * cols];
                        let drow = &mut dw[r * cols..(r + 1) * cols];
                        let xr = xv[r];
                        let mut acc = 0.0;
                        for c in 0..cols {
                            drow[c] += xr * g[c];
                            acc += row[c] * g[c];
                        }
                        dx[r] = acc;
                    }
                    accumulate(&mut node_grads[*x], &dx);
                }
                Op::AddParam { x, param } => {
                    accumulate(&mut grads.grads[*param], &g);
                    accumulate(&mut node_grads[*x], &g);
                }
                Op::Add(a, b) => {
                    accumulate(&mut node_grads[*a], &g);
                    accumulate(&mut node_grads[*b], &g);
                }
                Op::Mul(a, b) => {
                    let av = self.nodes[*a].value.clone();
                    let bv = self.nodes[*b].value.clone();
                    for (i, gv) in g.iter().enumerate() {
                        node_grads[*a][i] += gv * bv[i];
                        node_grads[*b][i] += gv * av[i];
                    }
                }
                Op::Sigmoid(x) => {
                    let y = &self.nodes[id].value;
                    for (i, gv) in g.iter().enumerate() {
                        node_grads[*x][i] += gv * y[i] * (1.0 - y[i]);
                    }
                }
                Op::Tanh(x) => {
                    let y = &self.nodes[id].value;
                    for (i, gv) in g.iter().enumerate() {
                        node_grads[*x][i] += gv * (1.0 - y[i] * y[i]);
                    }
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let len = self.nodes[p].value.len();
                        accumulate(&mut node_grads[p], &g[offset..offset + len]);
                        offset += len;
                    }
                }
                Op::Softmax(x) => {
                    let y = &self.nodes[id].value;
                    let dot: f64 = y.iter().zip(&g).map(|(a, b)| a * b).sum();
                    for (i, gv) in g.iter().enumerate() {
                        node_grads[*x][i] += y[i] * (gv - dot);
                    }
                }
                Op::Dot(a, b) => {
                    let av = self.nodes[*a].value.clone();
                    let bv = self.nodes[*b].value.clone();
                    let gv = g[0];
                    for i in 0..av.len() {
                        node_grads[*a][i] += gv * bv[i];
                        node_grads[*b][i] += gv * av[i];
                    }
                }
                Op::WeightedSum { weights, vectors } => {
                    for (i, &v) in vectors.iter().enumerate() {
                        let w = self.nodes[*weights].value[i];
                        let vv = self.nodes[v].value.clone();
                        let mut dw = 0.0;
                        for (j, gv) in g.iter().enumerate() {
                            node_grads[v][j] += w * gv;
                            dw += gv * vv[j];
                        }
                        node_grads[*weights][i] += dw;
                    }
                }
                Op::MulMask { x, mask } => {
                    for (i, gv) in g.iter().enumerate() {
                        node_grads[*x][i] += gv * mask[i];
                    }
                }
                Op::Mix { pv, pgen, attn, token_ids } => {
                    let gval = self.nodes[*pgen].value[0];
                    let pvv = self.nodes[*pv].value.clone();
                    let av = self.nodes[*attn].value.clone();
                    let mut dpgen = 0.0;
                    for (i, p) in pvv.iter().enumerate() {
                        node_grads[*pv][i] += gval * g[i];
                        dpgen += p * g[i];
                    }
                    for (i, &tid) in token_ids.iter().enumerate() {
                        node_grads[*attn][i] += (1.0 - gval) * g[tid];
                        dpgen -= av[i] * g[tid];
                    }
                    node_grads[*pgen][0] += dpgen;
                }
                Op::NegLogIndex { p, idx } => {
                    let v = self.nodes[*p].value[*idx].max(PROB_FLOOR);
                    node_grads[*p][*idx] += -g[0] / v;
                }
                Op::MeanScalars(parts) => {
                    let share = g[0] / parts.len() as f64;
                    for &p in parts {
                        node_grads[p][0] += share;
                    }
                }
            }
        }
    }
}

fn accumulate(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}
