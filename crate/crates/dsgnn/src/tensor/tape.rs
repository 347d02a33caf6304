//! Reverse-mode differentiation tape over dense tensors and the sparse
//! graph aggregation ops the network needs.
//!
//! A tape is built per forward pass. Ops validate shapes eagerly, cache
//! what their backward rule needs, and `backward` replays the record in
//! reverse, accumulating gradients for every parameter reachable from the
//! loss. Parameters that never influence the loss get exactly-zero
//! gradients.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::hashing::PhiTable;
use crate::tensor::{kernels, Scalar, Tensor};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Row-count threshold below which graph/row ops stay sequential.
#[cfg(feature = "parallel")]
const PAR_MIN_ROWS: usize = 512;

/// Handle to a value recorded on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarId(pub(crate) usize);

/// Symmetric weighted sparse matrix in CSR form (used for the renormalized
/// adjacency of the baseline convolution). Symmetry makes the operator its
/// own adjoint.
#[derive(Debug, Clone)]
pub struct SymCsr<T> {
    pub n: usize,
    pub offsets: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<T>,
}

/// Per-node convolution task assignment; `None` rows fall back to the
/// shared matrix / global hash map only.
#[derive(Debug, Clone)]
pub struct TaskAssign {
    pub task_of_node: Vec<Option<usize>>,
    pub n_tasks: usize,
}

/// Hash aggregation plan: each row goes through the global table plus its
/// task's table.
#[derive(Debug, Clone)]
pub struct HashRowPlan {
    pub global: PhiTable,
    pub per_task: Vec<PhiTable>,
    pub task_of_node: Vec<Option<usize>>,
}

/// Degree-sliced pooling plan over a (possibly disjoint-union) node set.
#[derive(Debug, Clone)]
pub struct PoolPlan {
    pub n_graphs: usize,
    pub graph_of_node: Vec<usize>,
    pub slot_of_node: Vec<usize>,
    pub n_slots: usize,
    pub nodes_per_graph: Vec<usize>,
}

enum Op<T: Scalar> {
    Leaf,
    MatMul { a: VarId, b: VarId },
    Add { a: VarId, b: VarId },
    MulElem { a: VarId, b: VarId },
    Relu { a: VarId },
    ConcatCols { a: VarId, b: VarId },
    NeighborSum { a: VarId, graph: Arc<Graph> },
    SymSpmm { a: VarId, adj: Arc<SymCsr<T>> },
    DegreeMatMul { s: VarId, wg: VarId, wdeg: Vec<VarId>, assign: Arc<TaskAssign> },
    HashAgg { s: VarId, plan: Arc<HashRowPlan> },
    Sum { a: VarId },
    SumSq { a: VarId },
    Scale { a: VarId, alpha: T },
    SoftmaxXent { logits: VarId, labels: Arc<Vec<u32>>, mask: Arc<Vec<usize>>, softmax: Tensor<T> },
    DegreePool { h: VarId, plan: Arc<PoolPlan> },
    MeanPool { h: VarId, plan: Arc<PoolPlan> },
}

struct Node<T: Scalar> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Reverse-mode record of one forward pass.
pub struct Tape<T: Scalar> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> VarId {
        debug_assert!(value.all_finite(), "non-finite value produced by forward op");
        self.nodes.push(Node { value, op, needs_grad });
        VarId(self.nodes.len() - 1)
    }

    /// Registers a trainable leaf.
    pub fn param(&mut self, value: Tensor<T>) -> VarId {
        self.push(value, Op::Leaf, true)
    }

    /// Registers a non-trainable leaf (inputs, dropout masks).
    pub fn constant(&mut self, value: Tensor<T>) -> VarId {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, id: VarId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    pub fn scalar(&self, id: VarId) -> T {
        debug_assert_eq!(self.nodes[id.0].value.shape(), (1, 1));
        self.nodes[id.0].value.get(0, 0)
    }

    fn needs(&self, id: VarId) -> bool {
        self.nodes[id.0].needs_grad
    }

    pub fn matmul(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let (ar, ac) = self.value(a).shape();
        let (br, bc) = self.value(b).shape();
        if ac != br {
            return Err(Error::shape(format!("inner dims equal ({ar}x{ac})"), format!("{br}x{bc}")));
        }
        let value = kernels::matmul(self.value(a), self.value(b));
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::MatMul { a, b }, needs))
    }

    pub fn add(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let value = self.value(a).add(self.value(b))?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Add { a, b }, needs))
    }

    pub fn mul_elem(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::shape(
                format!("{:?}", self.value(a).shape()),
                format!("{:?}", self.value(b).shape()),
            ));
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x * y)
            .collect();
        let (r, c) = self.value(a).shape();
        let value = Tensor::from_vec(r, c, data)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::MulElem { a, b }, needs))
    }

    pub fn relu(&mut self, a: VarId) -> VarId {
        let value = self.value(a).map(|v| v.max(T::ZERO));
        let needs = self.needs(a);
        self.push(value, Op::Relu { a }, needs)
    }

    pub fn concat_cols(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let (ar, ac) = self.value(a).shape();
        let (br, bc) = self.value(b).shape();
        if ar != br {
            return Err(Error::shape(format!("{ar} rows"), format!("{br} rows")));
        }
        let mut value = Tensor::zeros(ar, ac + bc);
        for r in 0..ar {
            value.row_mut(r)[..ac].copy_from_slice(self.value(a).row(r));
            value.row_mut(r)[ac..].copy_from_slice(self.value(b).row(r));
        }
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::ConcatCols { a, b }, needs))
    }

    /// Row v of the output is the sum of input rows over v's neighbors,
    /// accumulated in ascending node-id order so the result does not depend
    /// on how the CSR stores each neighbor list.
    pub fn neighbor_sum(&mut self, graph: &Arc<Graph>, a: VarId) -> Result<VarId> {
        if self.value(a).rows() != graph.n() {
            return Err(Error::shape(
                format!("{} rows", graph.n()),
                format!("{}", self.value(a).rows()),
            ));
        }
        let value = neighbor_sum_value(graph, self.value(a));
        let needs = self.needs(a);
        Ok(self.push(value, Op::NeighborSum { a, graph: Arc::clone(graph) }, needs))
    }

    pub fn sym_spmm(&mut self, adj: &Arc<SymCsr<T>>, a: VarId) -> Result<VarId> {
        if self.value(a).rows() != adj.n {
            return Err(Error::shape(
                format!("{} rows", adj.n),
                format!("{}", self.value(a).rows()),
            ));
        }
        let value = sym_spmm_value(adj, self.value(a));
        let needs = self.needs(a);
        Ok(self.push(value, Op::SymSpmm { a, adj: Arc::clone(adj) }, needs))
    }

    /// Multi-task product: row v of the output is `s[v] * (Wg + W_task(v))`,
    /// with fallback rows using `Wg` alone.
    pub fn degree_matmul(
        &mut self,
        s: VarId,
        wg: VarId,
        wdeg: &[VarId],
        assign: &Arc<TaskAssign>,
    ) -> Result<VarId> {
        let (n, f) = self.value(s).shape();
        let (gr, gc) = self.value(wg).shape();
        if gr != f {
            return Err(Error::shape(format!("{f} weight rows"), format!("{gr}")));
        }
        if assign.task_of_node.len() != n {
            return Err(Error::shape(format!("{n} task entries"), format!("{}", assign.task_of_node.len())));
        }
        if assign.n_tasks != wdeg.len() {
            return Err(Error::shape(
                format!("{} task matrices", assign.n_tasks),
                format!("{}", wdeg.len()),
            ));
        }
        for &w in wdeg {
            if self.value(w).shape() != (gr, gc) {
                return Err(Error::shape(format!("{gr}x{gc}"), format!("{:?}", self.value(w).shape())));
            }
        }
        // materialize Wg + W_t once per task
        let wg_val = self.value(wg).clone();
        let combined: Vec<Tensor<T>> = wdeg
            .iter()
            .map(|&w| wg_val.add(self.value(w)).expect("checked shapes"))
            .collect();
        let value = degree_matmul_value(self.value(s), &wg_val, &combined, &assign.task_of_node, gc);
        let needs = self.needs(s) || self.needs(wg) || wdeg.iter().any(|&w| self.needs(w));
        Ok(self.push(
            value,
            Op::DegreeMatMul { s, wg, wdeg: wdeg.to_vec(), assign: Arc::clone(assign) },
            needs,
        ))
    }

    /// Row v of the output is `phi_g(s[v]) + phi_task(v)(s[v])`; fallback
    /// rows use the global map alone.
    pub fn hash_agg(&mut self, s: VarId, plan: &Arc<HashRowPlan>) -> Result<VarId> {
        let (n, f) = self.value(s).shape();
        if plan.task_of_node.len() != n {
            return Err(Error::shape(format!("{n} task entries"), format!("{}", plan.task_of_node.len())));
        }
        if plan.global.input_dim() != f
            || plan.per_task.iter().any(|t| t.input_dim() != f || t.m != plan.global.m)
        {
            return Err(Error::shape(
                format!("hash tables over {f} inputs / m={}", plan.global.m),
                "mismatched plan".to_string(),
            ));
        }
        let value = hash_agg_value(self.value(s), plan);
        let needs = self.needs(s);
        Ok(self.push(value, Op::HashAgg { s, plan: Arc::clone(plan) }, needs))
    }

    pub fn sum(&mut self, a: VarId) -> VarId {
        let value = Tensor::from_vec(1, 1, vec![self.value(a).sum()]).expect("1x1");
        let needs = self.needs(a);
        self.push(value, Op::Sum { a }, needs)
    }

    pub fn sumsq(&mut self, a: VarId) -> VarId {
        let v = self.value(a);
        let value = Tensor::from_vec(1, 1, vec![v.dot(v)]).expect("1x1");
        let needs = self.needs(a);
        self.push(value, Op::SumSq { a }, needs)
    }

    pub fn scale(&mut self, a: VarId, alpha: T) -> VarId {
        let value = self.value(a).scale(alpha);
        let needs = self.needs(a);
        self.push(value, Op::Scale { a, alpha }, needs)
    }

    /// Mean over masked rows of the softmax cross-entropy of each row's
    /// labeled class. Returns a 1x1 tensor.
    pub fn softmax_xent(
        &mut self,
        logits: VarId,
        labels: &Arc<Vec<u32>>,
        mask: &Arc<Vec<usize>>,
    ) -> Result<VarId> {
        let (n, c) = self.value(logits).shape();
        if mask.is_empty() {
            return Err(Error::Validation("empty loss mask".into()));
        }
        if labels.len() != n {
            return Err(Error::shape(format!("{n} labels"), format!("{}", labels.len())));
        }
        for &v in mask.iter() {
            if v >= n {
                return Err(Error::Validation(format!("mask index {v} out of range 0..{n}")));
            }
            if (labels[v] as usize) >= c {
                return Err(Error::Validation(format!(
                    "label {} at row {v} outside {c} classes",
                    labels[v]
                )));
            }
        }
        let logits_val = self.value(logits);
        let mut softmax = Tensor::zeros(n, c);
        let mut total = T::ZERO;
        for &v in mask.iter() {
            let row = logits_val.row(v);
            let mut maxv = row[0];
            for &x in row {
                maxv = maxv.max(x);
            }
            let mut denom = T::ZERO;
            for &x in row {
                denom += (x - maxv).exp();
            }
            let out = softmax.row_mut(v);
            for (o, &x) in out.iter_mut().zip(row) {
                *o = (x - maxv).exp() / denom;
            }
            let p = out[labels[v] as usize];
            total += -(p.ln());
        }
        let inv = T::ONE / T::from_f64(mask.len() as f64);
        let value = Tensor::from_vec(1, 1, vec![total * inv])?;
        let needs = self.needs(logits);
        Ok(self.push(
            value,
            Op::SoftmaxXent { logits, labels: Arc::clone(labels), mask: Arc::clone(mask), softmax },
            needs,
        ))
    }

    /// Degree-sliced readout: output row g holds, per degree slot, the sum
    /// of feature rows of g's nodes in that slot. Shape `n_graphs x (slots*w)`.
    pub fn degree_pool(&mut self, h: VarId, plan: &Arc<PoolPlan>) -> Result<VarId> {
        let (n, w) = self.value(h).shape();
        if plan.graph_of_node.len() != n || plan.slot_of_node.len() != n {
            return Err(Error::shape(format!("{n} plan entries"), format!("{}", plan.graph_of_node.len())));
        }
        let mut value = Tensor::zeros(plan.n_graphs, plan.n_slots * w);
        let hv = self.value(h);
        for v in 0..n {
            let g = plan.graph_of_node[v];
            let base = plan.slot_of_node[v] * w;
            let out = value.row_mut(g);
            for (j, &x) in hv.row(v).iter().enumerate() {
                out[base + j] += x;
            }
        }
        let needs = self.needs(h);
        Ok(self.push(value, Op::DegreePool { h, plan: Arc::clone(plan) }, needs))
    }

    /// Mean readout per graph (the pooling ablation). Shape `n_graphs x w`.
    pub fn mean_pool(&mut self, h: VarId, plan: &Arc<PoolPlan>) -> Result<VarId> {
        let (n, w) = self.value(h).shape();
        if plan.graph_of_node.len() != n {
            return Err(Error::shape(format!("{n} plan entries"), format!("{}", plan.graph_of_node.len())));
        }
        let mut value = Tensor::zeros(plan.n_graphs, w);
        let hv = self.value(h);
        for v in 0..n {
            let g = plan.graph_of_node[v];
            let inv = T::ONE / T::from_f64(plan.nodes_per_graph[g] as f64);
            let out = value.row_mut(g);
            for (j, &x) in hv.row(v).iter().enumerate() {
                out[j] += x * inv;
            }
        }
        let needs = self.needs(h);
        Ok(self.push(value, Op::MeanPool { h, plan: Arc::clone(plan) }, needs))
    }

    /// Accumulates gradients of a scalar loss with respect to every
    /// recorded node, walking the record in reverse execution order.
    pub fn backward(&self, loss: VarId) -> Result<Gradients<T>> {
        if self.value(loss).shape() != (1, 1) {
            return Err(Error::shape("1x1 loss", format!("{:?}", self.value(loss).shape())));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::from_vec(1, 1, vec![T::ONE])?);

        for id in (0..=loss.0).rev() {
            if grads[id].is_none() || !self.nodes[id].needs_grad {
                continue;
            }
            let g = grads[id].take().expect("checked above");
            self.backprop_node(id, &g, &mut grads);
            grads[id] = Some(g);
        }

        // unused parameters get exactly-zero gradients
        for (id, node) in self.nodes.iter().enumerate() {
            if node.needs_grad && matches!(node.op, Op::Leaf) && grads[id].is_none() {
                let (r, c) = node.value.shape();
                grads[id] = Some(Tensor::zeros(r, c));
            }
        }
        Ok(Gradients { grads })
    }

    fn backprop_node(&self, id: usize, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let add_to = |grads: &mut [Option<Tensor<T>>], target: VarId, delta: Tensor<T>| {
            match &mut grads[target.0] {
                Some(acc) => {
                    for (a, d) in acc.data_mut().iter_mut().zip(delta.data()) {
                        *a += *d;
                    }
                }
                slot @ None => *slot = Some(delta),
            }
        };
        match &self.nodes[id].op {
            Op::Leaf => {}
            Op::MatMul { a, b } => {
                if self.needs(*a) {
                    add_to(grads, *a, kernels::matmul_nt(g, self.value(*b)));
                }
                if self.needs(*b) {
                    add_to(grads, *b, kernels::matmul_tn(self.value(*a), g));
                }
            }
            Op::Add { a, b } => {
                if self.needs(*a) {
                    add_to(grads, *a, g.clone());
                }
                if self.needs(*b) {
                    add_to(grads, *b, g.clone());
                }
            }
            Op::MulElem { a, b } => {
                if self.needs(*a) {
                    let (r, c) = g.shape();
                    let data = g
                        .data()
                        .iter()
                        .zip(self.value(*b).data())
                        .map(|(&gv, &bv)| gv * bv)
                        .collect();
                    add_to(grads, *a, Tensor::from_vec(r, c, data).expect("same shape"));
                }
                if self.needs(*b) {
                    let (r, c) = g.shape();
                    let data = g
                        .data()
                        .iter()
                        .zip(self.value(*a).data())
                        .map(|(&gv, &av)| gv * av)
                        .collect();
                    add_to(grads, *b, Tensor::from_vec(r, c, data).expect("same shape"));
                }
            }
            Op::Relu { a } => {
                if self.needs(*a) {
                    let (r, c) = g.shape();
                    // subgradient at exactly zero is zero
                    let data = g
                        .data()
                        .iter()
                        .zip(self.value(*a).data())
                        .map(|(&gv, &av)| if av > T::ZERO { gv } else { T::ZERO })
                        .collect();
                    add_to(grads, *a, Tensor::from_vec(r, c, data).expect("same shape"));
                }
            }
            Op::ConcatCols { a, b } => {
                let (r, ac) = self.value(*a).shape();
                let bc = self.value(*b).cols();
                if self.needs(*a) {
                    let mut da = Tensor::zeros(r, ac);
                    for row in 0..r {
                        da.row_mut(row).copy_from_slice(&g.row(row)[..ac]);
                    }
                    add_to(grads, *a, da);
                }
                if self.needs(*b) {
                    let mut db = Tensor::zeros(r, bc);
                    for row in 0..r {
                        db.row_mut(row).copy_from_slice(&g.row(row)[ac..]);
                    }
                    add_to(grads, *b, db);
                }
            }
            Op::NeighborSum { a, graph } => {
                if self.needs(*a) {
                    // adjacency is symmetric: the adjoint is the same operator
                    add_to(grads, *a, neighbor_sum_value(graph, g));
                }
            }
            Op::SymSpmm { a, adj } => {
                if self.needs(*a) {
                    add_to(grads, *a, sym_spmm_value(adj, g));
                }
            }
            Op::DegreeMatMul { s, wg, wdeg, assign } => {
                let s_val = self.value(*s);
                let (n, f) = s_val.shape();
                let d = g.cols();
                if self.needs(*s) {
                    let wg_val = self.value(*wg).clone();
                    let combined: Vec<Tensor<T>> = wdeg
                        .iter()
                        .map(|&w| wg_val.add(self.value(w)).expect("checked at forward"))
                        .collect();
                    let mut ds = Tensor::zeros(n, f);
                    grad_s_rows(&mut ds, g, &wg_val, &combined, &assign.task_of_node);
                    add_to(grads, *s, ds);
                }
                if self.needs(*wg) {
                    // every row contributes through Wg
                    add_to(grads, *wg, kernels::matmul_tn(s_val, g));
                }
                for (t, &w) in wdeg.iter().enumerate() {
                    if !self.needs(w) {
                        continue;
                    }
                    let mut dw = Tensor::zeros(f, d);
                    for v in 0..n {
                        if assign.task_of_node[v] == Some(t) {
                            let sv = s_val.row(v);
                            let gv = g.row(v);
                            for (i, &si) in sv.iter().enumerate() {
                                let out = &mut dw.row_mut(i)[..];
                                for (j, &gj) in gv.iter().enumerate() {
                                    out[j] += si * gj;
                                }
                            }
                        }
                    }
                    add_to(grads, w, dw);
                }
            }
            Op::HashAgg { s, plan } => {
                if self.needs(*s) {
                    let (n, f) = self.value(*s).shape();
                    let mut ds = Tensor::zeros(n, f);
                    for v in 0..n {
                        let gv = g.row(v);
                        let out = ds.row_mut(v);
                        plan.global.adjoint_into(gv, out);
                        if let Some(t) = plan.task_of_node[v] {
                            plan.per_task[t].adjoint_into(gv, out);
                        }
                    }
                    add_to(grads, *s, ds);
                }
            }
            Op::Sum { a } => {
                if self.needs(*a) {
                    let (r, c) = self.value(*a).shape();
                    add_to(grads, *a, Tensor::full(r, c, g.get(0, 0)));
                }
            }
            Op::SumSq { a } => {
                if self.needs(*a) {
                    let scale = g.get(0, 0) * (T::ONE + T::ONE);
                    add_to(grads, *a, self.value(*a).scale(scale));
                }
            }
            Op::Scale { a, alpha } => {
                if self.needs(*a) {
                    add_to(grads, *a, g.scale(*alpha));
                }
            }
            Op::SoftmaxXent { logits, labels, mask, softmax } => {
                if self.needs(*logits) {
                    let (n, c) = self.value(*logits).shape();
                    let gscale = g.get(0, 0) / T::from_f64(mask.len() as f64);
                    let mut dl = Tensor::zeros(n, c);
                    for &v in mask.iter() {
                        let p = softmax.row(v);
                        let out = dl.row_mut(v);
                        for (j, &pj) in p.iter().enumerate() {
                            let y = if labels[v] as usize == j { T::ONE } else { T::ZERO };
                            out[j] = (pj - y) * gscale;
                        }
                    }
                    add_to(grads, *logits, dl);
                }
            }
            Op::DegreePool { h, plan } => {
                if self.needs(*h) {
                    let (n, w) = self.value(*h).shape();
                    let mut dh = Tensor::zeros(n, w);
                    for v in 0..n {
                        let src = g.row(plan.graph_of_node[v]);
                        let base = plan.slot_of_node[v] * w;
                        dh.row_mut(v).copy_from_slice(&src[base..base + w]);
                    }
                    add_to(grads, *h, dh);
                }
            }
            Op::MeanPool { h, plan } => {
                if self.needs(*h) {
                    let (n, w) = self.value(*h).shape();
                    let mut dh = Tensor::zeros(n, w);
                    for v in 0..n {
                        let gi = plan.graph_of_node[v];
                        let inv = T::ONE / T::from_f64(plan.nodes_per_graph[gi] as f64);
                        let src = g.row(gi);
                        for (j, o) in dh.row_mut(v).iter_mut().enumerate() {
                            *o = src[j] * inv;
                        }
                    }
                    add_to(grads, *h, dh);
                }
            }
        }
    }
}

/// Gradient store produced by [`Tape::backward`].
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, id: VarId) -> Option<&Tensor<T>> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }
}

fn accumulate_sorted_row<T: Scalar>(h: &Tensor<T>, ids: &[usize], out: &mut [T]) {
    for &u in ids {
        for (o, &x) in out.iter_mut().zip(h.row(u)) {
            *o += x;
        }
    }
}

fn neighbor_sum_row<T: Scalar>(graph: &Graph, h: &Tensor<T>, v: usize, out: &mut [T]) {
    if graph.neighbors_sorted() {
        accumulate_sorted_row(h, graph.neighbors(v), out);
    } else {
        // re-sort so summation order is storage-independent
        let mut ids: Vec<usize> = graph.neighbors(v).to_vec();
        ids.sort_unstable();
        accumulate_sorted_row(h, &ids, out);
    }
}

pub fn neighbor_sum_value<T: Scalar>(graph: &Graph, h: &Tensor<T>) -> Tensor<T> {
    let (n, w) = h.shape();
    let mut out = Tensor::zeros(n, w);
    #[cfg(feature = "parallel")]
    {
        if n >= PAR_MIN_ROWS {
            out.data_mut()
                .par_chunks_mut(w.max(1))
                .enumerate()
                .for_each(|(v, row)| neighbor_sum_row(graph, h, v, row));
            return out;
        }
    }
    for v in 0..n {
        neighbor_sum_row(graph, h, v, out.row_mut(v));
    }
    out
}

fn sym_spmm_row<T: Scalar>(adj: &SymCsr<T>, h: &Tensor<T>, v: usize, out: &mut [T]) {
    for e in adj.offsets[v]..adj.offsets[v + 1] {
        let coeff = adj.vals[e];
        for (o, &x) in out.iter_mut().zip(h.row(adj.cols[e])) {
            *o += coeff * x;
        }
    }
}

fn sym_spmm_value<T: Scalar>(adj: &SymCsr<T>, h: &Tensor<T>) -> Tensor<T> {
    let (n, w) = h.shape();
    let mut out = Tensor::zeros(n, w);
    #[cfg(feature = "parallel")]
    {
        if n >= PAR_MIN_ROWS {
            out.data_mut()
                .par_chunks_mut(w.max(1))
                .enumerate()
                .for_each(|(v, row)| sym_spmm_row(adj, h, v, row));
            return out;
        }
    }
    for v in 0..n {
        sym_spmm_row(adj, h, v, out.row_mut(v));
    }
    out
}

fn degree_matmul_row<T: Scalar>(
    s: &Tensor<T>,
    wg: &Tensor<T>,
    combined: &[Tensor<T>],
    task: Option<usize>,
    v: usize,
    out: &mut [T],
) {
    let m = match task {
        Some(t) => &combined[t],
        None => wg,
    };
    for (k, &sv) in s.row(v).iter().enumerate() {
        for (o, &mv) in out.iter_mut().zip(m.row(k)) {
            *o += sv * mv;
        }
    }
}

fn degree_matmul_value<T: Scalar>(
    s: &Tensor<T>,
    wg: &Tensor<T>,
    combined: &[Tensor<T>],
    tasks: &[Option<usize>],
    d_out: usize,
) -> Tensor<T> {
    let n = s.rows();
    let mut out = Tensor::zeros(n, d_out);
    #[cfg(feature = "parallel")]
    {
        if n >= PAR_MIN_ROWS {
            out.data_mut()
                .par_chunks_mut(d_out.max(1))
                .enumerate()
                .for_each(|(v, row)| degree_matmul_row(s, wg, combined, tasks[v], v, row));
            return out;
        }
    }
    for v in 0..n {
        degree_matmul_row(s, wg, combined, tasks[v], v, out.row_mut(v));
    }
    out
}

fn grad_s_rows<T: Scalar>(
    ds: &mut Tensor<T>,
    g: &Tensor<T>,
    wg: &Tensor<T>,
    combined: &[Tensor<T>],
    tasks: &[Option<usize>],
) {
    let f = ds.cols();
    let row_fn = |v: usize, out: &mut [T]| {
        let m = match tasks[v] {
            Some(t) => &combined[t],
            None => wg,
        };
        let gv = g.row(v);
        for (i, o) in out.iter_mut().enumerate() {
            let mrow = m.row(i);
            let mut acc = T::ZERO;
            for (&gj, &mj) in gv.iter().zip(mrow) {
                acc += gj * mj;
            }
            *o = acc;
        }
    };
    #[cfg(feature = "parallel")]
    {
        if ds.rows() >= PAR_MIN_ROWS {
            ds.data_mut()
                .par_chunks_mut(f.max(1))
                .enumerate()
                .for_each(|(v, row)| row_fn(v, row));
            return;
        }
    }
    for v in 0..ds.rows() {
        row_fn(v, ds.row_mut(v));
    }
}

fn hash_agg_row<T: Scalar>(s: &Tensor<T>, plan: &HashRowPlan, v: usize, out: &mut [T]) {
    plan.global.apply_into(s.row(v), out);
    if let Some(t) = plan.task_of_node[v] {
        plan.per_task[t].apply_into(s.row(v), out);
    }
}

fn hash_agg_value<T: Scalar>(s: &Tensor<T>, plan: &HashRowPlan) -> Tensor<T> {
    let n = s.rows();
    let m = plan.global.m;
    let mut out = Tensor::zeros(n, m);
    #[cfg(feature = "parallel")]
    {
        if n >= PAR_MIN_ROWS {
            out.data_mut()
                .par_chunks_mut(m.max(1))
                .enumerate()
                .for_each(|(v, row)| hash_agg_row(s, plan, v, row));
            return out;
        }
    }
    for v in 0..n {
        hash_agg_row(s, plan, v, out.row_mut(v));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{synth_graph, SynthKind};

    fn t64(rows: usize, cols: usize, v: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(rows, cols, v.to_vec()).unwrap()
    }

    #[test]
    fn matmul_identity() {
        let mut tape = Tape::new();
        let x = tape.constant(t64(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        let i = tape.constant(Tensor::eye(2));
        let y = tape.matmul(i, x).unwrap();
        assert_eq!(tape.value(y).data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn matmul_hand_value() {
        let mut tape = Tape::new();
        let a = tape.constant(t64(1, 2, &[1.0, 2.0]));
        let b = tape.constant(t64(2, 1, &[3.0, 4.0]));
        let c = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(c).data(), &[11.0]);
    }

    #[test]
    fn matmul_shape_mismatch() {
        let mut tape = Tape::<f64>::new();
        let a = tape.constant(Tensor::zeros(2, 3));
        let b = tape.constant(Tensor::zeros(2, 3));
        assert!(tape.matmul(a, b).is_err());
    }

    #[test]
    fn neighbor_sum_path_p3() {
        let g = Arc::new(crate::graph::Graph::from_edges(3, &[(0, 1), (1, 2)]).unwrap());
        let mut tape = Tape::new();
        let h = tape.constant(Tensor::<f64>::eye(3));
        let s = tape.neighbor_sum(&g, h).unwrap();
        assert_eq!(tape.value(s).row(0), &[0.0, 1.0, 0.0]);
        assert_eq!(tape.value(s).row(1), &[1.0, 0.0, 1.0]);
        assert_eq!(tape.value(s).row(2), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn neighbor_sum_isolated_node_zero_row() {
        let g = Arc::new(crate::graph::Graph::from_edges(3, &[(0, 1)]).unwrap());
        let mut tape = Tape::new();
        let h = tape.constant(Tensor::<f64>::full(3, 2, 1.0));
        let s = tape.neighbor_sum(&g, h).unwrap();
        assert_eq!(tape.value(s).row(2), &[0.0, 0.0]);
    }

    #[test]
    fn neighbor_sum_c4_constant_rows() {
        let g = Arc::new(synth_graph(SynthKind::Cycle { n: 4 }, 0).unwrap());
        let mut tape = Tape::new();
        let h = tape.constant(Tensor::<f64>::full(4, 3, 2.5));
        let s = tape.neighbor_sum(&g, h).unwrap();
        for v in 0..4 {
            assert_eq!(tape.value(s).row(v), &[5.0, 5.0, 5.0]);
        }
    }

    #[test]
    fn neighbor_sum_self_adjoint() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let g = Arc::new(crate::graph::synth_graph(SynthKind::Regular { n: 9, r: 4 }, 2).unwrap());
        let rand_t = |rng: &mut rand_chacha::ChaCha8Rng| {
            Tensor::from_vec(9, 3, (0..27).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
        };
        for _ in 0..5 {
            let x = rand_t(&mut rng);
            let y = rand_t(&mut rng);
            let nx = neighbor_sum_value(&g, &x);
            let ny = neighbor_sum_value(&g, &y);
            assert!((nx.dot(&y) - x.dot(&ny)).abs() < 1e-10);
        }
    }

    #[test]
    fn relu_and_concat_examples() {
        let mut tape = Tape::new();
        let x = tape.constant(t64(1, 3, &[-1.0, 0.0, 2.0]));
        let r = tape.relu(x);
        assert_eq!(tape.value(r).data(), &[0.0, 0.0, 2.0]);
        let r2 = tape.relu(r);
        assert_eq!(tape.value(r2).data(), tape.value(r).data());

        let a = tape.constant(Tensor::eye(2));
        let b = tape.constant(Tensor::zeros(2, 1));
        let c = tape.concat_cols(a, b).unwrap();
        assert_eq!(tape.value(c).shape(), (2, 3));
        assert_eq!(tape.value(c).row(0), &[1.0, 0.0, 0.0]);
        let bad = tape.constant(Tensor::zeros(3, 1));
        assert!(tape.concat_cols(a, bad).is_err());
    }

    #[test]
    fn softmax_xent_uniform_logits() {
        let mut tape = Tape::new();
        let logits = tape.constant(Tensor::<f64>::zeros(3, 4));
        let labels = Arc::new(vec![0u32, 1, 2]);
        let mask = Arc::new(vec![0usize, 1, 2]);
        let loss = tape.softmax_xent(logits, &labels, &mask).unwrap();
        assert!((tape.scalar(loss) - 4.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn softmax_xent_confident_logits() {
        let mut tape = Tape::new();
        let mut l = Tensor::<f64>::zeros(2, 3);
        l.set(0, 1, 100.0);
        l.set(1, 2, 100.0);
        let logits = tape.constant(l);
        let labels = Arc::new(vec![1u32, 2]);
        let mask = Arc::new(vec![0usize, 1]);
        let loss = tape.softmax_xent(logits, &labels, &mask).unwrap();
        assert!(tape.scalar(loss) < 1e-8);
    }

    #[test]
    fn softmax_xent_empty_mask_rejected() {
        let mut tape = Tape::new();
        let logits = tape.constant(Tensor::<f64>::zeros(3, 4));
        let labels = Arc::new(vec![0u32, 1, 2]);
        let mask = Arc::new(Vec::new());
        assert!(tape.softmax_xent(logits, &labels, &mask).is_err());
    }

    #[test]
    fn unused_parameter_gets_zero_gradient() {
        let mut tape = Tape::new();
        let used = tape.param(t64(1, 2, &[1.0, 2.0]));
        let unused = tape.param(t64(2, 2, &[0.5; 4]));
        let loss = tape.sumsq(used);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(used).unwrap().data(), &[2.0, 4.0]);
        assert_eq!(grads.get(unused).unwrap().data(), &[0.0; 4]);
    }

    #[test]
    fn backward_linear_in_output_gradient() {
        // scaling the loss scales every gradient by the same factor
        let build = |alpha: f64| {
            let mut tape = Tape::new();
            let p = tape.param(t64(2, 2, &[0.3, -0.7, 1.1, 0.2]));
            let q = tape.relu(p);
            let s = tape.sumsq(q);
            let loss = tape.scale(s, alpha);
            let grads = tape.backward(loss).unwrap();
            grads.get(p).unwrap().clone()
        };
        let g1 = build(1.0);
        let g3 = build(3.0);
        for (a, b) in g1.data().iter().zip(g3.data()) {
            assert!((3.0 * a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn shuffled_neighbor_storage_does_not_move_sums() {
        let g = synth_graph(SynthKind::Regular { n: 12, r: 5 }, 9).unwrap();
        let h = Tensor::from_vec(
            12,
            4,
            (0..48).map(|i| ((i * 31 % 17) as f64 - 8.0) * 0.37).collect(),
        )
        .unwrap();
        let base = neighbor_sum_value(&g, &h);
        for seed in 0..4 {
            let shuffled = g.shuffle_neighbor_storage(seed);
            let out = neighbor_sum_value(&shuffled, &h);
            assert_eq!(out.data(), base.data(), "bitwise equality under storage shuffle");
        }
    }

    #[test]
    fn degree_pool_slices() {
        // vocab {1,2,3}, graph degrees {1,3}: middle slice zero
        let mut tape = Tape::new();
        let h = tape.constant(t64(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        let plan = Arc::new(PoolPlan {
            n_graphs: 1,
            graph_of_node: vec![0, 0],
            slot_of_node: vec![0, 2],
            n_slots: 3,
            nodes_per_graph: vec![2],
        });
        let p = tape.degree_pool(h, &plan).unwrap();
        assert_eq!(tape.value(p).row(0), &[1.0, 2.0, 0.0, 0.0, 3.0, 4.0]);
    }
}
