//! Renormalized adjacency for the baseline convolution: self-loops added,
//! then symmetric degree normalization so entry (v, u) is
//! `1 / sqrt((deg(v)+1) * (deg(u)+1))`.

use crate::graph::Graph;
use crate::tensor::{Scalar, SymCsr};

pub fn norm_adjacency<T: Scalar>(graph: &Graph) -> SymCsr<T> {
    let n = graph.n();
    let mut offsets = Vec::with_capacity(n + 1);
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    offsets.push(0);
    for v in 0..n {
        let dv = (graph.degree(v) + 1) as f64;
        // merge self-loop into the sorted neighbor run
        let mut ids: Vec<usize> = graph.neighbors(v).to_vec();
        if !graph.neighbors_sorted() {
            ids.sort_unstable();
        }
        let pos = ids.partition_point(|&u| u < v);
        ids.insert(pos, v);
        for u in ids {
            let du = (graph.degree(u) + 1) as f64;
            cols.push(u);
            vals.push(T::from_f64(1.0 / (dv * du).sqrt()));
        }
        offsets.push(cols.len());
    }
    SymCsr { n, offsets, cols, vals }
}
