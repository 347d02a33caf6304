//! Degree-sliced readout plans and the flat per-graph representation
//! vector with its (layer, degree, offset) slot table.

use std::sync::Arc;

use crate::error::Result;
use crate::graph::Graph;
use crate::model::{activations, DegreeNet, PoolKind};
use crate::tensor::{PoolPlan, Scalar};

/// Maps every node to its degree slot. Degrees outside the vocabulary pool
/// into the nearest lower slot (or slot 0 when below the whole vocabulary);
/// the count of such nodes is returned in the plan's companion value by
/// callers that care, and a line is logged here.
pub fn build_pool_plan(
    graph: &Graph,
    graph_of_node: &[usize],
    n_graphs: usize,
    vocab: &[usize],
) -> PoolPlan {
    assert!(!vocab.is_empty(), "pooling vocabulary is empty");
    let mut out_of_vocab = 0usize;
    let slot_of_node: Vec<usize> = (0..graph.n())
        .map(|v| {
            let d = graph.degree(v);
            match vocab.binary_search(&d) {
                Ok(slot) => slot,
                Err(insert_at) => {
                    out_of_vocab += 1;
                    insert_at.saturating_sub(1)
                }
            }
        })
        .collect();
    if out_of_vocab > 0 {
        eprintln!("warning: {out_of_vocab} nodes with degrees outside the pooling vocabulary; pooled into nearest lower slice");
    }
    let mut nodes_per_graph = vec![0usize; n_graphs];
    for &g in graph_of_node {
        nodes_per_graph[g] += 1;
    }
    PoolPlan {
        n_graphs,
        graph_of_node: graph_of_node.to_vec(),
        slot_of_node,
        n_slots: vocab.len(),
        nodes_per_graph,
    }
}

/// One (layer, degree) slice inside a [`GraphRepr`] vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReprSlot {
    pub layer: usize,
    pub degree: usize,
    pub offset: usize,
    pub width: usize,
}

/// Flat graph representation: layer-by-layer degree-sliced sums, indexed
/// through the slot table.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphRepr {
    pub values: Vec<f64>,
    pub slots: Vec<ReprSlot>,
}

impl GraphRepr {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn slice(&self, layer: usize, degree: usize) -> Option<&[f64]> {
        self.slots
            .iter()
            .find(|s| s.layer == layer && s.degree == degree)
            .map(|s| &self.values[s.offset..s.offset + s.width])
    }
}

/// Runs the model forward on one graph and pools every layer's features by
/// degree slot over the model's pooling vocabulary.
pub fn graph_repr<T: Scalar>(model: &DegreeNet<T>, graph: &Arc<Graph>) -> Result<GraphRepr> {
    assert!(
        matches!(model.cfg.pooling, PoolKind::DegreeSliced),
        "graph_repr is defined for the degree-sliced readout"
    );
    let hs = activations(model, graph)?;
    let vocab = model.pool_vocab().to_vec();
    let mut values = Vec::new();
    let mut slots = Vec::new();
    for (k, h) in hs.iter().enumerate() {
        let w = h.cols();
        for (slot, &d) in vocab.iter().enumerate() {
            let _ = slot;
            let offset = values.len();
            let mut acc = vec![0.0f64; w];
            for v in 0..graph.n() {
                if graph.degree(v) == d {
                    for (a, &x) in acc.iter_mut().zip(h.row(v)) {
                        *a += x.to_f64();
                    }
                }
            }
            values.extend_from_slice(&acc);
            slots.push(ReprSlot { layer: k, degree: d, offset, width: w });
        }
    }
    Ok(GraphRepr { values, slots })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{synth_graph, DegreeIndex, SynthKind};
    use crate::model::{FallbackRule, ModelConfig, TaskKind, Variant};
    use crate::tensor::Tensor;

    fn graph_model(graph: &Arc<Graph>, layers: usize, seed: u64) -> DegreeNet<f64> {
        let ix = DegreeIndex::from_graph(graph, None, false);
        let vocab = ix.degree_values().to_vec();
        DegreeNet::new(
            ModelConfig {
                layers,
                hidden: 6,
                variant: Variant::Weight,
                classes: 2,
                task: TaskKind::Graph,
                pooling: PoolKind::DegreeSliced,
                fallback: FallbackRule::GlobalOnly,
                hash_dim: None,
                hash_seed: 3,
            },
            ix,
            graph.attr_dim(),
            vocab,
            seed,
        )
        .unwrap()
    }

    #[test]
    fn repr_length_matches_slot_table() {
        let g = Arc::new(
            synth_graph(SynthKind::Cycle { n: 6 }, 0)
                .unwrap()
                .with_attributes(Tensor::full(6, 2, 1.0))
                .unwrap(),
        );
        let model = graph_model(&g, 2, 1);
        let repr = graph_repr(&model, &g).unwrap();
        // vocab {2}: slots per layer = 1; widths D=2, hidden, hidden
        assert_eq!(repr.len(), 2 + 6 + 6);
        let total: usize = repr.slots.iter().map(|s| s.width).sum();
        assert_eq!(total, repr.len());
    }

    #[test]
    fn layer_zero_slice_is_degree_sliced_attribute_sum() {
        let g = Arc::new(
            Graph::from_edges(4, &[(0, 1), (0, 2), (0, 3)])
                .unwrap()
                .with_attributes(
                    Tensor::from_vec(4, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]).unwrap(),
                )
                .unwrap(),
        );
        let model = graph_model(&g, 1, 2);
        let repr = graph_repr(&model, &g).unwrap();
        // degree 1 nodes: 1, 2, 3 -> attr sum [15, 18]; degree 3: node 0
        assert_eq!(repr.slice(0, 1).unwrap(), &[15.0, 18.0]);
        assert_eq!(repr.slice(0, 3).unwrap(), &[1.0, 2.0]);
    }

    #[test]
    fn relabeling_leaves_repr_unchanged() {
        let g = Arc::new(
            synth_graph(SynthKind::DisjointCycles { k: 2, len: 3 }, 0)
                .unwrap()
                .with_attributes(Tensor::full(6, 1, 1.0))
                .unwrap(),
        );
        // relabel: rotate node ids by 2 (same structure)
        let perm: Vec<usize> = (0..6).map(|v| (v + 2) % 6).collect();
        let edges: Vec<(usize, usize)> = g.edges().iter().map(|&(u, v)| (perm[u], perm[v])).collect();
        let h = Arc::new(
            Graph::from_edges(6, &edges)
                .unwrap()
                .with_attributes(Tensor::full(6, 1, 1.0))
                .unwrap(),
        );
        let model = graph_model(&g, 2, 3);
        let a = graph_repr(&model, &g).unwrap();
        let b = graph_repr(&model, &h).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn one_wl_equivalent_graphs_share_repr() {
        // C6 and two triangles: 2-regular with uniform attributes, the
        // readout cannot tell them apart at any depth
        let c6 = Arc::new(
            synth_graph(SynthKind::Cycle { n: 6 }, 0)
                .unwrap()
                .with_attributes(Tensor::full(6, 1, 1.0))
                .unwrap(),
        );
        let tri2 = Arc::new(
            synth_graph(SynthKind::DisjointCycles { k: 2, len: 3 }, 0)
                .unwrap()
                .with_attributes(Tensor::full(6, 1, 1.0))
                .unwrap(),
        );
        let model = graph_model(&c6, 2, 5);
        let a = graph_repr(&model, &c6).unwrap();
        let b = graph_repr(&model, &tri2).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn missing_degree_gives_zero_slice() {
        let g = Arc::new(
            Graph::from_edges(4, &[(0, 1), (0, 2), (0, 3)])
                .unwrap()
                .with_attributes(Tensor::full(4, 1, 1.0))
                .unwrap(),
        );
        // model vocabulary includes degree 2, absent from the star
        let ix = DegreeIndex::from_degree_values(&[1, 2, 3], false);
        let model: DegreeNet<f64> = DegreeNet::new(
            ModelConfig {
                layers: 1,
                hidden: 4,
                variant: Variant::Weight,
                classes: 2,
                task: TaskKind::Graph,
                pooling: PoolKind::DegreeSliced,
                fallback: FallbackRule::GlobalOnly,
                hash_dim: None,
                hash_seed: 0,
            },
            ix,
            1,
            vec![1, 2, 3],
            7,
        )
        .unwrap();
        let repr = graph_repr(&model, &g).unwrap();
        assert!(repr.slice(0, 2).unwrap().iter().all(|&v| v == 0.0));
        assert!(repr.slice(1, 2).unwrap().iter().all(|&v| v == 0.0));
    }
}
