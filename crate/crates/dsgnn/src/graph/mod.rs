//! Graph storage, degree indexing, synthetic generators and data splits.
//!
//! Graphs are undirected, attributed, and stored in compressed sparse row
//! form with neighbor lists sorted by node id. They are immutable after
//! construction and cheap to share across threads.

mod load;
mod split;
mod synth;

pub use load::{load_edge_list, load_graph_dataset, load_node_table, NodeTableMode};
pub use split::{split_random, SplitSpec};
pub use synth::{random_gnm, rewire_preserving_degrees, synth_graph, DegreeClassSpec, SynthKind};

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Immutable undirected attributed graph in CSR form.
#[derive(Debug, Clone)]
pub struct Graph {
    n: usize,
    csr_offsets: Vec<usize>,
    csr_neighbors: Vec<usize>,
    degrees: Vec<usize>,
    attributes: Option<Tensor<f64>>,
    node_labels: Option<Vec<Option<u32>>>,
    /// Neighbor lists sorted ascending (canonical storage). Diagnostic
    /// shuffles clear this so aggregation re-sorts before accumulating.
    neighbors_sorted: bool,
    /// external -> internal id pairs when the source file used sparse ids.
    id_map: Option<Arc<Vec<(u64, usize)>>>,
    self_loops_dropped: usize,
}

impl Graph {
    /// Builds a graph from an undirected edge list. Duplicate and reversed
    /// edges collapse to one; self-loops are dropped and counted.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut set = BTreeSet::new();
        let mut self_loops = 0usize;
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::Validation(format!(
                    "edge ({u}, {v}) references node outside 0..{n}"
                )));
            }
            if u == v {
                self_loops += 1;
                continue;
            }
            set.insert((u.min(v), u.max(v)));
        }
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &(u, v) in &set {
            adj[u].push(v);
            adj[v].push(u);
        }
        let mut csr_offsets = Vec::with_capacity(n + 1);
        let mut csr_neighbors = Vec::with_capacity(2 * set.len());
        let mut degrees = Vec::with_capacity(n);
        csr_offsets.push(0);
        for mut row in adj {
            row.sort_unstable();
            degrees.push(row.len());
            csr_neighbors.extend_from_slice(&row);
            csr_offsets.push(csr_neighbors.len());
        }
        Ok(Self {
            n,
            csr_offsets,
            csr_neighbors,
            degrees,
            attributes: None,
            node_labels: None,
            neighbors_sorted: true,
            id_map: None,
            self_loops_dropped: self_loops,
        })
    }

    pub fn with_attributes(mut self, attributes: Tensor<f64>) -> Result<Self> {
        if attributes.rows() != self.n {
            return Err(Error::shape(
                format!("{} attribute rows", self.n),
                format!("{}", attributes.rows()),
            ));
        }
        self.attributes = Some(attributes);
        Ok(self)
    }

    pub fn with_node_labels(mut self, labels: Vec<Option<u32>>) -> Result<Self> {
        if labels.len() != self.n {
            return Err(Error::shape(
                format!("{} labels", self.n),
                format!("{}", labels.len()),
            ));
        }
        self.node_labels = Some(labels);
        Ok(self)
    }

    pub(crate) fn with_id_map(mut self, map: Vec<(u64, usize)>) -> Self {
        self.id_map = Some(Arc::new(map));
        self
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.csr_neighbors.len() / 2
    }

    #[inline]
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.csr_neighbors[self.csr_offsets[v]..self.csr_offsets[v + 1]]
    }

    #[inline]
    pub fn degree(&self, v: usize) -> usize {
        self.degrees[v]
    }

    #[inline]
    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }

    pub fn csr_offsets(&self) -> &[usize] {
        &self.csr_offsets
    }

    pub fn attributes(&self) -> Option<&Tensor<f64>> {
        self.attributes.as_ref()
    }

    pub fn attr_dim(&self) -> usize {
        self.attributes.as_ref().map_or(0, Tensor::cols)
    }

    pub fn node_labels(&self) -> Option<&[Option<u32>]> {
        self.node_labels.as_deref()
    }

    pub fn id_map(&self) -> Option<&[(u64, usize)]> {
        self.id_map.as_deref().map(Vec::as_slice)
    }

    pub fn self_loops_dropped(&self) -> usize {
        self.self_loops_dropped
    }

    #[inline]
    pub fn neighbors_sorted(&self) -> bool {
        self.neighbors_sorted
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.edge_count());
        for v in 0..self.n {
            for &u in self.neighbors(v) {
                if v < u {
                    out.push((v, u));
                }
            }
        }
        out
    }

    /// Diagnostic copy with each node's neighbor storage randomly permuted.
    /// Used by the order-free self-tests; aggregation results must not move.
    pub fn shuffle_neighbor_storage(&self, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut shuffled = self.clone();
        for v in 0..self.n {
            let lo = self.csr_offsets[v];
            let hi = self.csr_offsets[v + 1];
            shuffled.csr_neighbors[lo..hi].shuffle(&mut rng);
        }
        shuffled.neighbors_sorted = false;
        shuffled
    }

    /// Distinct class ids present among labeled nodes.
    pub fn num_classes(&self) -> usize {
        self.node_labels
            .as_ref()
            .map_or(0, |labels| {
                labels
                    .iter()
                    .flatten()
                    .map(|&c| c as usize + 1)
                    .max()
                    .unwrap_or(0)
            })
    }
}

/// Replaces or installs node attributes derived from the graph itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureMode {
    /// Keep the attributes already attached.
    Raw,
    /// One-hot indicator of the node's degree task.
    OneHotDegree,
}

/// See [`FeatureMode`]; `OneHotDegree` builds a [`DegreeIndex`] from the
/// graph when none is supplied.
pub fn make_features(graph: &Graph, mode: FeatureMode, index: Option<&DegreeIndex>) -> Result<Graph> {
    match mode {
        FeatureMode::Raw => {
            if graph.attributes.is_none() {
                return Err(Error::Validation(
                    "raw feature mode requires attached attributes".into(),
                ));
            }
            Ok(graph.clone())
        }
        FeatureMode::OneHotDegree => {
            let built;
            let index = match index {
                Some(ix) => ix,
                None => {
                    built = DegreeIndex::from_graph(graph, None, false);
                    &built
                }
            };
            let t = index.n_tasks();
            let mut attrs = Tensor::zeros(graph.n, t);
            for v in 0..graph.n {
                if let Some(task) = index.task_of(graph.degree(v)) {
                    attrs.set(v, task, 1.0);
                }
            }
            graph.clone().with_attributes(attrs)
        }
    }
}

/// Bijection from observed degree values to convolution task ids, with an
/// optional log2 bucketing rule that pools nearby degrees into one task.
#[derive(Debug, Clone)]
pub struct DegreeIndex {
    degree_values: Vec<usize>,
    task_of_key: BTreeMap<usize, usize>,
    n_tasks: usize,
    bucketing: bool,
}

impl DegreeIndex {
    fn from_degree_iter(degrees: impl Iterator<Item = usize>, bucketing: bool) -> Self {
        let observed: BTreeSet<usize> = degrees.collect();
        let degree_values: Vec<usize> = observed.iter().copied().collect();
        let keys: BTreeSet<usize> = degree_values
            .iter()
            .map(|&d| Self::key(d, bucketing))
            .collect();
        let task_of_key: BTreeMap<usize, usize> =
            keys.into_iter().enumerate().map(|(t, k)| (k, t)).collect();
        let n_tasks = task_of_key.len();
        Self {
            degree_values,
            task_of_key,
            n_tasks,
            bucketing,
        }
    }

    /// Index over the degrees of `nodes` (all nodes when `None`).
    pub fn from_graph(graph: &Graph, nodes: Option<&[usize]>, bucketing: bool) -> Self {
        match nodes {
            Some(subset) => {
                Self::from_degree_iter(subset.iter().map(|&v| graph.degree(v)), bucketing)
            }
            None => Self::from_degree_iter(graph.degrees.iter().copied(), bucketing),
        }
    }

    /// Index straight from a list of degree values (checkpoint reload).
    pub fn from_degree_values(degrees: &[usize], bucketing: bool) -> Self {
        Self::from_degree_iter(degrees.iter().copied(), bucketing)
    }

    /// Index over the union of degrees in `graphs` (all graphs when `None`).
    pub fn from_graph_set(set: &GraphSet, graphs: Option<&[usize]>, bucketing: bool) -> Self {
        let ids: Vec<usize> = match graphs {
            Some(subset) => subset.to_vec(),
            None => (0..set.len()).collect(),
        };
        Self::from_degree_iter(
            ids.iter()
                .flat_map(|&g| set.graph(g).degrees.iter().copied()),
            bucketing,
        )
    }

    #[inline]
    fn key(degree: usize, bucketing: bool) -> usize {
        if bucketing {
            // degree 0 keeps its own bucket; others pool by floor(log2).
            if degree == 0 {
                0
            } else {
                degree.ilog2() as usize + 1
            }
        } else {
            degree
        }
    }

    /// Task id for a degree, `None` when the degree (or its bucket) was not
    /// observed when the index was built.
    #[inline]
    pub fn task_of(&self, degree: usize) -> Option<usize> {
        self.task_of_key
            .get(&Self::key(degree, self.bucketing))
            .copied()
    }

    #[inline]
    pub fn n_tasks(&self) -> usize {
        self.n_tasks
    }

    /// Sorted distinct degrees observed at build time.
    pub fn degree_values(&self) -> &[usize] {
        &self.degree_values
    }

    pub fn bucketing(&self) -> bool {
        self.bucketing
    }

    /// Stable human-readable label per task, used for parameter names.
    pub fn task_labels(&self) -> Vec<String> {
        let mut labels = vec![String::new(); self.n_tasks];
        for (&key, &task) in &self.task_of_key {
            labels[task] = if self.bucketing {
                if key == 0 {
                    "deg0".to_string()
                } else {
                    format!("bucket{}", key - 1)
                }
            } else {
                format!("deg{key}")
            };
        }
        labels
    }
}

/// Ordered collection of graphs sharing one attribute dimensionality.
#[derive(Debug, Clone)]
pub struct GraphSet {
    graphs: Vec<Graph>,
    graph_labels: Option<Vec<u32>>,
    attr_dim: usize,
}

impl GraphSet {
    pub fn new(graphs: Vec<Graph>, graph_labels: Option<Vec<u32>>) -> Result<Self> {
        if graphs.is_empty() {
            return Err(Error::Validation("graph set is empty".into()));
        }
        let attr_dim = graphs[0].attr_dim();
        for (i, g) in graphs.iter().enumerate() {
            if g.attr_dim() != attr_dim {
                return Err(Error::Validation(format!(
                    "graph {i} has attribute dim {} but the set uses {attr_dim}",
                    g.attr_dim()
                )));
            }
        }
        if let Some(labels) = &graph_labels {
            if labels.len() != graphs.len() {
                return Err(Error::Validation(format!(
                    "{} graph labels for {} graphs",
                    labels.len(),
                    graphs.len()
                )));
            }
        }
        Ok(Self {
            graphs,
            graph_labels,
            attr_dim,
        })
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn graph(&self, i: usize) -> &Graph {
        &self.graphs[i]
    }

    pub fn graphs(&self) -> &[Graph] {
        &self.graphs
    }

    pub fn graph_labels(&self) -> Option<&[u32]> {
        self.graph_labels.as_deref()
    }

    pub fn attr_dim(&self) -> usize {
        self.attr_dim
    }

    pub fn num_classes(&self) -> usize {
        self.graph_labels
            .as_ref()
            .map_or(0, |l| l.iter().map(|&c| c as usize + 1).max().unwrap_or(0))
    }

    /// Block-diagonal disjoint union: one big graph plus the node -> graph
    /// assignment. Layer ops run once over the union; pooling splits it back.
    pub fn union_graph(&self) -> (Graph, Vec<usize>) {
        let total: usize = self.graphs.iter().map(|g| g.n).sum();
        let mut edges = Vec::new();
        let mut graph_of_node = Vec::with_capacity(total);
        let mut attrs = Tensor::zeros(total, self.attr_dim);
        let mut offset = 0usize;
        for (gi, g) in self.graphs.iter().enumerate() {
            for (u, v) in g.edges() {
                edges.push((u + offset, v + offset));
            }
            for v in 0..g.n {
                graph_of_node.push(gi);
                if let Some(a) = g.attributes() {
                    attrs.row_mut(offset + v).copy_from_slice(a.row(v));
                }
            }
            offset += g.n;
        }
        let mut union = Graph::from_edges(total, &edges).expect("member graphs are valid");
        if self.attr_dim > 0 {
            union = union.with_attributes(attrs).expect("row count matches");
        }
        (union, graph_of_node)
    }
}

/// Checks the CSR symmetry invariant by comparing the edge multiset read
/// from both directions. Cheap enough to run in tests and loaders.
pub fn csr_is_symmetric(graph: &Graph) -> bool {
    let mut forward = Vec::new();
    let mut backward = Vec::new();
    for v in 0..graph.n() {
        for &u in graph.neighbors(v) {
            forward.push((v.min(u), v.max(u)));
            backward.push((u.min(v), u.max(v)));
        }
    }
    forward.sort_unstable();
    backward.sort_unstable();
    forward == backward
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_edges_dedups_and_symmetrizes() {
        let g = Graph::from_edges(3, &[(0, 1), (1, 0), (1, 2)]).unwrap();
        assert_eq!(g.degrees(), &[1, 2, 1]);
        assert_eq!(g.edge_count(), 2);
        assert!(csr_is_symmetric(&g));
    }

    #[test]
    fn self_loops_dropped_and_counted() {
        let g = Graph::from_edges(2, &[(0, 0), (0, 1)]).unwrap();
        assert_eq!(g.self_loops_dropped(), 1);
        assert_eq!(g.edge_count(), 1);
    }

    #[test]
    fn degrees_match_csr_row_lengths() {
        let g = Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)]).unwrap();
        for v in 0..g.n() {
            assert_eq!(g.degree(v), g.neighbors(v).len());
        }
    }

    #[test]
    fn out_of_range_edge_rejected() {
        assert!(Graph::from_edges(2, &[(0, 5)]).is_err());
    }

    #[test]
    fn degree_index_basic() {
        let g = Graph::from_edges(4, &[(0, 1), (1, 2), (1, 3), (2, 3)]).unwrap();
        // degrees [1, 3, 2, 2]
        let ix = DegreeIndex::from_graph(&g, None, false);
        assert_eq!(ix.degree_values(), &[1, 2, 3]);
        assert_eq!(ix.n_tasks(), 3);
        assert_eq!(ix.task_of(2), Some(1));
        assert_eq!(ix.task_of(7), None);
    }

    #[test]
    fn degree_index_bucketing_by_log2() {
        // degrees {1,2,3,4,5,8}: floor(log2) exponents {0,1,1,2,2,3} -> 4 tasks
        let ix = DegreeIndex::from_degree_iter([1, 2, 3, 4, 5, 8].into_iter(), true);
        assert_eq!(ix.n_tasks(), 4);
        assert_eq!(ix.task_of(2), ix.task_of(3));
        assert_eq!(ix.task_of(4), ix.task_of(5));
        assert_ne!(ix.task_of(1), ix.task_of(2));
        // unseen degree 6 still lands in the observed bucket for exponent 2
        assert_eq!(ix.task_of(6), ix.task_of(4));
    }

    #[test]
    fn single_regular_graph_has_one_task() {
        let g = synth_graph(SynthKind::Cycle { n: 8 }, 0).unwrap();
        let ix = DegreeIndex::from_graph(&g, None, false);
        assert_eq!(ix.n_tasks(), 1);
    }

    #[test]
    fn make_features_one_hot_star() {
        // star K_{1,3}: degrees [3,1,1,1], degree set {1,3}
        let g = Graph::from_edges(4, &[(0, 1), (0, 2), (0, 3)]).unwrap();
        let f = make_features(&g, FeatureMode::OneHotDegree, None).unwrap();
        let a = f.attributes().unwrap();
        assert_eq!(a.shape(), (4, 2));
        assert_eq!(a.row(0), &[0.0, 1.0]);
        assert_eq!(a.row(1), &[1.0, 0.0]);
    }

    #[test]
    fn make_features_path_p3() {
        let g = Graph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let f = make_features(&g, FeatureMode::OneHotDegree, None).unwrap();
        let a = f.attributes().unwrap();
        assert_eq!(a.row(0), a.row(2));
        assert_ne!(a.row(0), a.row(1));
    }

    #[test]
    fn make_features_regular_graph_identical_rows() {
        let g = synth_graph(SynthKind::Regular { n: 8, r: 3 }, 1).unwrap();
        let f = make_features(&g, FeatureMode::OneHotDegree, None).unwrap();
        let a = f.attributes().unwrap();
        assert_eq!(a.cols(), 1);
        for v in 0..8 {
            assert_eq!(a.row(v), &[1.0]);
        }
    }

    #[test]
    fn make_features_raw_requires_attributes() {
        let g = Graph::from_edges(2, &[(0, 1)]).unwrap();
        assert!(make_features(&g, FeatureMode::Raw, None).is_err());
    }

    #[test]
    fn shuffled_storage_keeps_edge_multiset() {
        let g = synth_graph(SynthKind::Regular { n: 10, r: 4 }, 3).unwrap();
        let s = g.shuffle_neighbor_storage(7);
        assert!(!s.neighbors_sorted());
        assert!(csr_is_symmetric(&s));
        let mut a = g.edges();
        let mut b = s.edges();
        a.sort_unstable();
        b.sort_unstable();
        assert_eq!(a, b);
    }

    #[test]
    fn union_graph_blocks_do_not_touch() {
        let g1 = synth_graph(SynthKind::Cycle { n: 3 }, 0)
            .unwrap()
            .with_attributes(Tensor::full(3, 1, 1.0))
            .unwrap();
        let g2 = synth_graph(SynthKind::Cycle { n: 4 }, 0)
            .unwrap()
            .with_attributes(Tensor::full(4, 1, 1.0))
            .unwrap();
        let set = GraphSet::new(vec![g1, g2], Some(vec![0, 1])).unwrap();
        let (u, graph_of) = set.union_graph();
        assert_eq!(u.n(), 7);
        assert_eq!(u.edge_count(), 7);
        assert_eq!(graph_of, vec![0, 0, 0, 1, 1, 1, 1]);
        for v in 0..3 {
            for &nb in u.neighbors(v) {
                assert!(nb < 3);
            }
        }
    }
}
