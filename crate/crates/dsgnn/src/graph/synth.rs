//! Synthetic graph generators: exact-degree constructions from circulant
//! blocks plus seeded degree-preserving rewiring.

use std::collections::BTreeSet;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::tensor::Tensor;

/// One block of the degree-labeled generator: `count` nodes, each with
/// degree exactly `degree`, all labeled `class_id`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DegreeClassSpec {
    pub class_id: u32,
    pub degree: usize,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SynthKind {
    /// r-regular graph on n nodes (randomized by rewiring).
    Regular { n: usize, r: usize },
    /// Single cycle C_n.
    Cycle { n: usize },
    /// k disjoint cycles of the given length.
    DisjointCycles { k: usize, len: usize },
    /// Blocks of exact-degree nodes labeled by class, entangled by seeded
    /// degree-preserving rewiring; attributes are all-ones so class is
    /// recoverable only from structure.
    DegreeClasses { spec: Vec<DegreeClassSpec> },
}

pub fn synth_graph(kind: SynthKind, seed: u64) -> Result<Graph> {
    match kind {
        SynthKind::Regular { n, r } => {
            let edges = circulant_regular(n, r)?;
            let g = Graph::from_edges(n, &edges)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rewire_preserving_degrees(&g, 10 * g.edge_count(), &mut rng)
        }
        SynthKind::Cycle { n } => {
            let edges = circulant_regular(n, 2)?;
            Graph::from_edges(n, &edges)
        }
        SynthKind::DisjointCycles { k, len } => {
            if k == 0 {
                return Err(Error::Construction("need at least one cycle".into()));
            }
            let mut edges = Vec::new();
            for c in 0..k {
                let base = c * len;
                for e in circulant_regular(len, 2)? {
                    edges.push((e.0 + base, e.1 + base));
                }
            }
            Graph::from_edges(k * len, &edges)
        }
        SynthKind::DegreeClasses { spec } => degree_classes(&spec, seed),
    }
}

/// Deterministic r-regular base construction: circulant offsets 1..=r/2,
/// plus the antipodal matching when r is odd (n must then be even).
fn circulant_regular(n: usize, r: usize) -> Result<Vec<(usize, usize)>> {
    if r >= n && !(n == 1 && r == 0) {
        return Err(Error::Construction(format!(
            "no simple {r}-regular graph on {n} nodes: degree must be below node count"
        )));
    }
    if (n * r) % 2 != 0 {
        return Err(Error::Construction(format!(
            "no {r}-regular graph on {n} nodes: degree sum is odd"
        )));
    }
    let mut edges = Vec::with_capacity(n * r / 2);
    for k in 1..=(r / 2) {
        for i in 0..n {
            edges.push((i, (i + k) % n));
        }
    }
    if r % 2 == 1 {
        for i in 0..n / 2 {
            edges.push((i, i + n / 2));
        }
    }
    Ok(edges)
}

/// Double-edge swaps keep every node degree; rejected proposals keep the
/// graph simple. `attempts` proposals are made, not all succeed.
pub fn rewire_preserving_degrees(
    graph: &Graph,
    attempts: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Graph> {
    let mut edges = graph.edges();
    if edges.len() < 2 {
        return Graph::from_edges(graph.n(), &edges);
    }
    let mut present: BTreeSet<(usize, usize)> = edges.iter().copied().collect();
    let key = |a: usize, b: usize| (a.min(b), a.max(b));
    for _ in 0..attempts {
        let i = rng.random_range(0..edges.len());
        let j = rng.random_range(0..edges.len());
        if i == j {
            continue;
        }
        let (a, b) = edges[i];
        let (mut c, mut d) = edges[j];
        if rng.random::<bool>() {
            std::mem::swap(&mut c, &mut d);
        }
        // propose (a,d) and (c,b)
        if a == d || c == b {
            continue;
        }
        let e1 = key(a, d);
        let e2 = key(c, b);
        if e1 == e2 || present.contains(&e1) || present.contains(&e2) {
            continue;
        }
        present.remove(&key(a, b));
        present.remove(&key(c, d));
        present.insert(e1);
        present.insert(e2);
        edges[i] = e1;
        edges[j] = e2;
    }
    let g = Graph::from_edges(graph.n(), &edges)?;
    debug_assert_eq!(g.degrees(), graph.degrees());
    Ok(g)
}

fn degree_classes(spec: &[DegreeClassSpec], seed: u64) -> Result<Graph> {
    if spec.is_empty() {
        return Err(Error::Construction("degree class spec is empty".into()));
    }
    let mut edges = Vec::new();
    let mut labels = Vec::new();
    let mut offset = 0usize;
    for block in spec {
        let block_edges = circulant_regular(block.count, block.degree).map_err(|e| {
            Error::Construction(format!(
                "class {} ({} nodes of degree {}): {e}",
                block.class_id, block.count, block.degree
            ))
        })?;
        for (u, v) in block_edges {
            edges.push((u + offset, v + offset));
        }
        labels.extend(std::iter::repeat(Some(block.class_id)).take(block.count));
        offset += block.count;
    }
    let stitched = Graph::from_edges(offset, &edges)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rewired = rewire_preserving_degrees(&stitched, 10 * stitched.edge_count(), &mut rng)?;
    rewired
        .with_attributes(Tensor::full(offset, 1, 1.0))?
        .with_node_labels(labels)
}

/// Uniform random simple graph with `n` nodes and exactly `m` edges.
pub fn random_gnm(n: usize, m: usize, seed: u64) -> Result<Graph> {
    let max_edges = n.saturating_mul(n.saturating_sub(1)) / 2;
    if m > max_edges {
        return Err(Error::Construction(format!(
            "cannot place {m} edges on {n} nodes (max {max_edges})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut present = BTreeSet::new();
    let mut edges = Vec::with_capacity(m);
    while edges.len() < m {
        let u = rng.random_range(0..n);
        let v = rng.random_range(0..n);
        if u == v {
            continue;
        }
        let e = (u.min(v), u.max(v));
        if present.insert(e) {
            edges.push(e);
        }
    }
    Graph::from_edges(n, &edges)
}
