//! Canonical depth-1 subtree codes: two nodes get equal codes exactly when
//! their subtrees differ at most in neighbor order.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::graph::Graph;

/// Shared discretization of attribute rows (exact bit-pattern equality).
#[derive(Debug, Default)]
pub struct AttrDictionary {
    table: HashMap<Vec<u64>, u32>,
}

impl AttrDictionary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Interns every attribute row of the given graphs.
    pub fn build(graphs: &[&Graph]) -> Result<Self> {
        let mut dict = Self::new();
        for g in graphs {
            let attrs = g
                .attributes()
                .ok_or_else(|| Error::Validation("graph has no attributes to discretize".into()))?;
            for v in 0..g.n() {
                dict.intern(attrs.row(v));
            }
        }
        Ok(dict)
    }

    pub fn intern(&mut self, row: &[f64]) -> u32 {
        let key: Vec<u64> = row.iter().map(|x| x.to_bits()).collect();
        let next = self.table.len() as u32;
        *self.table.entry(key).or_insert(next)
    }

    pub fn id_of(&self, row: &[f64]) -> Option<u32> {
        let key: Vec<u64> = row.iter().map(|x| x.to_bits()).collect();
        self.table.get(&key).copied()
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

/// Order-free canonical form of a depth-1 subtree: the seed's attribute id,
/// its degree, and the sorted multiset of neighbor attribute ids.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SubtreeCode {
    pub seed_code: u32,
    pub degree: usize,
    pub neighbor_multiset: Vec<u32>,
}

impl SubtreeCode {
    pub fn new(seed_code: u32, mut neighbor_multiset: Vec<u32>) -> Self {
        neighbor_multiset.sort_unstable();
        Self { seed_code, degree: neighbor_multiset.len(), neighbor_multiset }
    }
}

/// Canonical code of node `v`'s depth-1 subtree under a shared dictionary.
pub fn subtree_code(graph: &Graph, v: usize, dict: &AttrDictionary) -> Result<SubtreeCode> {
    let attrs = graph
        .attributes()
        .ok_or_else(|| Error::Validation("graph has no attributes".into()))?;
    let code_of = |node: usize| -> Result<u32> {
        dict.id_of(attrs.row(node)).ok_or_else(|| {
            Error::Validation(format!("attribute row of node {node} not in dictionary"))
        })
    };
    let seed_code = code_of(v)?;
    let neighbors: Vec<u32> = graph
        .neighbors(v)
        .iter()
        .map(|&u| code_of(u))
        .collect::<Result<_>>()?;
    Ok(SubtreeCode::new(seed_code, neighbors))
}
