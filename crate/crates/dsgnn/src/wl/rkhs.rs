//! Kernel-space identity for the degree-sliced readout: each coordinate of
//! the pooled representation, read as the activation of a degree-sliced
//! pre-activation sum, equals the activation of the degree-sliced kernel
//! between the previous layer and a conceptual reference graph built from
//! one parameter column.
//!
//! The two sides travel different routes: the left side goes through the
//! model's forward intermediates, the right side through the kernel
//! evaluation over the reference construction. The reference graph is
//! never materialized as edges; only its degree array (all `d_i`) and its
//! constant feature row (the parameter column divided by n) enter the
//! kernel, which is all the kernel reads.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::model::{activations, DegreeNet, Variant};
use crate::tensor::Tensor;
use crate::wl::kernels::dwl_kernel;

#[derive(Debug, Clone, Copy)]
pub struct RkhsCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub abs_err: f64,
}

fn relu(x: f64) -> f64 {
    x.max(0.0)
}

/// Checks coordinate (layer `k` in 1..=K, degree slot `i` over the model's
/// pooling vocabulary, feature `j` in 0..hidden) of the degree-sliced
/// representation. Seed-branch coordinates (j below the split) use the
/// seed matrix column; neighbor-branch coordinates use the summed
/// neighborhood features against the combined shared-plus-task column.
pub fn rkhs_identity_check(
    model: &DegreeNet<f64>,
    graph: &Arc<Graph>,
    k: usize,
    slot: usize,
    j: usize,
) -> Result<RkhsCheck> {
    if !matches!(model.cfg.variant, Variant::Weight) {
        return Err(Error::Unsupported(
            "kernel identity is stated for the explicit-weight parameterization".into(),
        ));
    }
    if k == 0 || k > model.cfg.layers {
        return Err(Error::Validation(format!(
            "layer index {k} outside 1..={}",
            model.cfg.layers
        )));
    }
    let vocab = model.pool_vocab();
    if slot >= vocab.len() {
        return Err(Error::Validation(format!(
            "degree slot {slot} outside vocabulary of {}",
            vocab.len()
        )));
    }
    if j >= model.cfg.hidden {
        return Err(Error::Validation(format!(
            "feature coordinate {j} outside width {}",
            model.cfg.hidden
        )));
    }
    let d_i = vocab[slot];
    let d_split = model.seed_width();
    let hs = activations(model, graph)?;
    let h_prev = &hs[k - 1];
    let n = graph.n();

    let (w0, wg, wdeg) = model
        .weight_layer(k - 1)
        .ok_or_else(|| Error::Unsupported("layer is not weight-parameterized".into()))?;

    // graph-side features and the relevant parameter column
    let (g_feats, w_col): (Tensor<f64>, Vec<f64>) = if j < d_split {
        let col: Vec<f64> = (0..w0.rows()).map(|r| w0.get(r, j)).collect();
        (h_prev.clone(), col)
    } else {
        let jj = j - d_split;
        let combined: Vec<f64> = match model.degree_index().task_of(d_i) {
            Some(t) => (0..wg.rows()).map(|r| wg.get(r, jj) + wdeg[t].get(r, jj)).collect(),
            None => (0..wg.rows()).map(|r| wg.get(r, jj)).collect(),
        };
        let summed = crate::tensor::neighbor_sum_value(graph, h_prev);
        (summed, combined)
    };

    // left side: activation of the degree-sliced pre-activation sum
    let mut pre = 0.0f64;
    for v in 0..n {
        if graph.degree(v) == d_i {
            pre += g_feats.row(v).iter().zip(&w_col).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    let lhs = relu(pre);

    // right side: kernel against the reference construction
    let scaled: Vec<f64> = w_col.iter().map(|x| x / n as f64).collect();
    let mut ref_feats = Tensor::zeros(n, w_col.len());
    for v in 0..n {
        ref_feats.row_mut(v).copy_from_slice(&scaled);
    }
    let ref_degrees = vec![d_i; n];
    let kernel = dwl_kernel(&g_feats, graph.degrees(), &ref_feats, &ref_degrees)?;
    let rhs = relu(kernel);

    Ok(RkhsCheck { lhs, rhs, abs_err: (lhs - rhs).abs() })
}
