//! Graph kernels over per-node features: the degree-sliced kernel (inner
//! products restricted to equal-degree pairs, computed through its factored
//! feature map), the plain sum kernel, and the discrete-color subtree
//! kernel. Gram assembly parallelizes over matrix cells.

use std::collections::{BTreeSet, HashMap};

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::wl::ColorMap;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Degree-sliced kernel: sum over node pairs with equal degree of the
/// feature inner product. Computed via the factored form: per-degree
/// feature-row sums over the union degree vocabulary, then a dot product
/// of the stacked slices.
pub fn dwl_kernel(
    feats1: &Tensor<f64>,
    degrees1: &[usize],
    feats2: &Tensor<f64>,
    degrees2: &[usize],
) -> Result<f64> {
    if feats1.cols() != feats2.cols() {
        return Err(Error::shape(
            format!("{} feature columns", feats1.cols()),
            format!("{}", feats2.cols()),
        ));
    }
    if feats1.rows() != degrees1.len() || feats2.rows() != degrees2.len() {
        return Err(Error::shape(
            "degree array per feature row".to_string(),
            format!("{}/{} vs {}/{}", feats1.rows(), degrees1.len(), feats2.rows(), degrees2.len()),
        ));
    }
    let vocab: BTreeSet<usize> = degrees1.iter().chain(degrees2).copied().collect();
    let w = feats1.cols();
    let mut total = 0.0;
    for &d in &vocab {
        let mut c1 = vec![0.0f64; w];
        for (v, &dv) in degrees1.iter().enumerate() {
            if dv == d {
                for (a, &x) in c1.iter_mut().zip(feats1.row(v)) {
                    *a += x;
                }
            }
        }
        let mut c2 = vec![0.0f64; w];
        for (v, &dv) in degrees2.iter().enumerate() {
            if dv == d {
                for (a, &x) in c2.iter_mut().zip(feats2.row(v)) {
                    *a += x;
                }
            }
        }
        total += c1.iter().zip(&c2).map(|(a, b)| a * b).sum::<f64>();
    }
    Ok(total)
}

/// Sum-pooling kernel: inner product of the two feature-row sums.
pub fn mwl_kernel(feats1: &Tensor<f64>, feats2: &Tensor<f64>) -> Result<f64> {
    if feats1.cols() != feats2.cols() {
        return Err(Error::shape(
            format!("{} feature columns", feats1.cols()),
            format!("{}", feats2.cols()),
        ));
    }
    let w = feats1.cols();
    let sum_rows = |t: &Tensor<f64>| {
        let mut s = vec![0.0f64; w];
        for v in 0..t.rows() {
            for (a, &x) in s.iter_mut().zip(t.row(v)) {
                *a += x;
            }
        }
        s
    };
    let s1 = sum_rows(feats1);
    let s2 = sum_rows(feats2);
    Ok(s1.iter().zip(&s2).map(|(a, b)| a * b).sum())
}

/// Discrete subtree kernel: number of node pairs sharing a color. Colors
/// must come from one shared dictionary to be comparable.
pub fn wl_subtree_kernel(c1: &ColorMap, c2: &ColorMap) -> f64 {
    let h1 = c1.histogram();
    let h2: HashMap<u32, usize> = c2.histogram();
    h1.iter()
        .map(|(color, &n1)| n1 as f64 * h2.get(color).map_or(0.0, |&n2| n2 as f64))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GramKernel {
    Dwl,
    Mwl,
    WlSubtree,
}

impl std::str::FromStr for GramKernel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dwl" => Ok(GramKernel::Dwl),
            "mwl" => Ok(GramKernel::Mwl),
            "wlsubtree" => Ok(GramKernel::WlSubtree),
            other => Err(Error::Config(format!("unknown kernel {other:?}"))),
        }
    }
}

/// Symmetric kernel matrix over a graph collection.
#[derive(Debug, Clone)]
pub struct KernelGram {
    pub t: usize,
    pub values: Vec<f64>,
}

impl KernelGram {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.t + j]
    }

    pub fn min_eigenvalue(&self) -> f64 {
        symmetric_min_eigenvalue(&self.values, self.t)
    }
}

fn fill_gram(t: usize, eval: impl Fn(usize, usize) -> f64 + Sync) -> KernelGram {
    let pairs: Vec<(usize, usize)> = (0..t).flat_map(|i| (i..t).map(move |j| (i, j))).collect();
    #[cfg(feature = "parallel")]
    let cells: Vec<f64> = pairs.par_iter().map(|&(i, j)| eval(i, j)).collect();
    #[cfg(not(feature = "parallel"))]
    let cells: Vec<f64> = pairs.iter().map(|&(i, j)| eval(i, j)).collect();
    let mut values = vec![0.0; t * t];
    for (&(i, j), &v) in pairs.iter().zip(&cells) {
        values[i * t + j] = v;
        values[j * t + i] = v;
    }
    KernelGram { t, values }
}

/// Gram matrix of the feature-based kernels over per-graph
/// (features, degrees) pairs.
pub fn gram_from_features(
    per_graph: &[(Tensor<f64>, Vec<usize>)],
    kernel: GramKernel,
) -> Result<KernelGram> {
    if matches!(kernel, GramKernel::WlSubtree) {
        return Err(Error::Unsupported(
            "subtree kernel needs discrete colors, not feature rows".into(),
        ));
    }
    let t = per_graph.len();
    for (f, d) in per_graph {
        if f.rows() != d.len() {
            return Err(Error::shape("degrees per row".to_string(), "mismatch".to_string()));
        }
    }
    Ok(fill_gram(t, |i, j| match kernel {
        GramKernel::Dwl => dwl_kernel(
            &per_graph[i].0,
            &per_graph[i].1,
            &per_graph[j].0,
            &per_graph[j].1,
        )
        .expect("shapes validated"),
        GramKernel::Mwl => mwl_kernel(&per_graph[i].0, &per_graph[j].0).expect("shapes validated"),
        GramKernel::WlSubtree => unreachable!(),
    }))
}

/// Gram matrix of the subtree kernel over per-graph color maps (which must
/// share one dictionary).
pub fn gram_wl_subtree(colors: &[ColorMap]) -> KernelGram {
    fill_gram(colors.len(), |i, j| wl_subtree_kernel(&colors[i], &colors[j]))
}

/// Smallest eigenvalue of a symmetric matrix by cyclic Jacobi rotations.
/// Sized for the small Gram matrices produced here.
pub fn symmetric_min_eigenvalue(a: &[f64], n: usize) -> f64 {
    assert_eq!(a.len(), n * n);
    if n == 0 {
        return 0.0;
    }
    let mut m = a.to_vec();
    let idx = |i: usize, j: usize| i * n + j;
    let fro = a.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for i in 0..n {
            for j in i + 1..n {
                off += m[idx(i, j)] * m[idx(i, j)];
            }
        }
        if off.sqrt() < 1e-14 * fro {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[idx(p, q)];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = m[idx(p, p)];
                let aqq = m[idx(q, q)];
                // rotation angle satisfying tan(2phi) = 2*apq / (app - aqq)
                let phi = 0.5 * (2.0 * apq).atan2(app - aqq);
                let (s, c) = phi.sin_cos();
                for k in 0..n {
                    let mkp = m[idx(k, p)];
                    let mkq = m[idx(k, q)];
                    m[idx(k, p)] = c * mkp + s * mkq;
                    m[idx(k, q)] = -s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[idx(p, k)];
                    let mqk = m[idx(q, k)];
                    m[idx(p, k)] = c * mpk + s * mqk;
                    m[idx(q, k)] = -s * mpk + c * mqk;
                }
            }
        }
    }
    (0..n).map(|i| m[idx(i, i)]).fold(f64::INFINITY, f64::min)
}
