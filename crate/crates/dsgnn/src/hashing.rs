//! Feature hashing: seeded signed bucketing of coordinates and the inner
//! product it induces. The induced kernel is an unbiased estimator of the
//! plain inner product, which the verification suite checks by Monte Carlo.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Finalizing 64-bit avalanche mixer (the splitmix64 finalizer).
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seeded hash map specification: output dimension plus the two seeds that
/// define the bucket function and the sign function. Given the spec, both
/// functions are pure in the coordinate index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashSpec {
    pub m: usize,
    pub seed1: u64,
    pub seed2: u64,
}

impl HashSpec {
    pub fn new(m: usize, seed1: u64, seed2: u64) -> Self {
        assert!(m >= 1, "hash output dimension must be at least 1");
        Self { m, seed1, seed2 }
    }

    /// Two independent-looking specs derived from one master seed.
    pub fn from_master(m: usize, master: u64) -> Self {
        Self::new(
            m,
            mix64(master ^ 0xA5A5_A5A5_A5A5_A5A5),
            mix64(master ^ 0x5A5A_5A5A_5A5A_5A5A),
        )
    }

    /// Bucket for coordinate `j`, in `0..m`.
    #[inline]
    pub fn bucket(&self, j: usize) -> usize {
        (mix64(self.seed1 ^ j as u64) % self.m as u64) as usize
    }

    /// Sign for coordinate `j`.
    #[inline]
    pub fn sign(&self, j: usize) -> f64 {
        if mix64(self.seed2 ^ j as u64) & 1 == 0 {
            1.0
        } else {
            -1.0
        }
    }
}

/// Materialized bucket/sign tables for a fixed input dimension. The model
/// layers precompute these so the per-row map is two flat lookups.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiTable {
    pub m: usize,
    pub bucket: Vec<u32>,
    pub sign: Vec<i8>,
}

impl PhiTable {
    pub fn from_spec(spec: &HashSpec, input_dim: usize) -> Self {
        Self {
            m: spec.m,
            bucket: (0..input_dim).map(|j| spec.bucket(j) as u32).collect(),
            sign: (0..input_dim)
                .map(|j| if spec.sign(j) > 0.0 { 1 } else { -1 })
                .collect(),
        }
    }

    /// Test/diagnostic constructor with explicit tables.
    pub fn from_parts(m: usize, bucket: Vec<u32>, sign: Vec<i8>) -> Result<Self> {
        if bucket.len() != sign.len() {
            return Err(Error::shape(
                format!("{} signs", bucket.len()),
                format!("{}", sign.len()),
            ));
        }
        if bucket.iter().any(|&b| b as usize >= m) {
            return Err(Error::Validation("bucket index out of range".into()));
        }
        Ok(Self { m, bucket, sign })
    }

    /// Identity-like table: coordinate j goes to bucket j with sign +1.
    /// Requires `m >= input_dim`; hashing through it is lossless.
    pub fn injective(m: usize, input_dim: usize) -> Result<Self> {
        if m < input_dim {
            return Err(Error::Validation(format!(
                "injective table needs m >= input dim ({m} < {input_dim})"
            )));
        }
        Ok(Self {
            m,
            bucket: (0..input_dim as u32).collect(),
            sign: vec![1; input_dim],
        })
    }

    #[inline]
    pub fn input_dim(&self) -> usize {
        self.bucket.len()
    }

    /// out[b] += sign(j) * x[j] for every j with bucket(j) = b.
    pub fn apply_into<T: crate::tensor::Scalar>(&self, x: &[T], out: &mut [T]) {
        debug_assert_eq!(x.len(), self.bucket.len());
        debug_assert_eq!(out.len(), self.m);
        for (j, &xv) in x.iter().enumerate() {
            let b = self.bucket[j] as usize;
            if self.sign[j] > 0 {
                out[b] += xv;
            } else {
                out[b] += -xv;
            }
        }
    }

    /// Adjoint of `apply_into`: grad_x[j] = sign(j) * grad_out[bucket(j)].
    pub fn adjoint_into<T: crate::tensor::Scalar>(&self, grad_out: &[T], grad_x: &mut [T]) {
        debug_assert_eq!(grad_x.len(), self.bucket.len());
        for (j, g) in grad_x.iter_mut().enumerate() {
            let b = self.bucket[j] as usize;
            if self.sign[j] > 0 {
                *g += grad_out[b];
            } else {
                *g += -grad_out[b];
            }
        }
    }
}

/// Hash map of a vector under the given spec.
pub fn phi(x: &[f64], spec: &HashSpec) -> Vec<f64> {
    let table = PhiTable::from_spec(spec, x.len());
    let mut out = vec![0.0; spec.m];
    table.apply_into(x, &mut out);
    out
}

/// Inner product of the two hash images, an unbiased estimate of <x, x'>.
pub fn hash_kernel(x: &[f64], x_prime: &[f64], spec: &HashSpec) -> Result<f64> {
    if x.len() != x_prime.len() {
        return Err(Error::shape(
            format!("{} coordinates", x.len()),
            format!("{}", x_prime.len()),
        ));
    }
    let a = phi(x, spec);
    let b = phi(x_prime, spec);
    Ok(a.iter().zip(&b).map(|(u, v)| u * v).sum())
}

/// Per-task specs derived from a master spec by xor-ing the task id into
/// both seeds. Tasks whose materialized bucket table collides with an
/// earlier task are reseeded (bounded attempts, since for tiny m or input
/// dim distinct tables may not exist); the number of reseeds is returned.
pub fn derive_task_specs(
    master: &HashSpec,
    n_tasks: usize,
    input_dim: usize,
) -> (Vec<HashSpec>, usize) {
    let mut specs: Vec<HashSpec> = Vec::with_capacity(n_tasks);
    let mut tables: Vec<Vec<u32>> = Vec::with_capacity(n_tasks);
    let mut reseeds = 0usize;
    for task in 0..n_tasks {
        let mut spec = HashSpec::new(
            master.m,
            master.seed1 ^ (task as u64 + 1),
            master.seed2 ^ (task as u64 + 1),
        );
        let mut table = PhiTable::from_spec(&spec, input_dim).bucket;
        let mut attempts = 0;
        while tables.contains(&table) && attempts < 16 {
            reseeds += 1;
            attempts += 1;
            spec = HashSpec::new(spec.m, mix64(spec.seed1), mix64(spec.seed2));
            table = PhiTable::from_spec(&spec, input_dim).bucket;
        }
        tables.push(table);
        specs.push(spec);
    }
    (specs, reseeds)
}
