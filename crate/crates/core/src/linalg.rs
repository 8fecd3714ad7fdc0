//! Dense vector helpers, symmetric matrices built from rank-one updates, and
//! power iteration for the top eigenpair of a PSD matrix.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::RngStream;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn scale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|v| v * s).collect()
}

/// Unit vector in the direction of `a`, or `None` for the zero vector.
pub fn normalized(a: &[f64]) -> Option<Vec<f64>> {
    let n = norm(a);
    (n > 0.0).then(|| scale(a, 1.0 / n))
}

/// Flips `v` so that its largest-magnitude coordinate (lowest index on ties)
/// is non-negative.
pub fn canonicalize_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Dense symmetric `d x d` matrix, stored in full row-major form.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    entries: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            entries: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::diagonal(&vec![1.0; dim])
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, v) in diag.iter().enumerate() {
            m.entries[i * m.dim + i] = *v;
        }
        m
    }

    /// Builds from a full row-major matrix, rejecting asymmetric input.
    pub fn from_row_major(dim: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                found: entries.len(),
            });
        }
        for i in 0..dim {
            for j in 0..i {
                if entries[i * dim + j] != entries[j * dim + i] {
                    return Err(invalid("matrix", format!("entry ({i},{j}) is not symmetric")));
                }
            }
        }
        Ok(Self { dim, entries })
    }

    /// `sum_i w_i v_i v_i^T` over the given vectors.
    pub fn from_weighted_outer<'a, I>(dim: usize, vectors: I, weight: f64) -> Self
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut m = Self::zeros(dim);
        for v in vectors {
            m.add_upper_outer(v, weight);
        }
        m.mirror_upper();
        m
    }

    /// Adds `c * x x^T` preserving exact symmetry.
    pub fn add_outer(&mut self, x: &[f64], c: f64) {
        self.add_upper_outer(x, c);
        self.mirror_upper();
    }

    /// Adds `c * I`.
    pub fn add_identity(&mut self, c: f64) {
        for i in 0..self.dim {
            self.entries[i * self.dim + i] += c;
        }
    }

    fn add_upper_outer(&mut self, x: &[f64], c: f64) {
        debug_assert_eq!(x.len(), self.dim);
        let d = self.dim;
        for (i, &xi) in x.iter().enumerate() {
            let a = c * xi;
            let row = &mut self.entries[i * d + i..(i + 1) * d];
            for (e, &xj) in row.iter_mut().zip(&x[i..]) {
                *e += a * xj;
            }
        }
    }

    fn mirror_upper(&mut self) {
        let d = self.dim;
        for i in 0..d {
            for j in 0..i {
                self.entries[i * d + j] = self.entries[j * d + i];
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    pub fn as_row_major(&self) -> &[f64] {
        &self.entries
    }

    pub fn mul_vec(&self, v: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(self.entries.chunks_exact(self.dim)) {
            *o = dot(row, v);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenConfig {
    /// Stop once `||M v - lambda v||` drops to this value.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for EigenConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenPair {
    pub value: f64,
    pub vector: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

impl EigenPair {
    pub fn converged(&self, tol: f64) -> bool {
        self.residual <= tol
    }
}

/// Power iteration from a random unit start drawn from `stream`.
///
/// Non-convergence is not an error: the last iterate is returned and
/// `residual > cfg.tol` tells the caller.
pub fn top_eigenpair(m: &SymMatrix, cfg: &EigenConfig, stream: RngStream) -> EigenPair {
    let d = m.dim();
    let mut rng = stream.rng();
    let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    v = normalized(&v).unwrap_or_else(|| {
        let mut e = vec![0.0; d];
        e[0] = 1.0;
        e
    });

    let mut w = vec![0.0; d];
    let mut value = 0.0;
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < cfg.max_iter.max(1) {
        iterations += 1;
        m.mul_vec(&v, &mut w);
        value = dot(&v, &w);
        residual = w
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - value * b).powi(2))
            .sum::<f64>()
            .sqrt();
        if residual <= cfg.tol {
            break;
        }
        let wn = norm(&w);
        if wn == 0.0 {
            // v lies in the null space; M is zero on span(v) and nothing to refine.
            break;
        }
        v.iter_mut().zip(&w).for_each(|(a, b)| *a = b / wn);
    }
    canonicalize_sign(&mut v);
    EigenPair {
        value,
        vector: v,
        iterations,
        residual,
    }
}
