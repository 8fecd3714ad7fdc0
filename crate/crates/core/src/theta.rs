//! Block-averaged covariance (PCA) estimator of the mean with a known flip
//! probability, plus the rate functions used as theoretical overlays.
//!
//! Samples are cut into `ell = floor(n / k)` consecutive blocks of length `k`.
//! Each block mean is multiplied by an independent Rademacher sign, and the
//! estimate is read off the top eigenpair of the empirical second-moment
//! matrix of the block means:
//!
//! ```text
//! theta_hat = sqrt((lambda_max - 1/k)_+ / xi_k) * v_max
//! ```
//!
//! where `xi_k = E[(mean of k consecutive signs)^2]`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{self, EigenConfig, SymMatrix};
use crate::model::{check_delta, SampleSet};
use crate::rng::RngStream;

/// Second moment of the mean of `k` consecutive chain signs.
///
/// Uses `E[S_i S_j] = rho^|i-j|`, so
/// `xi_k = (k + 2 sum_{m=1}^{k-1} (k - m) rho^m) / k^2`.
pub fn xi_k(k: usize, delta: f64) -> f64 {
    assert!(k >= 1, "block length must be positive");
    let rho = 1.0 - 2.0 * delta;
    let mut acc = k as f64;
    let mut rho_m = 1.0;
    for m in 1..k {
        rho_m *= rho;
        acc += 2.0 * (k - m) as f64 * rho_m;
    }
    acc / (k * k) as f64
}

/// Block length `floor(1 / (divisor * delta))` clamped to `[1, n]`, with
/// `delta = 0` mapping to `n`.
pub fn block_length_for(delta: f64, divisor: f64, n: usize) -> usize {
    let n = n.max(1);
    if delta <= 0.0 {
        return n;
    }
    let raw = (1.0 / (divisor * delta)).floor();
    if raw >= n as f64 {
        n
    } else {
        (raw as usize).clamp(1, n)
    }
}

/// Sign-randomized block means.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSummary {
    pub k: usize,
    pub ell: usize,
    /// `ell x d`, row `i` is `R_i * mean(block i)`.
    pub block_means: SampleSet,
    pub dropped_samples: usize,
}

pub fn block_average(samples: &SampleSet, k: usize, stream: RngStream) -> Result<BlockSummary> {
    let n = samples.n();
    if k == 0 {
        return Err(invalid("k", "block length must be positive"));
    }
    if k > n {
        return Err(Error::BlockTooLong { k, n });
    }
    let d = samples.d();
    let ell = n / k;
    let mut rng = stream.rng();
    let mut data = vec![0.0; ell * d];
    let inv_k = 1.0 / k as f64;
    for (b, out) in data.chunks_exact_mut(d).enumerate() {
        for j in b * k..(b + 1) * k {
            for (o, x) in out.iter_mut().zip(samples.row(j)) {
                *o += x;
            }
        }
        let sign = if rng.random_bool(0.5) { inv_k } else { -inv_k };
        out.iter_mut().for_each(|o| *o *= sign);
    }
    Ok(BlockSummary {
        k,
        ell,
        block_means: SampleSet::from_flat(data, ell, d)?,
        dropped_samples: n - ell * k,
    })
}

/// `(1/ell) sum_i Xbar_i Xbar_i^T`.
pub fn empirical_block_cov(blocks: &BlockSummary) -> SymMatrix {
    let x = &blocks.block_means;
    SymMatrix::from_weighted_outer(x.d(), x.rows(), 1.0 / x.n() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaEstimate {
    pub theta_hat: Vec<f64>,
    pub lambda_max: f64,
    pub k_used: usize,
    pub xi_k: f64,
    pub eigen_residual: f64,
}

/// Applies the estimator to an already-formed second-moment matrix.
pub fn theta_from_covariance(
    cov: &SymMatrix,
    k: usize,
    xi: f64,
    eigen: &EigenConfig,
    stream: RngStream,
) -> Result<ThetaEstimate> {
    if k == 0 {
        return Err(invalid("k", "block length must be positive"));
    }
    if !(xi > 0.0 && xi <= 1.0 + 1e-12) {
        return Err(invalid("xi", format!("{xi} is outside (0, 1]")));
    }
    let pair = linalg::top_eigenpair(cov, eigen, stream);
    let excess = (pair.value - 1.0 / k as f64).max(0.0);
    let scale = (excess / xi).sqrt();
    let mut theta_hat = linalg::scale(&pair.vector, scale);
    // Keep exact zeros rather than -0.0 after canonicalization.
    if scale == 0.0 {
        theta_hat.iter_mut().for_each(|v| *v = 0.0);
    }
    Ok(ThetaEstimate {
        theta_hat,
        lambda_max: pair.value,
        k_used: k,
        xi_k: xi,
        eigen_residual: pair.residual,
    })
}

/// Block-PCA estimate with an explicit block length `k`; `xi_delta` is the
/// flip probability at which `xi_k` is evaluated.
pub fn estimate_theta_with_block(
    samples: &SampleSet,
    k: usize,
    xi_delta: f64,
    eigen: &EigenConfig,
    stream: RngStream,
) -> Result<ThetaEstimate> {
    check_delta(xi_delta)?;
    let blocks = block_average(samples, k, stream.substream(0))?;
    let cov = empirical_block_cov(&blocks);
    theta_from_covariance(&cov, k, xi_k(k, xi_delta), eigen, stream.substream(1))
}

/// Estimator for known `delta` with `k = floor(1 / (8 delta))`.
///
/// For `delta > 1/2` the even samples are negated first, which turns the
/// chain into one with flip probability `1 - delta`.
pub fn estimate_theta_known_delta(
    samples: &SampleSet,
    delta: f64,
    eigen: &EigenConfig,
    stream: RngStream,
) -> Result<ThetaEstimate> {
    check_delta(delta)?;
    if delta > 0.5 {
        let folded = samples.negate_even_samples();
        return estimate_theta_known_delta(&folded, 1.0 - delta, eigen, stream);
    }
    let k = block_length_for(delta, 8.0, samples.n());
    estimate_theta_with_block(samples, k, delta, eigen, stream)
}

/// `sqrt(d/n) v (delta d / n)^{1/4}`.
pub fn rate_beta(n: usize, d: usize, delta: f64) -> f64 {
    let r = d as f64 / n as f64;
    r.sqrt().max((delta * r).powf(0.25))
}

/// Deviation scale of the top eigenvalue:
/// `2 sqrt(delta k^2 / n) t^2 + 2 sqrt(d/n) t + 13 sqrt(d/(n k)) + 10 d/n`.
pub fn rate_psi(n: usize, d: usize, delta: f64, k: usize, t: f64) -> f64 {
    let (n, d, k) = (n as f64, d as f64, k as f64);
    2.0 * (delta * k * k / n).sqrt() * t * t
        + 2.0 * (d / n).sqrt() * t
        + 13.0 * (d / (n * k)).sqrt()
        + 10.0 * d / n
}
