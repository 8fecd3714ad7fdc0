//! Flip-probability estimation from the correlation of adjacent sample pairs
//! against a (possibly mismatched) reference mean `theta_sharp`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg;
use crate::model::SampleSet;
use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaEstimate {
    pub rho_raw: f64,
    pub delta_raw: f64,
    pub delta_clamped: f64,
    pub pairs_used: usize,
}

impl DeltaEstimate {
    fn from_rho(rho_raw: f64, pairs_used: usize, clamp: (f64, f64)) -> Self {
        let delta_raw = (1.0 - rho_raw) / 2.0;
        Self {
            rho_raw,
            delta_raw,
            delta_clamped: delta_raw.clamp(clamp.0, clamp.1),
            pairs_used,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhoOptions {
    pub clamp: (f64, f64),
    /// Multiply each pair by an independent sign before correlating. The
    /// statistic is invariant to it; the option exists for experiments that
    /// mirror the independent-pairs analysis.
    pub pair_randomization: Option<RngStream>,
}

impl Default for RhoOptions {
    fn default() -> Self {
        Self {
            clamp: (0.0, 1.0),
            pair_randomization: None,
        }
    }
}

/// `rho_hat = (1/||theta_sharp||^2) (2/n') sum_i X_{2i}^T X_{2i-1}` over the
/// `n' = 2 floor(n/2)` leading samples, and `delta_hat = (1 - rho_hat) / 2`.
pub fn estimate_rho(samples: &SampleSet, theta_sharp: &[f64]) -> Result<DeltaEstimate> {
    estimate_rho_with(samples, theta_sharp, &RhoOptions::default())
}

pub fn estimate_rho_with(
    samples: &SampleSet,
    theta_sharp: &[f64],
    opts: &RhoOptions,
) -> Result<DeltaEstimate> {
    let scale2 = reference_norm_sq(samples, theta_sharp)?;
    if samples.n() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            found: samples.n(),
        });
    }
    if !(opts.clamp.0 <= opts.clamp.1) {
        return Err(invalid("clamp", "lower bound exceeds upper bound"));
    }
    let pairs = samples.n() / 2;
    let mut signs = opts.pair_randomization.map(|s| s.rng());
    let mut acc = 0.0;
    for i in 0..pairs {
        let (odd, even) = (samples.row(2 * i), samples.row(2 * i + 1));
        let mut c = linalg::dot(even, odd);
        if let Some(rng) = signs.as_mut() {
            let r = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            c = linalg::dot(&linalg::scale(even, r), &linalg::scale(odd, r));
        }
        acc += c;
    }
    let rho = acc / pairs as f64 / scale2;
    Ok(DeltaEstimate::from_rho(rho, pairs, opts.clamp))
}

/// `U_i = theta_sharp^T X_i / ||theta_sharp||` as a one-column sample set.
pub fn project_onto(samples: &SampleSet, theta_sharp: &[f64]) -> Result<SampleSet> {
    let norm = reference_norm_sq(samples, theta_sharp)?.sqrt();
    let u: Vec<f64> = samples
        .rows()
        .map(|r| linalg::dot(theta_sharp, r) / norm)
        .collect();
    SampleSet::from_flat(u, samples.n(), 1)
}

fn reference_norm_sq(samples: &SampleSet, theta_sharp: &[f64]) -> Result<f64> {
    if theta_sharp.len() != samples.d() {
        return Err(Error::DimensionMismatch {
            expected: samples.d(),
            found: theta_sharp.len(),
        });
    }
    let s = linalg::dot(theta_sharp, theta_sharp);
    if s == 0.0 {
        return Err(Error::ZeroReference);
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{sample_hmm, ModelParams};
    use proptest::prelude::*;

    fn noiseless(theta: &[f64], signs: &[f64]) -> SampleSet {
        let rows: Vec<Vec<f64>> = signs.iter().map(|s| linalg::scale(theta, *s)).collect();
        SampleSet::from_rows(&rows).unwrap()
    }

    #[test]
    fn frozen_and_alternating_signs() {
        let theta = [1.0, -2.0, 0.5];
        let est = estimate_rho(&noiseless(&theta, &[1.0; 8]), &theta).unwrap();
        assert_eq!((est.rho_raw, est.delta_raw), (1.0, 0.0));
        let alt: Vec<f64> = (0..8).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let est = estimate_rho(&noiseless(&theta, &alt), &theta).unwrap();
        assert_eq!((est.rho_raw, est.delta_raw), (-1.0, 1.0));
        assert_eq!(est.pairs_used, 4);
    }

    #[test]
    fn odd_trailing_sample_is_dropped() {
        let theta = [1.0];
        let mut signs = vec![1.0; 6];
        signs.push(-1.0);
        let est = estimate_rho(&noiseless(&theta, &signs), &theta).unwrap();
        assert_eq!(est.pairs_used, 3);
        assert_eq!(est.rho_raw, 1.0);
    }

    #[test]
    fn mismatch_bias_is_inverse_square_scale() {
        let theta = [0.6, 0.8];
        let sharp = linalg::scale(&theta, 1.2);
        let est = estimate_rho(&noiseless(&theta, &[-1.0; 10]), &sharp).unwrap();
        assert!((est.rho_raw - 1.0 / 1.44).abs() < 1e-12);
    }

    #[test]
    fn zero_reference_is_rejected() {
        let x = noiseless(&[1.0, 1.0], &[1.0; 4]);
        assert_eq!(estimate_rho(&x, &[0.0, 0.0]), Err(Error::ZeroReference));
        assert_eq!(project_onto(&x, &[0.0, 0.0]), Err(Error::ZeroReference));
        assert!(estimate_rho(&noiseless(&[1.0], &[1.0]), &[1.0]).is_err());
    }

    #[test]
    fn projection_examples() {
        let params = ModelParams::new(vec![0.3, 1.0, -0.2], 0.2, 50).unwrap();
        let (_, x) = sample_hmm(&params, RngStream::new(1, 2)).unwrap();
        let e1 = project_onto(&x, &[1.0, 0.0, 0.0]).unwrap();
        let e1_scaled = project_onto(&x, &[2.0, 0.0, 0.0]).unwrap();
        for (i, r) in x.rows().enumerate() {
            assert_eq!(e1.row(i)[0], r[0]);
        }
        assert_eq!(e1, e1_scaled);

        let params = ModelParams::new(vec![0.9], 0.2, 51).unwrap();
        let (_, x) = sample_hmm(&params, RngStream::new(1, 3)).unwrap();
        let u = project_onto(&x, &[0.9]).unwrap();
        let direct = estimate_rho(&x, &[0.9]).unwrap();
        let projected = estimate_rho(&u, &[0.9]).unwrap();
        assert!((direct.rho_raw - projected.rho_raw).abs() < 1e-12);
    }

    #[test]
    fn clamping_is_separate_from_raw() {
        let theta = [1.0];
        let x = noiseless(&[3.0], &[1.0; 4]);
        let est = estimate_rho(&x, &theta).unwrap();
        assert_eq!(est.rho_raw, 9.0);
        assert_eq!(est.delta_raw, -4.0);
        assert_eq!(est.delta_clamped, 0.0);
        let opts = RhoOptions {
            clamp: (0.01, 0.5),
            ..Default::default()
        };
        assert_eq!(estimate_rho_with(&x, &theta, &opts).unwrap().delta_clamped, 0.01);
    }

    #[test]
    fn pair_randomization_leaves_statistic_unchanged() {
        let params = ModelParams::new(vec![0.4, -0.7], 0.15, 301).unwrap();
        let (_, x) = sample_hmm(&params, RngStream::new(5, 0)).unwrap();
        let opts = RhoOptions {
            pair_randomization: Some(RngStream::new(5, 1)),
            ..Default::default()
        };
        assert_eq!(
            estimate_rho(&x, &[0.4, -0.7]).unwrap(),
            estimate_rho_with(&x, &[0.4, -0.7], &opts).unwrap()
        );
    }

    proptest! {
        #[test]
        fn sign_invariance_and_plug_in(seed in any::<u64>(), delta in 0.0..1.0f64, a in -2.0..2.0f64, b in 0.1..2.0f64) {
            let params = ModelParams::new(vec![a, b], delta, 40).unwrap();
            let (_, x) = sample_hmm(&params, RngStream::new(seed, 0)).unwrap();
            let sharp = [a + 0.1, b];
            let neg = [-(a + 0.1), -b];
            let p = estimate_rho(&x, &sharp).unwrap();
            let q = estimate_rho(&x, &neg).unwrap();
            prop_assert_eq!(&p, &q);
            // identity holds up to the final rounding of the sum
            prop_assert!((p.delta_raw + p.rho_raw / 2.0 - 0.5).abs() <= f64::EPSILON * p.rho_raw.abs().max(1.0));
            prop_assert_eq!(p.delta_raw, (1.0 - p.rho_raw) / 2.0);
            prop_assert!(p.delta_clamped >= 0.0 && p.delta_clamped <= 1.0);
        }
    }
}
