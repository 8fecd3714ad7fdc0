//! The binary symmetric Markov sign chain and the Gaussian observation model
//! `X_i = S_i * theta + Z_i`, together with the sign-ambiguous loss.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg;
use crate::rng::RngStream;

/// Ground truth for one simulation: signal `theta_star`, flip probability
/// `delta` and sample count `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    theta_star: Vec<f64>,
    delta: f64,
    n: usize,
}

impl ModelParams {
    pub fn new(theta_star: Vec<f64>, delta: f64, n: usize) -> Result<Self> {
        if theta_star.is_empty() {
            return Err(invalid("theta_star", "dimension must be at least 1"));
        }
        if theta_star.iter().any(|v| !v.is_finite()) {
            return Err(invalid("theta_star", "entries must be finite"));
        }
        check_delta(delta)?;
        if n == 0 {
            return Err(invalid("n", "sample count must be positive"));
        }
        Ok(Self {
            theta_star,
            delta,
            n,
        })
    }

    pub fn theta_star(&self) -> &[f64] {
        &self.theta_star
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.theta_star.len()
    }

    /// Signal strength `t = ||theta_star||`.
    pub fn t(&self) -> f64 {
        linalg::norm(&self.theta_star)
    }

    /// Adjacent-sign correlation `1 - 2 delta`.
    pub fn rho(&self) -> f64 {
        1.0 - 2.0 * self.delta
    }
}

pub(crate) fn check_delta(delta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(invalid("delta", format!("{delta} is outside [0, 1]")));
    }
    Ok(())
}

/// Hidden signs `S_0, ..., S_n`. Only `S_1..S_n` drive observations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SignSequence(Vec<i8>);

impl SignSequence {
    pub fn from_values(values: Vec<i8>) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("signs", "sequence must contain S_0"));
        }
        if let Some(bad) = values.iter().find(|&&s| s != 1 && s != -1) {
            return Err(invalid("signs", format!("entry {bad} is not +1 or -1")));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[i8] {
        &self.0
    }

    /// Number of observed steps `n` (the sequence stores `n + 1` values).
    pub fn steps(&self) -> usize {
        self.0.len() - 1
    }

    /// `S_i` for `i` in `0..=n`.
    pub fn get(&self, i: usize) -> f64 {
        f64::from(self.0[i])
    }

    pub fn flip_count(&self) -> usize {
        self.0.windows(2).filter(|w| w[0] != w[1]).count()
    }
}

/// An `n x d` observation matrix stored row-major; row `i` is `X_{i+1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    data: Vec<f64>,
    n: usize,
    d: usize,
}

impl SampleSet {
    pub fn from_flat(data: Vec<f64>, n: usize, d: usize) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(invalid("samples", "n and d must both be positive"));
        }
        if data.len() != n * d {
            return Err(Error::DimensionMismatch {
                expected: n * d,
                found: data.len(),
            });
        }
        Ok(Self { data, n, d })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(n * d);
        for row in rows {
            let row = row.as_ref();
            if row.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::from_flat(data, n, d)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.d)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    /// Copy of rows `start..end`.
    pub fn slice_rows(&self, start: usize, end: usize) -> Result<SampleSet> {
        if start >= end || end > self.n {
            return Err(invalid(
                "rows",
                format!("range {start}..{end} is empty or exceeds {}", self.n),
            ));
        }
        Self::from_flat(self.data[start * self.d..end * self.d].to_vec(), end - start, self.d)
    }

    /// Negates rows at odd zero-based index, i.e. the even samples `X_2, X_4, ...`.
    /// Maps a chain with flip probability `delta` to one with `1 - delta`.
    pub fn negate_even_samples(&self) -> SampleSet {
        let mut data = self.data.clone();
        for (i, row) in data.chunks_exact_mut(self.d).enumerate() {
            if i % 2 == 1 {
                row.iter_mut().for_each(|v| *v = -*v);
            }
        }
        SampleSet {
            data,
            n: self.n,
            d: self.d,
        }
    }
}

/// Draws `S_0..S_n` from the stationary binary symmetric chain.
pub fn sample_sign_chain(n: usize, delta: f64, stream: RngStream) -> Result<SignSequence> {
    check_delta(delta)?;
    let mut rng = stream.rng();
    let mut values = Vec::with_capacity(n + 1);
    let mut s: i8 = if rng.random_bool(0.5) { 1 } else { -1 };
    values.push(s);
    for _ in 0..n {
        if rng.random::<f64>() < delta {
            s = -s;
        }
        values.push(s);
    }
    Ok(SignSequence(values))
}

/// Samples the hidden chain and the observations. Signs and noise come from
/// separate substreams of `stream`.
pub fn sample_hmm(params: &ModelParams, stream: RngStream) -> Result<(SignSequence, SampleSet)> {
    let signs = sample_sign_chain(params.n, params.delta, stream.substream(0))?;
    let d = params.d();
    let mut rng = stream.substream(1).rng();
    let mut data = Vec::with_capacity(params.n * d);
    for i in 1..=params.n {
        let s = signs.get(i);
        for &theta in &params.theta_star {
            let z: f64 = rng.sample(StandardNormal);
            data.push(s * theta + z);
        }
    }
    Ok((signs, SampleSet::from_flat(data, params.n, d)?))
}

/// `min(||a - b||, ||a + b||)`.
pub fn loss(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    let (mut minus, mut plus) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        minus += (x - y) * (x - y);
        plus += (x + y) * (x + y);
    }
    Ok(minus.min(plus).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_flip_freezes_sign() {
        for id in 0..8 {
            let s = sample_sign_chain(5, 0.0, RngStream::new(1, id)).unwrap();
            assert_eq!(s.values().len(), 6);
            assert!(s.values().iter().all(|&v| v == s.values()[0]));
        }
    }

    #[test]
    fn unit_flip_alternates() {
        let s = sample_sign_chain(5, 1.0, RngStream::new(2, 0)).unwrap();
        assert!(s.values().windows(2).all(|w| w[0] == -w[1]));
    }

    #[test]
    fn flip_frequency_matches_delta() {
        let n = 100_000;
        let s = sample_sign_chain(n, 0.1, RngStream::new(3, 0)).unwrap();
        let frac = s.flip_count() as f64 / n as f64;
        assert!((frac - 0.1).abs() <= 0.01, "flip fraction {frac}");
    }

    #[test]
    fn stationary_marginal_and_correlation() {
        let trials = 20_000u64;
        let delta = 0.2;
        let mut plus = [0usize; 4];
        let mut corr = 0.0;
        for id in 0..trials {
            let s = sample_sign_chain(3, delta, RngStream::new(11, id)).unwrap();
            for (i, p) in plus.iter_mut().enumerate() {
                *p += usize::from(s.values()[i] == 1);
            }
            corr += s.get(1) * s.get(2);
        }
        let tol = 4.0 / (trials as f64).sqrt();
        for p in plus {
            assert!((p as f64 / trials as f64 - 0.5).abs() <= tol);
        }
        assert!((corr / trials as f64 - (1.0 - 2.0 * delta)).abs() <= tol);
    }

    fn column_means(x: &SampleSet) -> Vec<f64> {
        let mut m = vec![0.0; x.d()];
        for row in x.rows() {
            for (a, v) in m.iter_mut().zip(row) {
                *a += v;
            }
        }
        m.iter_mut().for_each(|a| *a /= x.n() as f64);
        m
    }

    #[test]
    fn pure_noise_has_zero_mean() {
        let params = ModelParams::new(vec![0.0; 4], 0.3, 4000).unwrap();
        let (_, x) = sample_hmm(&params, RngStream::new(5, 0)).unwrap();
        let tol = 4.0 / (4000f64).sqrt();
        assert!(column_means(&x).iter().all(|m| m.abs() <= tol));
    }

    #[test]
    fn frozen_positive_sign_recovers_location() {
        let params = ModelParams::new(vec![3.0], 0.0, 4000).unwrap();
        // pick a stream whose S_0 is +1
        let stream = (0..)
            .map(|id| RngStream::new(6, id))
            .find(|s| sample_sign_chain(1, 0.0, s.substream(0)).unwrap().get(0) > 0.0)
            .unwrap();
        let (signs, x) = sample_hmm(&params, stream).unwrap();
        assert_eq!(signs.get(0), 1.0);
        assert!((column_means(&x)[0] - 3.0).abs() <= 4.0 / (4000f64).sqrt());
    }

    #[test]
    fn population_covariance_for_iid_signs() {
        let n = 20_000;
        let params = ModelParams::new(vec![1.0, 0.0], 0.5, n).unwrap();
        let (_, x) = sample_hmm(&params, RngStream::new(8, 0)).unwrap();
        let mut c = [[0.0; 2]; 2];
        for row in x.rows() {
            for i in 0..2 {
                for j in 0..2 {
                    c[i][j] += row[i] * row[j] / n as f64;
                }
            }
        }
        let target = [[2.0, 0.0], [0.0, 1.0]];
        let mut diff = [0.0; 4];
        for i in 0..2 {
            for j in 0..2 {
                diff[2 * i + j] = c[i][j] - target[i][j];
            }
        }
        // Frobenius norm bounds the operator norm.
        let frob = diff.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(frob <= 10.0 * (2.0 / n as f64).sqrt(), "frob {frob}");
    }

    #[test]
    fn loss_examples() {
        let v = [1.0, -2.0, 0.5];
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        assert_eq!(loss(&v, &neg).unwrap(), 0.0);
        assert!((loss(&v, &[0.0; 3]).unwrap() - linalg::norm(&v)).abs() < 1e-15);
        assert!((loss(&[1.0, 0.0], &[0.0, 1.0]).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert!(matches!(
            loss(&[1.0], &[1.0, 2.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn rejects_bad_params() {
        assert!(ModelParams::new(vec![], 0.1, 3).is_err());
        assert!(ModelParams::new(vec![1.0], 1.5, 3).is_err());
        assert!(ModelParams::new(vec![1.0], 0.1, 0).is_err());
        assert!(SignSequence::from_values(vec![1, 0]).is_err());
        let p = ModelParams::new(vec![3.0, 4.0], 0.25, 3).unwrap();
        assert_eq!(p.t(), 5.0);
        assert_eq!(p.rho(), 0.5);
    }

    #[test]
    fn negating_even_samples_swaps_flip_probability() {
        let params = ModelParams::new(vec![1.0], 1.0, 6).unwrap();
        let (signs, _) = sample_hmm(&params, RngStream::new(1, 1)).unwrap();
        let noiseless: Vec<Vec<f64>> = (1..=6).map(|i| vec![signs.get(i)]).collect();
        let x = SampleSet::from_rows(&noiseless).unwrap().negate_even_samples();
        assert!(x.rows().all(|r| r[0] == x.row(0)[0]));
    }

    proptest! {
        #[test]
        fn loss_symmetries(a in prop::collection::vec(-5.0..5.0f64, 1..6), seed in 0u64..1000) {
            let b: Vec<f64> = a.iter().enumerate().map(|(i, x)| x * 0.3 + (i as f64 + seed as f64).sin()).collect();
            let na: Vec<f64> = a.iter().map(|x| -x).collect();
            let nb: Vec<f64> = b.iter().map(|x| -x).collect();
            let l = loss(&a, &b).unwrap();
            prop_assert!(l >= 0.0);
            prop_assert_eq!(l, loss(&b, &a).unwrap());
            prop_assert_eq!(l, loss(&na, &b).unwrap());
            prop_assert_eq!(l, loss(&a, &nb).unwrap());
        }

        #[test]
        fn sampling_is_deterministic(seed in any::<u64>(), id in any::<u64>()) {
            let params = ModelParams::new(vec![0.5, -1.0, 2.0], 0.2, 17).unwrap();
            let a = sample_hmm(&params, RngStream::new(seed, id)).unwrap();
            let b = sample_hmm(&params, RngStream::new(seed, id)).unwrap();
            prop_assert_eq!(a.0, b.0);
            prop_assert_eq!(a.1.as_flat(), b.1.as_flat());
        }
    }
}
