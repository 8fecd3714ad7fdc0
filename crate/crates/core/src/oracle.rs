//! Brute-force oracles: exact enumeration over sign sequences, finite-alphabet
//! KL computations, Gauss-Hermite quadrature for Gaussian-mixture chi-square
//! divergences, and a Jacobi eigenvalue solver. Everything here is written
//! independently of the estimator code paths it is used to certify.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{self, SymMatrix};
use crate::model::check_delta;
use crate::rng::RngStream;

/// Largest sequence length the enumeration oracles accept (2^24 states).
pub const MAX_ENUMERATION_LEN: usize = 24;

/// Exact law of `S_1..S_len` for the stationary chain. Bit `i` of an index
/// set means `s_{i+1} = -1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactSignDistribution {
    pub len: usize,
    pub delta: f64,
    pub pmf: Vec<f64>,
}

impl ExactSignDistribution {
    pub fn sign(index: usize, i: usize) -> i8 {
        if index >> i & 1 == 1 {
            -1
        } else {
            1
        }
    }

    /// Sum of the signs in sequence `index`.
    pub fn sign_sum(&self, index: usize) -> i64 {
        self.len as i64 - 2 * i64::from(index.count_ones())
    }
}

pub fn enumerate_sign_distribution(len: usize, delta: f64) -> Result<ExactSignDistribution> {
    if len == 0 {
        return Err(invalid("len", "must be at least 1"));
    }
    if len > MAX_ENUMERATION_LEN {
        return Err(Error::EnumerationTooLarge {
            len,
            max: MAX_ENUMERATION_LEN,
        });
    }
    check_delta(delta)?;
    let mut pmf = vec![0.0; 1 << len];
    pmf[0] = 0.5;
    pmf[1] = 0.5;
    // Extend prefixes of length j to length j + 1 in place.
    for j in 1..len {
        for idx in 0..1usize << j {
            let prev = idx >> (j - 1) & 1;
            let p = pmf[idx];
            let (stay, flip) = (p * (1.0 - delta), p * delta);
            let (same, other) = if prev == 0 { (stay, flip) } else { (flip, stay) };
            pmf[idx] = same;
            pmf[idx | 1 << j] = other;
        }
    }
    Ok(ExactSignDistribution { len, delta, pmf })
}

/// Neumaier-compensated sum, so that sums over millions of states stay
/// accurate to a few ulps.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let (mut sum, mut carry) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        carry += if sum.abs() >= v.abs() { (sum - t) + v } else { (v - t) + sum };
        sum = t;
    }
    sum + carry
}

/// `(E[Sbar^2], E[1 - Sbar^2])` for the mean `Sbar` of `k` consecutive signs,
/// by exhaustive enumeration.
pub fn exact_xi_and_gain_deficiency(k: usize, delta: f64) -> Result<(f64, f64)> {
    let dist = enumerate_sign_distribution(k, delta)?;
    let mean_sq = |idx: usize| {
        let mean = dist.sign_sum(idx) as f64 / k as f64;
        mean * mean
    };
    let xi = compensated_sum(dist.pmf.iter().enumerate().map(|(i, p)| p * mean_sq(i)));
    let deficiency =
        compensated_sum(dist.pmf.iter().enumerate().map(|(i, p)| p * (1.0 - mean_sq(i))));
    Ok((xi, deficiency))
}

/// Outcome of one oracle check: the cases examined and any violations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub cases: usize,
    pub violations: Vec<String>,
}

impl CheckReport {
    fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            cases: 0,
            violations: Vec::new(),
        }
    }

    fn record(&mut self, ok: bool, describe: impl FnOnce() -> String) {
        self.cases += 1;
        if !ok {
            self.violations.push(describe());
        }
    }

    fn absorb(&mut self, other: CheckReport) {
        self.cases += other.cases;
        self.violations.extend(other.violations);
    }

    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

const RATIO_RTOL: f64 = 1e-12;

/// Checks `(2 delta)^ell <= p_delta / p_{1/2} <= (2 - 2 delta)^ell` over all
/// sequences, and, when `n` is given, the near-uniform bounds
/// `1 - 1/n <= p_dbar / p_{1/2} <= 1 + 2/n` for `dbar = (1 - rho^k)/2` with
/// `k = ceil(ln(n) / delta)` and length `min(ell, floor(n/k))`.
pub fn ratio_bounds_check(ell: usize, delta: f64, n: Option<usize>) -> Result<CheckReport> {
    if !(0.0..=0.5).contains(&delta) {
        return Err(invalid("delta", "ratio bounds need delta in [0, 1/2]"));
    }
    let mut report = CheckReport::new("ratio_bounds");
    let dist = enumerate_sign_distribution(ell, delta)?;
    let uniform = 0.5f64.powi(ell as i32);
    let lo = (2.0 * delta).powi(ell as i32);
    let hi = (2.0 - 2.0 * delta).powi(ell as i32);
    for (idx, p) in dist.pmf.iter().enumerate() {
        let r = p / uniform;
        report.record(r >= lo * (1.0 - RATIO_RTOL) && r <= hi * (1.0 + RATIO_RTOL), || {
            format!("ell={ell} delta={delta} seq={idx:#b}: ratio {r} outside [{lo}, {hi}]")
        });
    }

    if let Some(n) = n {
        if delta > 0.0 && n >= 2 {
            let k = ((n as f64).ln() / delta).ceil();
            let blocks = (n as f64 / k).floor() as usize;
            let len = ell.min(blocks);
            if len >= 1 {
                let dbar = (1.0 - (1.0 - 2.0 * delta).powf(k)) / 2.0;
                let dist = enumerate_sign_distribution(len, dbar)?;
                let uniform = 0.5f64.powi(len as i32);
                let (lo, hi) = (1.0 - 1.0 / n as f64, 1.0 + 2.0 / n as f64);
                for (idx, p) in dist.pmf.iter().enumerate() {
                    let r = p / uniform;
                    report.record(r >= lo * (1.0 - RATIO_RTOL) && r <= hi * (1.0 + RATIO_RTOL), || {
                        format!("n={n} delta={delta} len={len} seq={idx:#b}: ratio {r} outside [{lo}, {hi}]")
                    });
                }
            }
        }
    }
    Ok(report)
}

/// KL divergence in nats between finite distributions; `inf` when `q` lacks
/// mass where `p` has it.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(a, _)| **a > 0.0)
        .map(|(a, b)| if *b > 0.0 { a * (a / b).ln() } else { f64::INFINITY })
        .sum()
}

/// Product of the per-coordinate marginals of a joint law on `alphabet^ell`
/// (index digits little-endian in base `alphabet`).
pub fn product_of_marginals(joint: &[f64], alphabet: usize, ell: usize) -> Vec<f64> {
    let mut marginals = vec![vec![0.0; alphabet]; ell];
    for (idx, p) in joint.iter().enumerate() {
        let mut rest = idx;
        for m in marginals.iter_mut() {
            m[rest % alphabet] += p;
            rest /= alphabet;
        }
    }
    (0..joint.len())
        .map(|idx| {
            let mut rest = idx;
            marginals
                .iter()
                .map(|m| {
                    let v = m[rest % alphabet];
                    rest /= alphabet;
                    v
                })
                .product()
        })
        .collect()
}

/// The two sides of the change-of-measure inequality for one `(P, Q)` pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChangeOfMeasure {
    pub kl_joint: f64,
    pub kl_product: f64,
    pub beta_p: f64,
    pub beta_q: f64,
}

impl ChangeOfMeasure {
    pub fn compute(p: &[f64], q: &[f64], alphabet: usize, ell: usize) -> Self {
        let pt = product_of_marginals(p, alphabet, ell);
        let qt = product_of_marginals(q, alphabet, ell);
        let max_ratio = |a: &[f64], b: &[f64]| {
            a.iter()
                .zip(b)
                .map(|(x, y)| x / y)
                .fold(f64::NEG_INFINITY, f64::max)
        };
        Self {
            kl_joint: kl_divergence(p, q),
            kl_product: kl_divergence(&pt, &qt),
            beta_p: max_ratio(p, &pt),
            beta_q: max_ratio(&qt, q),
        }
    }

    pub fn rhs(&self) -> f64 {
        self.kl_product + (self.beta_p * self.beta_q).ln()
    }

    pub fn holds(&self, tol: f64) -> bool {
        self.kl_joint <= self.rhs() + tol
    }
}

/// Random strictly positive law on `alphabet^ell`; exponents vary the spread.
pub fn random_joint<R: Rng>(rng: &mut R, alphabet: usize, ell: usize) -> Vec<f64> {
    let size = alphabet.pow(ell as u32);
    loop {
        let spread: f64 = rng.random_range(1.0..4.0);
        let w: Vec<f64> = (0..size)
            .map(|_| (-(1.0 - rng.random::<f64>()).ln()).powf(spread))
            .collect();
        let total: f64 = w.iter().sum();
        if w.iter().all(|&v| v > 0.0) && total.is_finite() {
            return w.iter().map(|v| v / total).collect();
        }
    }
}

/// Draws `pairs` random `(P, Q)` on `alphabet^ell` and checks
/// `D(P||Q) <= D(P~||Q~) + ln(beta_P beta_Q)`.
pub fn change_of_measure_kl_check(
    alphabet: usize,
    ell: usize,
    pairs: usize,
    stream: RngStream,
) -> Result<CheckReport> {
    if !(2..=4).contains(&alphabet) || !(1..=4).contains(&ell) {
        return Err(invalid("alphabet/ell", "need 2 <= alphabet <= 4 and 1 <= ell <= 4"));
    }
    let mut rng = stream.rng();
    let mut report = CheckReport::new("change_of_measure_kl");
    for i in 0..pairs {
        let p = random_joint(&mut rng, alphabet, ell);
        let q = random_joint(&mut rng, alphabet, ell);
        let c = ChangeOfMeasure::compute(&p, &q, alphabet, ell);
        report.record(c.holds(1e-9), || {
            format!(
                "pair {i} on {alphabet}^{ell}: D(P||Q)={} > {}",
                c.kl_joint,
                c.rhs()
            )
        });
    }
    Ok(report)
}

/// Physicists' Gauss-Hermite rule (weight `exp(-x^2)`) by Newton iteration
/// on the normalized Hermite recurrence.
pub fn gauss_hermite(order: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(order >= 1, "quadrature order must be positive");
    const PI_M4: f64 = 0.751_125_544_464_942_5; // pi^{-1/4}
    let n = order;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut z = 0.0f64;
    for i in 0..n.div_ceil(2) {
        z = match i {
            0 => (2.0 * n as f64 + 1.0).sqrt() - 1.85575 * (2.0 * n as f64 + 1.0).powf(-0.16667),
            1 => z - 1.14 * (n as f64).powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (PI_M4, 0.0);
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = z * (2.0 / (j + 1) as f64).sqrt() * p2 - (j as f64 / (j + 1) as f64).sqrt() * p3;
            }
            pp = (2.0 * n as f64).sqrt() * p2;
            let step = p1 / pp;
            z -= step;
            if step.abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// `(f1 - f0)^2 / f0` with `f = exp(-|theta|^2 / 2 sigma^2) cosh(theta.z / sigma)`,
/// the chi-square integrand against a standard normal `z`.
fn chi_integrand(a0: f64, a1: f64, c0: f64, c1: f64) -> f64 {
    let f0 = c0 * a0.cosh();
    let f1 = c1 * a1.cosh();
    (f1 - f0) * (f1 - f0) / f0
}

/// `chi^2(P_theta1 || P_theta0)` for the symmetric mixtures
/// `(N(theta, s^2 I) + N(-theta, s^2 I)) / 2`, reduced to the plane spanned by
/// the two means. The integrand depends on `z` only through `theta_i . z`, and
/// a standard normal projected onto an orthonormal basis of that plane is
/// again standard normal in two dimensions.
pub fn chi_square_gmm_reduced(theta0: &[f64], theta1: &[f64], sigma: f64, order: usize) -> Result<f64> {
    check_pair(theta0, theta1, sigma)?;
    let t0 = linalg::norm(theta0);
    let t1 = linalg::norm(theta1);
    let (b0, b1) = match linalg::normalized(theta0) {
        None => ([0.0, 0.0], [t1, 0.0]),
        Some(e1) => {
            let along = linalg::dot(theta1, &e1);
            let perp: Vec<f64> = theta1.iter().zip(&e1).map(|(v, e)| v - along * e).collect();
            let across = linalg::norm(&perp);
            ([t0, 0.0], [along, across])
        }
    };
    let c0 = (-t0 * t0 / (2.0 * sigma * sigma)).exp();
    let c1 = (-t1 * t1 / (2.0 * sigma * sigma)).exp();
    let (x, w) = gauss_hermite(order);
    let s2 = std::f64::consts::SQRT_2;
    let mut total = 0.0;
    for (xi, wi) in x.iter().zip(&w) {
        for (xj, wj) in x.iter().zip(&w) {
            let z = [s2 * xi, s2 * xj];
            let a0 = (b0[0] * z[0] + b0[1] * z[1]) / sigma;
            let a1 = (b1[0] * z[0] + b1[1] * z[1]) / sigma;
            total += wi * wj * chi_integrand(a0, a1, c0, c1);
        }
    }
    Ok(total / std::f64::consts::PI)
}

/// Same divergence by a full `d`-dimensional tensor-product rule, with no
/// dimension reduction. Cost is `order^d`.
pub fn chi_square_gmm_tensor(theta0: &[f64], theta1: &[f64], sigma: f64, order: usize) -> Result<f64> {
    check_pair(theta0, theta1, sigma)?;
    let d = theta0.len();
    if order.checked_pow(d as u32).is_none_or(|c| c > 20_000_000) {
        return Err(invalid("order", "tensor grid too large"));
    }
    let c0 = (-linalg::dot(theta0, theta0) / (2.0 * sigma * sigma)).exp();
    let c1 = (-linalg::dot(theta1, theta1) / (2.0 * sigma * sigma)).exp();
    let (x, w) = gauss_hermite(order);
    let s2 = std::f64::consts::SQRT_2;
    let mut digits = vec![0usize; d];
    let mut total = 0.0;
    loop {
        let (mut a0, mut a1, mut weight) = (0.0, 0.0, 1.0);
        for (axis, &g) in digits.iter().enumerate() {
            let z = s2 * x[g];
            a0 += theta0[axis] * z;
            a1 += theta1[axis] * z;
            weight *= w[g];
        }
        total += weight * chi_integrand(a0 / sigma, a1 / sigma, c0, c1);
        // odometer increment
        let mut axis = 0;
        while axis < d {
            digits[axis] += 1;
            if digits[axis] < order {
                break;
            }
            digits[axis] = 0;
            axis += 1;
        }
        if axis == d {
            break;
        }
    }
    Ok(total / std::f64::consts::PI.powf(d as f64 / 2.0))
}

fn check_pair(theta0: &[f64], theta1: &[f64], sigma: f64) -> Result<()> {
    if theta0.len() != theta1.len() {
        return Err(Error::DimensionMismatch {
            expected: theta0.len(),
            found: theta1.len(),
        });
    }
    if theta0.is_empty() {
        return Err(invalid("theta", "dimension must be at least 1"));
    }
    if !(sigma > 0.0) {
        return Err(invalid("sigma", "must be positive"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareCheck {
    pub chi2_numeric: f64,
    pub bound: f64,
    /// Relative change when the quadrature order is raised by 20.
    pub order_change: f64,
    pub converged: bool,
    pub within_bound: bool,
}

/// Numerical chi-square between two equal-norm symmetric mixtures against the
/// bound `8 t^2 / sigma^4 * |theta0 - theta1|^2`.
pub fn chi_square_gmm_check(
    theta0: &[f64],
    theta1: &[f64],
    sigma: f64,
    quad_order: usize,
) -> Result<ChiSquareCheck> {
    let t0 = linalg::norm(theta0);
    let t1 = linalg::norm(theta1);
    if (t0 - t1).abs() > 1e-10 {
        return Err(invalid("theta", format!("norms differ: {t0} vs {t1}")));
    }
    if t0 > sigma + 1e-10 {
        return Err(invalid("theta", format!("norm {t0} exceeds sigma {sigma}")));
    }
    let chi2 = chi_square_gmm_reduced(theta0, theta1, sigma, quad_order)?;
    let refined = chi_square_gmm_reduced(theta0, theta1, sigma, quad_order + 20)?;
    let scale = chi2.abs().max(refined.abs());
    let order_change = if scale == 0.0 { 0.0 } else { (chi2 - refined).abs() / scale };
    let dist2: f64 = theta0.iter().zip(theta1).map(|(a, b)| (a - b) * (a - b)).sum();
    let bound = 8.0 * t0 * t0 / sigma.powi(4) * dist2;
    Ok(ChiSquareCheck {
        chi2_numeric: chi2,
        bound,
        order_change,
        converged: order_change <= 1e-6 || (chi2 - refined).abs() <= 1e-15,
        within_bound: chi2 <= bound * (1.0 + 1e-3),
    })
}

/// Natural-log binary entropy.
pub fn binary_entropy(p: f64) -> f64 {
    let term = |x: f64| if x <= 0.0 { 0.0 } else { -x * x.ln() };
    term(p) + term(1.0 - p)
}

/// `points` evenly spaced values strictly inside `(0, 1/2)`.
pub fn default_eps_grid(points: usize) -> Vec<f64> {
    (1..=points).map(|i| 0.5 * i as f64 / (points + 1) as f64).collect()
}

/// Checks `ln 2 - h_b(1/2 - eps) <= 5 eps^2` on the grid.
pub fn entropy_quadratic_check(eps_grid: &[f64]) -> CheckReport {
    let mut report = CheckReport::new("entropy_quadratic");
    for &eps in eps_grid {
        let gap = std::f64::consts::LN_2 - binary_entropy(0.5 - eps);
        let bound = 5.0 * eps * eps;
        report.record(gap <= bound + 1e-15, || {
            format!("eps={eps}: gap {gap} exceeds {bound}")
        });
    }
    report
}

/// All eigenvalues of a small symmetric matrix by cyclic Jacobi rotations,
/// sorted in decreasing order.
pub fn jacobi_eigenvalues(m: &SymMatrix) -> Vec<f64> {
    let d = m.dim();
    let mut a: Vec<f64> = m.as_row_major().to_vec();
    for _sweep in 0..100 {
        let off: f64 = (0..d)
            .flat_map(|i| (0..d).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * d + j] * a[i * d + j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..d {
            for q in p + 1..d {
                let apq = a[p * d + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * d + q] - a[p * d + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..d {
                    let akp = a[k * d + p];
                    let akq = a[k * d + q];
                    a[k * d + p] = c * akp - s * akq;
                    a[k * d + q] = s * akp + c * akq;
                }
                for k in 0..d {
                    let apk = a[p * d + k];
                    let aqk = a[q * d + k];
                    a[p * d + k] = c * apk - s * aqk;
                    a[q * d + k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..d).map(|i| a[i * d + i]).collect();
    eig.sort_by(|x, y| y.total_cmp(x));
    eig
}

/// Deliberate faults used to prove that the verifier can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sabotage {
    /// Flip the sign of the off-diagonal sum in the closed-form `xi_k`.
    Xi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    /// Cap on enumerated sequence lengths.
    pub max_ell: usize,
    pub quad_order: usize,
    /// Points in the `delta` grid `{0, 0.5/(grid-1), ..., 0.5}`.
    pub grid: usize,
    pub eps_points: usize,
    pub kl_pairs: usize,
    pub chi_configs: usize,
    pub seed: u64,
    pub sabotage: Option<Sabotage>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            max_ell: 16,
            quad_order: 40,
            grid: 11,
            eps_points: 50,
            kl_pairs: 200,
            chi_configs: 50,
            seed: 0,
            sabotage: None,
        }
    }
}

impl VerifyOptions {
    pub fn delta_grid(&self) -> Vec<f64> {
        if self.grid <= 1 {
            return vec![0.5];
        }
        (0..self.grid)
            .map(|i| 0.5 * i as f64 / (self.grid - 1) as f64)
            .collect()
    }
}

fn xi_closed_form(k: usize, delta: f64, sabotage: Option<Sabotage>) -> f64 {
    match sabotage {
        None => crate::theta::xi_k(k, delta),
        Some(Sabotage::Xi) => {
            let rho = 1.0 - 2.0 * delta;
            let off: f64 = (1..k).map(|m| (k - m) as f64 * rho.powi(m as i32)).sum();
            (k as f64 - 2.0 * off) / (k * k) as f64
        }
    }
}

/// Runs every oracle check and returns one report per lemma.
pub fn run_verification(opts: &VerifyOptions) -> Result<Vec<CheckReport>> {
    if opts.max_ell == 0 || opts.max_ell > MAX_ENUMERATION_LEN {
        return Err(invalid("max_ell", format!("must be in 1..={MAX_ENUMERATION_LEN}")));
    }
    let deltas = opts.delta_grid();
    let root = RngStream::new(opts.seed, 0);
    let mut reports = Vec::new();

    let k_max = opts.max_ell.min(12);
    let mut xi_report = CheckReport::new("xi_closed_form_vs_enumeration");
    let mut deficiency_report = CheckReport::new("gain_deficiency_bound");
    for k in 1..=k_max {
        for &delta in &deltas {
            let (xi_exact, deficiency) = exact_xi_and_gain_deficiency(k, delta)?;
            let closed = xi_closed_form(k, delta, opts.sabotage);
            xi_report.record((closed - xi_exact).abs() <= 1e-12, || {
                format!("k={k} delta={delta}: closed form {closed} vs enumeration {xi_exact}")
            });
            let bound = 4.0 * delta * k as f64;
            deficiency_report.record(deficiency <= bound + 1e-12, || {
                format!("k={k} delta={delta}: E[1-Sbar^2]={deficiency} > {bound}")
            });
        }
    }
    reports.push(xi_report);
    reports.push(deficiency_report);

    let mut half = CheckReport::new("xi_at_recommended_block_length");
    let mut half_deltas: Vec<f64> = (1..=opts.max_ell).map(|k| 1.0 / (8.0 * k as f64)).collect();
    half_deltas.extend(deltas.iter().copied().filter(|&d| d > 0.0));
    for delta in half_deltas {
        let k = crate::theta::block_length_for(delta, 8.0, usize::MAX);
        if k > opts.max_ell {
            continue;
        }
        let (xi_exact, _) = exact_xi_and_gain_deficiency(k, delta)?;
        half.record(xi_exact >= 0.5, || {
            format!("delta={delta} k={k}: xi={xi_exact} < 1/2")
        });
    }
    reports.push(half);

    let mut ratio = CheckReport::new("ratio_bounds");
    for ell in 1..=opts.max_ell {
        for &delta in &deltas {
            ratio.absorb(ratio_bounds_check(ell, delta, None)?);
        }
    }
    for n in [100usize, 1000, 10_000] {
        for &delta in deltas.iter().filter(|&&d| d > 0.0) {
            ratio.absorb(ratio_bounds_check(opts.max_ell, delta, Some(n))?);
        }
    }
    reports.push(ratio);

    let mut kl = CheckReport::new("change_of_measure_kl");
    kl.absorb(change_of_measure_kl_check(2, 3, opts.kl_pairs, root.substream(1))?);
    kl.absorb(change_of_measure_kl_check(3, 2, opts.kl_pairs / 4, root.substream(2))?);
    kl.absorb(change_of_measure_kl_check(4, 4, opts.kl_pairs / 4, root.substream(3))?);
    reports.push(kl);

    let mut chi = CheckReport::new("chi_square_gmm");
    let mut rng = root.substream(4).rng();
    for i in 0..opts.chi_configs {
        let d = rng.random_range(2..=5usize);
        let sigma: f64 = rng.random_range(0.5..2.0);
        let t = sigma * rng.random_range(0.0..=1.0f64);
        let u0 = random_unit(&mut rng, d);
        let u1 = random_unit(&mut rng, d);
        let theta0 = linalg::scale(&u0, t);
        let theta1 = linalg::scale(&u1, t);
        let c = chi_square_gmm_check(&theta0, &theta1, sigma, opts.quad_order)?;
        if !c.converged {
            log::warn!(
                "chi-square config {i}: quadrature changed by {:.2e} between orders",
                c.order_change
            );
        }
        chi.record(c.within_bound, || {
            format!(
                "config {i} (d={d}, t={t}, sigma={sigma}): chi2 {} exceeds bound {}",
                c.chi2_numeric, c.bound
            )
        });
    }
    reports.push(chi);

    reports.push(entropy_quadratic_check(&default_eps_grid(opts.eps_points)));
    Ok(reports)
}

fn random_unit<R: Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
        if let Some(u) = linalg::normalized(&v) {
            return u;
        }
    }
}
