//! Monte Carlo rate curves: loss statistics over a grid of signal strengths
//! `t = ||theta||`, with closed-form rate overlays.
//!
//! Every (grid point, trial) pair gets its own stream
//! `RngStream::new(seed, trial).substream(t_index)`, and results are gathered
//! in index order, so a curve is bit-identical for any worker count.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::delta::{estimate_rho, project_onto};
use crate::error::{invalid, Result};
use crate::joint::{algorithm1, Branch, JointConfig};
use crate::linalg::{self, EigenConfig};
use crate::model::{check_delta, loss, sample_hmm, ModelParams};
use crate::rng::RngStream;
use crate::theta::{estimate_theta_known_delta, estimate_theta_with_block};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Estimator {
    /// Block-PCA with `k = floor(1 / (8 delta))`.
    ThetaKnownDelta,
    /// Block-PCA with `k = 1`, ignoring the chain.
    ThetaGmmK1,
    /// Correlation estimate of `delta` with `theta_sharp = theta`, on the
    /// projected one-dimensional samples.
    DeltaMatched,
    /// Correlation estimate with `theta_sharp = scale * theta`.
    DeltaMismatched { scale: f64 },
    /// The three-step procedure on `3n` samples.
    Joint,
}

impl Estimator {
    pub fn is_theta(&self) -> bool {
        matches!(self, Estimator::ThetaKnownDelta | Estimator::ThetaGmmK1)
    }

    pub fn is_delta(&self) -> bool {
        matches!(self, Estimator::DeltaMatched | Estimator::DeltaMismatched { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub n: usize,
    pub d: usize,
    pub delta: f64,
    pub t_grid: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub estimator: Estimator,
    /// Record `min(loss, t)`, the better of the estimator and zero.
    pub clamp_with_zero: bool,
    #[serde(default)]
    pub eigen: EigenConfig,
    #[serde(default)]
    pub joint: JointConfig,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 {
            return Err(invalid("n/d", "must be positive"));
        }
        check_delta(self.delta)?;
        if self.trials == 0 {
            return Err(invalid("trials", "must be positive"));
        }
        if self.t_grid.is_empty() {
            return Err(invalid("t_grid", "must not be empty"));
        }
        if self.t_grid.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(invalid("t_grid", "entries must be finite and nonnegative"));
        }
        if self.t_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("t_grid", "must be strictly increasing"));
        }
        if let Estimator::DeltaMismatched { scale } = self.estimator {
            if !(scale > 0.0 && scale.is_finite()) {
                return Err(invalid("scale", "must be positive"));
            }
        }
        if self.estimator == Estimator::Joint {
            self.joint.validate()?;
            if self.n < 2 {
                return Err(invalid("n", "the joint estimator needs n >= 2"));
            }
        }
        if self.estimator.is_delta() && self.n < 2 {
            return Err(invalid("n", "delta estimation needs n >= 2"));
        }
        Ok(())
    }
}

/// Share of trials ending in each branch of the joint procedure.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BranchFractions {
    pub zero: f64,
    pub a_large: f64,
    pub a_small_delta: f64,
    pub c: f64,
}

impl BranchFractions {
    fn from_branches(branches: &[Branch]) -> Self {
        let m = branches.len() as f64;
        let frac = |b: Branch| branches.iter().filter(|&&x| x == b).count() as f64 / m;
        Self {
            zero: frac(Branch::ReturnZero),
            a_large: frac(Branch::ReturnALarge),
            a_small_delta: frac(Branch::ReturnASmallDeltaHat),
            c: frac(Branch::ReturnC),
        }
    }

    pub fn get(&self, b: Branch) -> f64 {
        match b {
            Branch::ReturnZero => self.zero,
            Branch::ReturnALarge => self.a_large,
            Branch::ReturnASmallDeltaHat => self.a_small_delta,
            Branch::ReturnC => self.c,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub t: f64,
    pub mean_loss: f64,
    pub std_loss: f64,
    pub theory_rate: f64,
    pub trials: usize,
    /// Per-trial losses in trial order.
    pub losses: Vec<f64>,
    pub branches: Option<BranchFractions>,
    /// Step-A losses of the same joint trials, in trial order.
    pub baseline_losses: Option<Vec<f64>>,
}

impl RatePoint {
    pub fn std_err(&self) -> f64 {
        self.std_loss / (self.trials as f64).sqrt()
    }

    pub fn quantile(&self, q: f64) -> f64 {
        quantile(&self.losses, q)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateCurve {
    pub points: Vec<RatePoint>,
    pub config: ExperimentConfig,
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0);
    (mean, var.sqrt())
}

/// Nearest-rank empirical quantile.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

pub fn rate_minimax_glm(n: usize, d: usize, t: f64) -> f64 {
    t.min((d as f64 / n as f64).sqrt())
}

pub fn rate_minimax_gmm(n: usize, d: usize, t: f64) -> f64 {
    if t == 0.0 {
        return 0.0;
    }
    let r = d as f64 / n as f64;
    ((r.sqrt() + r) / t + r.sqrt()).min(t)
}

pub fn rate_minimax_hmm(n: usize, d: usize, delta: f64, t: f64) -> f64 {
    if t == 0.0 {
        return 0.0;
    }
    let r = d as f64 / n as f64;
    (((delta * r).sqrt() + r) / t + r.sqrt()).min(t)
}

/// High-probability bound on `|delta_hat - delta|` for a reference of norm
/// `t_sharp` against a true mean of norm `t`.
pub fn delta_error_bound_mismatched(n: usize, d: usize, delta: f64, t: f64, t_sharp: f64) -> f64 {
    let (nf, df) = (n as f64, d as f64);
    (t * t - t_sharp * t_sharp).abs() / (t_sharp * t_sharp)
        + 16.0
            * nf.ln()
            * ((delta / nf).sqrt() + (1.0 / nf).sqrt() / t_sharp + (df / nf).sqrt() / (t_sharp * t_sharp))
}

/// The same bound for the matched, one-dimensional case: `18 ln(n) / t^2 / sqrt(n)`.
pub fn delta_error_bound_matched(n: usize, t: f64) -> f64 {
    18.0 * (n as f64).ln() / (t * t) / (n as f64).sqrt()
}

/// Losses `|0 - delta|`, `|1/2 - delta|`, `|1 - delta|` of the constant
/// estimators.
pub fn trivial_delta_losses(delta: f64) -> [f64; 3] {
    [delta.abs(), (0.5 - delta).abs(), (1.0 - delta).abs()]
}

/// `{0, 1/ppu, 2/ppu, ..., max}`.
pub fn uniform_grid(max: f64, per_unit: usize) -> Vec<f64> {
    let steps = (max * per_unit as f64).round() as usize;
    (0..=steps).map(|i| i as f64 / per_unit as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Preset {
    FigTheta,
    FigDeltaMismatched,
    FigDeltaMatched,
    FigJoint,
}

impl Preset {
    pub const ALL: [Preset; 4] = [
        Preset::FigTheta,
        Preset::FigDeltaMismatched,
        Preset::FigDeltaMatched,
        Preset::FigJoint,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Preset::FigTheta => "fig-theta",
            Preset::FigDeltaMismatched => "fig-delta-mismatched",
            Preset::FigDeltaMatched => "fig-delta-matched",
            Preset::FigJoint => "fig-joint",
        }
    }

    pub fn from_name(name: &str) -> Option<Preset> {
        Preset::ALL.into_iter().find(|p| p.name() == name)
    }

    pub const DEFAULT_TRIALS: usize = 50;

    pub fn config(&self, trials: usize, seed: u64) -> ExperimentConfig {
        let (n, d, delta, t_max, estimator, clamp) = match self {
            Preset::FigTheta => (5000, 250, 0.05, 5.0, Estimator::ThetaKnownDelta, true),
            Preset::FigDeltaMismatched => (500, 250, 0.1, 1.0, Estimator::DeltaMismatched { scale: 1.2 }, false),
            Preset::FigDeltaMatched => (500, 250, 0.1, 1.0, Estimator::DeltaMatched, false),
            Preset::FigJoint => (100, 5, 0.1, 4.0, Estimator::Joint, true),
        };
        ExperimentConfig {
            n,
            d,
            delta,
            t_grid: uniform_grid(t_max, 20),
            trials,
            seed,
            estimator,
            clamp_with_zero: clamp,
            eigen: EigenConfig::default(),
            joint: JointConfig::default(),
        }
    }
}

/// Runs `f` on a pool with at most `threads` workers (`0` = rayon default).
pub fn with_thread_cap<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| invalid("threads", e.to_string()))?;
    Ok(pool.install(f))
}

/// Uniform random unit vector in `R^d`.
pub fn random_direction(stream: RngStream, d: usize) -> Vec<f64> {
    let mut rng = stream.rng();
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        if let Some(u) = linalg::normalized(&v) {
            return u;
        }
    }
}

struct Trial {
    loss: f64,
    branch: Option<Branch>,
    baseline: Option<f64>,
}

fn run_trial(cfg: &ExperimentConfig, t: f64, stream: RngStream) -> Result<Trial> {
    let theta = linalg::scale(&random_direction(stream.substream(0), cfg.d), t);
    let rows = if cfg.estimator == Estimator::Joint { 3 * cfg.n } else { cfg.n };
    let params = ModelParams::new(theta.clone(), cfg.delta, rows)?;
    let (_, x) = sample_hmm(&params, stream.substream(1))?;
    let est_stream = stream.substream(2);
    let clamp = |l: f64| if cfg.clamp_with_zero { l.min(t) } else { l };
    let trial = match cfg.estimator {
        Estimator::ThetaKnownDelta => {
            let est = estimate_theta_known_delta(&x, cfg.delta, &cfg.eigen, est_stream)?;
            Trial { loss: clamp(loss(&est.theta_hat, &theta)?), branch: None, baseline: None }
        }
        Estimator::ThetaGmmK1 => {
            let est = estimate_theta_with_block(&x, 1, 0.5, &cfg.eigen, est_stream)?;
            Trial { loss: clamp(loss(&est.theta_hat, &theta)?), branch: None, baseline: None }
        }
        Estimator::DeltaMatched => {
            let u = project_onto(&x, &theta)?;
            let est = estimate_rho(&u, &[t])?;
            Trial { loss: (est.delta_raw - cfg.delta).abs(), branch: None, baseline: None }
        }
        Estimator::DeltaMismatched { scale } => {
            let est = estimate_rho(&x, &linalg::scale(&theta, scale))?;
            Trial { loss: (est.delta_raw - cfg.delta).abs(), branch: None, baseline: None }
        }
        Estimator::Joint => {
            let est = algorithm1(&x, &cfg.joint, est_stream)?;
            Trial {
                loss: clamp(loss(&est.theta_hat, &theta)?),
                branch: Some(est.branch),
                baseline: Some(clamp(loss(&est.theta_a, &theta)?)),
            }
        }
    };
    Ok(trial)
}

fn theory_rate(cfg: &ExperimentConfig, t: f64) -> f64 {
    match cfg.estimator {
        Estimator::ThetaKnownDelta | Estimator::Joint => rate_minimax_hmm(cfg.n, cfg.d, cfg.delta, t),
        Estimator::ThetaGmmK1 => rate_minimax_gmm(cfg.n, cfg.d, t),
        Estimator::DeltaMatched => delta_error_bound_matched(cfg.n, t),
        Estimator::DeltaMismatched { scale } => {
            delta_error_bound_mismatched(cfg.n, cfg.d, cfg.delta, t, scale * t)
        }
    }
}

/// Runs the configured estimator over the whole grid. Delta estimators skip
/// `t = 0`, where the reference vector is zero.
pub fn run_curve(cfg: &ExperimentConfig) -> Result<RateCurve> {
    cfg.validate()?;
    let grid: Vec<(usize, f64)> = cfg
        .t_grid
        .iter()
        .copied()
        .enumerate()
        .filter(|&(_, t)| {
            let skip = cfg.estimator.is_delta() && t == 0.0;
            if skip {
                log::warn!("skipping t = 0: the delta estimator needs a nonzero reference");
            }
            !skip
        })
        .collect();
    let jobs: Vec<(usize, f64, usize)> = grid
        .iter()
        .flat_map(|&(idx, t)| (0..cfg.trials).map(move |trial| (idx, t, trial)))
        .collect();
    let results: Vec<Trial> = jobs
        .par_iter()
        .map(|&(idx, t, trial)| {
            let stream = RngStream::new(cfg.seed, trial as u64).substream(idx as u64);
            run_trial(cfg, t, stream)
        })
        .collect::<Result<_>>()?;

    let points = grid
        .iter()
        .zip(results.chunks_exact(cfg.trials))
        .map(|(&(_, t), chunk)| {
            let losses: Vec<f64> = chunk.iter().map(|r| r.loss).collect();
            let (mean_loss, std_loss) = mean_std(&losses);
            let branches: Option<Vec<Branch>> = chunk.iter().map(|r| r.branch).collect();
            RatePoint {
                t,
                mean_loss,
                std_loss,
                theory_rate: theory_rate(cfg, t),
                trials: cfg.trials,
                losses,
                branches: branches.map(|b| BranchFractions::from_branches(&b)),
                baseline_losses: chunk.iter().map(|r| r.baseline).collect(),
            }
        })
        .collect();
    Ok(RateCurve {
        points,
        config: cfg.clone(),
    })
}

pub fn run_theta_curve(cfg: &ExperimentConfig) -> Result<RateCurve> {
    if !cfg.estimator.is_theta() {
        return Err(invalid("estimator", "expected a theta estimator"));
    }
    run_curve(cfg)
}

pub fn run_delta_curve(cfg: &ExperimentConfig) -> Result<RateCurve> {
    if !cfg.estimator.is_delta() {
        return Err(invalid("estimator", "expected a delta estimator"));
    }
    run_curve(cfg)
}

pub fn run_joint_curve(cfg: &ExperimentConfig) -> Result<RateCurve> {
    if cfg.estimator != Estimator::Joint {
        return Err(invalid("estimator", "expected the joint estimator"));
    }
    run_curve(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(estimator: Estimator) -> ExperimentConfig {
        ExperimentConfig {
            n: 60,
            d: 3,
            delta: 0.1,
            t_grid: vec![0.0, 0.5, 1.5],
            trials: 6,
            seed: 11,
            estimator,
            clamp_with_zero: false,
            eigen: EigenConfig::default(),
            joint: JointConfig::default(),
        }
    }

    #[test]
    fn rate_examples() {
        assert!((rate_minimax_glm(5000, 250, 5.0) - 0.05f64.sqrt()).abs() < 1e-15);
        assert_eq!(rate_minimax_gmm(100, 5, 0.0), 0.0);
        assert_eq!(rate_minimax_hmm(100, 5, 0.1, 0.0), 0.0);
        // hand-computed: r = 0.05, t = 2
        let r: f64 = 0.05;
        let hmm = rate_minimax_hmm(100, 5, 0.1, 2.0);
        assert!((hmm - ((0.1 * r).sqrt() + r) / 2.0 - r.sqrt()).abs() < 1e-15);
        let gmm = rate_minimax_gmm(100, 5, 2.0);
        assert!((gmm - (r.sqrt() + r) / 2.0 - r.sqrt()).abs() < 1e-15);
        assert_eq!(rate_minimax_hmm(100, 5, 0.1, 0.1), 0.1);
    }

    #[test]
    fn hmm_rate_at_half_is_gmm_within_sqrt2() {
        for t in uniform_grid(5.0, 20).into_iter().skip(1) {
            let h = rate_minimax_hmm(5000, 250, 0.5, t);
            let g = rate_minimax_gmm(5000, 250, t);
            assert!(h <= g && g <= std::f64::consts::SQRT_2 * h);
        }
    }

    #[test]
    fn hmm_rate_at_zero_delta_is_glm_up_to_d_over_n() {
        let (n, d) = (5000, 250);
        let r = d as f64 / n as f64;
        for t in uniform_grid(5.0, 20).into_iter().filter(|&t| t >= r.sqrt()) {
            let h = rate_minimax_hmm(n, d, 0.0, t);
            let glm = rate_minimax_glm(n, d, t);
            assert!(h >= glm - 1e-15 && h <= glm + r / t + 1e-15);
        }
    }

    #[test]
    fn trivial_comparators() {
        assert_eq!(trivial_delta_losses(0.1), [0.1, 0.4, 0.9]);
    }

    #[test]
    fn grid_and_stats() {
        let g = uniform_grid(5.0, 20);
        assert_eq!(g.len(), 101);
        assert_eq!(g[3], 0.15);
        assert_eq!(*g.last().unwrap(), 5.0);
        assert_eq!(mean_std(&[2.0]), (2.0, 0.0));
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(quantile(&[5.0, 1.0, 3.0, 2.0], 0.5), 2.0);
        assert_eq!(quantile(&[5.0, 1.0, 3.0, 2.0], 0.95), 5.0);
    }

    #[test]
    fn presets_carry_caption_parameters() {
        let c = Preset::FigTheta.config(50, 0);
        assert_eq!((c.n, c.d, c.delta), (5000, 250, 0.05));
        assert_eq!(c.t_grid.len(), 101);
        let c = Preset::FigDeltaMismatched.config(50, 0);
        assert_eq!((c.n, c.d, c.delta), (500, 250, 0.1));
        assert_eq!(c.estimator, Estimator::DeltaMismatched { scale: 1.2 });
        assert_eq!(c.t_grid.len(), 21);
        let c = Preset::FigJoint.config(50, 0);
        assert_eq!((c.n, c.d, c.delta), (100, 5, 0.1));
        assert_eq!(*c.t_grid.last().unwrap(), 4.0);
        assert_eq!(Preset::from_name("fig-delta-matched"), Some(Preset::FigDeltaMatched));
        assert_eq!(Preset::from_name("fig"), None);
    }

    #[test]
    fn validation() {
        let mut c = small(Estimator::ThetaKnownDelta);
        c.t_grid = vec![0.5, 0.5];
        assert!(c.validate().is_err());
        c.t_grid = vec![0.5];
        c.trials = 0;
        assert!(c.validate().is_err());
        assert!(run_theta_curve(&small(Estimator::Joint)).is_err());
    }

    #[test]
    fn zero_t_point() {
        let mut c = small(Estimator::ThetaGmmK1);
        let curve = run_curve(&c).unwrap();
        let p = &curve.points[0];
        assert_eq!(p.t, 0.0);
        assert!(p.mean_loss > 0.0);
        c.clamp_with_zero = true;
        let curve = run_curve(&c).unwrap();
        assert_eq!(curve.points[0].mean_loss, 0.0);
    }

    #[test]
    fn delta_curve_skips_zero() {
        let curve = run_delta_curve(&small(Estimator::DeltaMismatched { scale: 1.2 })).unwrap();
        assert_eq!(curve.points.len(), 2);
        assert_eq!(curve.points[0].t, 0.5);
    }

    #[test]
    fn joint_curve_has_branches_and_baseline() {
        let curve = run_joint_curve(&small(Estimator::Joint)).unwrap();
        for p in &curve.points {
            let b = p.branches.unwrap();
            assert!((b.zero + b.a_large + b.a_small_delta + b.c - 1.0).abs() < 1e-12);
            assert_eq!(p.baseline_losses.as_ref().unwrap().len(), p.trials);
        }
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let c = small(Estimator::ThetaKnownDelta);
        let one = with_thread_cap(1, || run_curve(&c)).unwrap().unwrap();
        let three = with_thread_cap(3, || run_curve(&c)).unwrap().unwrap();
        assert_eq!(one, three);
    }
}
