//! Three-step mean estimation when the flip probability is unknown.
//!
//! The `3n` input rows are split into thirds:
//!
//! * A: rows `0..n`, block-PCA with `k = 1` (plain mixture model). Stop with
//!   zero if the norm is below `2 lambda_theta ln(n) (d/n)^{1/4}`, or with
//!   the step-A estimate if its norm is at least `1/2`.
//! * B: rows `n..2n`, correlation estimate of `delta` against the step-A
//!   mean. Stop with the step-A estimate if
//!   `delta_b <= 64 lambda_delta lambda_theta ln(n) sqrt(d/n) / ||theta_a||^2`.
//! * C: rows `2n..3n`, block-PCA with `k = floor(1 / (16 delta_b))`.

use serde::{Deserialize, Serialize};

use crate::delta::{estimate_rho, DeltaEstimate};
use crate::error::{invalid, Error, Result};
use crate::linalg::{self, EigenConfig};
use crate::model::SampleSet;
use crate::rng::RngStream;
use crate::theta::{block_length_for, estimate_theta_with_block, ThetaEstimate};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointConfig {
    pub lambda_theta: f64,
    pub lambda_delta: f64,
    pub eigen: EigenConfig,
    /// Floor applied to `delta_b` before sizing step-C blocks, as a multiple
    /// of `1/n`.
    pub delta_floor_per_n: f64,
}

impl Default for JointConfig {
    fn default() -> Self {
        Self {
            lambda_theta: 1.0,
            lambda_delta: 1.0,
            eigen: EigenConfig::default(),
            delta_floor_per_n: 1.0,
        }
    }
}

impl JointConfig {
    pub fn new(lambda_theta: f64, lambda_delta: f64) -> Result<Self> {
        let cfg = Self {
            lambda_theta,
            lambda_delta,
            ..Self::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_theta >= 1.0) {
            return Err(invalid("lambda_theta", "must be at least 1"));
        }
        if !(self.lambda_delta >= 1.0) {
            return Err(invalid("lambda_delta", "must be at least 1"));
        }
        if !(self.delta_floor_per_n > 0.0) {
            return Err(invalid("delta_floor_per_n", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Branch {
    ReturnZero,
    #[serde(rename = "ReturnA_Large")]
    ReturnALarge,
    #[serde(rename = "ReturnA_SmallDeltaHat")]
    ReturnASmallDeltaHat,
    ReturnC,
}

impl Branch {
    pub const ALL: [Branch; 4] = [
        Branch::ReturnZero,
        Branch::ReturnALarge,
        Branch::ReturnASmallDeltaHat,
        Branch::ReturnC,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Branch::ReturnZero => "ReturnZero",
            Branch::ReturnALarge => "ReturnA_Large",
            Branch::ReturnASmallDeltaHat => "ReturnA_SmallDeltaHat",
            Branch::ReturnC => "ReturnC",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointEstimate {
    pub theta_hat: Vec<f64>,
    pub branch: Branch,
    pub theta_a: Vec<f64>,
    pub delta_b: Option<DeltaEstimate>,
    pub k_c: Option<usize>,
    /// Full step-C diagnostics when step C ran.
    pub theta_c: Option<ThetaEstimate>,
}

/// Values injected in place of the step-A / step-B computations.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepOverrides {
    pub theta_a: Option<Vec<f64>>,
    pub delta_b: Option<f64>,
    /// Sample size plugged into the gate thresholds instead of the real `n`.
    pub gate_sample_size: Option<usize>,
}

/// Step-A threshold `2 lambda_theta ln(n) (d/n)^{1/4}`.
pub fn step_a_threshold(n: usize, d: usize, cfg: &JointConfig) -> f64 {
    2.0 * cfg.lambda_theta * (n as f64).ln() * (d as f64 / n as f64).powf(0.25)
}

/// Step-B threshold `64 lambda_delta lambda_theta ln(n) sqrt(d/n) / ||theta_a||^2`.
pub fn step_b_threshold(n: usize, d: usize, norm_a: f64, cfg: &JointConfig) -> f64 {
    64.0 * cfg.lambda_delta * cfg.lambda_theta * (n as f64).ln() / (norm_a * norm_a)
        * (d as f64 / n as f64).sqrt()
}

/// Branch decided after step A, if the algorithm stops there.
pub fn gate_after_a(norm_a: f64, n: usize, d: usize, cfg: &JointConfig) -> Option<Branch> {
    if norm_a <= step_a_threshold(n, d, cfg) {
        Some(Branch::ReturnZero)
    } else if norm_a >= 0.5 {
        Some(Branch::ReturnALarge)
    } else {
        None
    }
}

/// Branch decided after step B, if the algorithm stops there.
pub fn gate_after_b(delta_b: f64, norm_a: f64, n: usize, d: usize, cfg: &JointConfig) -> Option<Branch> {
    (delta_b <= step_b_threshold(n, d, norm_a, cfg)).then_some(Branch::ReturnASmallDeltaHat)
}

/// Step-C block length `floor(1 / (16 delta_b))` in `[1, n]`, with `delta_b`
/// floored at `delta_floor_per_n / n`.
pub fn step_c_block_length(delta_b: f64, n: usize, cfg: &JointConfig) -> usize {
    let floor = cfg.delta_floor_per_n / n as f64;
    block_length_for(delta_b.max(floor), 16.0, n)
}

/// Step C alone: block-PCA on `samples` with the block length implied by
/// `delta_b`, and `xi` evaluated at `1/(8 k_c)`.
pub fn run_step_c(
    samples: &SampleSet,
    delta_b: f64,
    cfg: &JointConfig,
    stream: RngStream,
) -> Result<ThetaEstimate> {
    let k_c = step_c_block_length(delta_b, samples.n(), cfg);
    let delta_eff = 1.0 / (8.0 * k_c as f64);
    estimate_theta_with_block(samples, k_c, delta_eff, &cfg.eigen, stream)
}

pub fn algorithm1(samples: &SampleSet, cfg: &JointConfig, stream: RngStream) -> Result<JointEstimate> {
    algorithm1_with(samples, cfg, stream, &StepOverrides::default())
}

pub fn algorithm1_with(
    samples: &SampleSet,
    cfg: &JointConfig,
    stream: RngStream,
    overrides: &StepOverrides,
) -> Result<JointEstimate> {
    cfg.validate()?;
    let rows = samples.n();
    if rows < 6 {
        return Err(Error::TooFewSamples { needed: 6, found: rows });
    }
    if !rows.is_multiple_of(3) {
        log::warn!("dropping {} trailing rows so the sample splits into thirds", rows % 3);
    }
    let n = rows / 3;
    let d = samples.d();
    let gate_n = overrides.gate_sample_size.unwrap_or(n);

    let theta_a = match &overrides.theta_a {
        Some(v) => {
            if v.len() != d {
                return Err(Error::DimensionMismatch { expected: d, found: v.len() });
            }
            v.clone()
        }
        None => {
            let part = samples.slice_rows(0, n)?;
            estimate_theta_with_block(&part, 1, 0.5, &cfg.eigen, stream.substream(0))?.theta_hat
        }
    };
    let norm_a = linalg::norm(&theta_a);
    if let Some(branch) = gate_after_a(norm_a, gate_n, d, cfg) {
        let theta_hat = match branch {
            Branch::ReturnZero => vec![0.0; d],
            _ => theta_a.clone(),
        };
        return Ok(JointEstimate {
            theta_hat,
            branch,
            theta_a,
            delta_b: None,
            k_c: None,
            theta_c: None,
        });
    }

    let delta_b = match overrides.delta_b {
        Some(v) => DeltaEstimate {
            rho_raw: 1.0 - 2.0 * v,
            delta_raw: v,
            delta_clamped: v.clamp(0.0, 1.0),
            pairs_used: n / 2,
        },
        None => estimate_rho(&samples.slice_rows(n, 2 * n)?, &theta_a)?,
    };
    if let Some(branch) = gate_after_b(delta_b.delta_raw, norm_a, gate_n, d, cfg) {
        return Ok(JointEstimate {
            theta_hat: theta_a.clone(),
            branch,
            theta_a,
            delta_b: Some(delta_b),
            k_c: None,
            theta_c: None,
        });
    }

    let part = samples.slice_rows(2 * n, 3 * n)?;
    let theta_c = run_step_c(&part, delta_b.delta_raw, cfg, stream.substream(2))?;
    Ok(JointEstimate {
        theta_hat: theta_c.theta_hat.clone(),
        branch: Branch::ReturnC,
        theta_a,
        delta_b: Some(delta_b),
        k_c: Some(theta_c.k_used),
        theta_c: Some(theta_c),
    })
}
