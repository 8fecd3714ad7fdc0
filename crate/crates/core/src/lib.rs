//! Estimation for the binary hidden-Markov Gaussian mean model
//! `X_i = S_i theta + Z_i`, where the signs `S_i` follow a symmetric two-state
//! Markov chain with flip probability `delta`.
//!
//! The crate provides the model samplers, a block-averaged PCA estimator of
//! `theta` for known `delta`, a correlation estimator of `delta`, the
//! three-step joint procedure for unknown `delta`, exact and quadrature
//! oracles, and a Monte Carlo benchmark harness.

// negated comparisons below also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod delta;
pub mod error;
pub mod joint;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod rng;
pub mod theta;

pub use delta::{estimate_rho, project_onto, DeltaEstimate};
pub use error::{Error, Result};
pub use joint::{algorithm1, Branch, JointConfig, JointEstimate};
pub use linalg::{top_eigenpair, EigenConfig, EigenPair, SymMatrix};
pub use model::{loss, sample_hmm, sample_sign_chain, ModelParams, SampleSet, SignSequence};
pub use rng::RngStream;
pub use theta::{estimate_theta_known_delta, xi_k, ThetaEstimate};
