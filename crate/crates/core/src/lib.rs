//! Clustered identification of multiple linear time-invariant systems.
//!
//! Systems `x_{t+1} = A x_t + B u_t + w_t` are grouped into `K` clusters that
//! share `(A, B)`. The library simulates their trajectories, computes the
//! closed-form moments of the regressors, and estimates cluster identities and
//! per-cluster models jointly by alternating minimization, alongside
//! single-system, pooled and least-squares baselines.

// `!(x > 0.0)` checks below also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic_moments;
pub mod baselines;
pub mod benchmark;
pub mod clustered;
pub mod error;
pub mod linalg;
pub mod lti_sim;
pub mod metrics;

pub use clustered::{Assignment, ModelSet, Reference, RunHistory, StepRule};
pub use error::{Result, SysIdError};
pub use lti_sim::{BatchData, ClusterGroundTruth, Rollout, SystemSpec};
