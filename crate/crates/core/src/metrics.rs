//! Error, separation and misclassification measures, and the informational
//! sample-size diagnostics.

use nalgebra::DMatrix;

use crate::analytic_moments::state_input_covariance;
use crate::clustered::Assignment;
use crate::error::{Result, SysIdError};
use crate::linalg::spectral_norm;
use crate::lti_sim::{ClusterGroundTruth, SystemSpec};

/// `‖Θ̂ − Θ‖`, the largest singular value of the difference.
pub fn spectral_error(theta_hat: &DMatrix<f64>, theta: &DMatrix<f64>) -> Result<f64> {
    if theta_hat.shape() != theta.shape() {
        return Err(SysIdError::shape(
            "spectral_error",
            theta.shape(),
            theta_hat.shape(),
        ));
    }
    Ok(spectral_norm(&(theta_hat - theta)))
}

/// Minimum and maximum pairwise separation of the cluster models.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeparationReport {
    pub delta_min: f64,
    pub delta_max: f64,
    /// Pair `(j, j')`, `j < j'`, attaining `delta_min`.
    pub closest_pair: (usize, usize),
}

pub fn separation(truths: &[ClusterGroundTruth]) -> Result<SeparationReport> {
    if truths.len() < 2 {
        return Err(SysIdError::Config(format!(
            "separation needs at least two clusters, got {}",
            truths.len()
        )));
    }
    let mut report = SeparationReport {
        delta_min: f64::INFINITY,
        delta_max: 0.0,
        closest_pair: (0, 1),
    };
    for j in 0..truths.len() {
        for k in j + 1..truths.len() {
            let d = spectral_error(truths[j].theta(), truths[k].theta())?;
            if d < report.delta_min {
                report.delta_min = d;
                report.closest_pair = (j, k);
            }
            report.delta_max = report.delta_max.max(d);
        }
    }
    Ok(report)
}

/// Signal-to-noise ratio `ρ = Δ_min² / σ_w²`.
pub fn snr(spec: &SystemSpec, delta_min: f64) -> Result<f64> {
    if !(spec.sigma_w > 0.0) {
        return Err(SysIdError::Config(format!(
            "system {}: SNR undefined for sigma_w = {}",
            spec.system_id, spec.sigma_w
        )));
    }
    Ok(delta_min * delta_min / (spec.sigma_w * spec.sigma_w))
}

/// Number of systems whose estimated cluster differs from the label.
pub fn misclassification_count(assignments: &[Assignment], labels: &[usize]) -> Result<usize> {
    if assignments.len() != labels.len() {
        return Err(SysIdError::DimensionMismatch {
            context: "misclassification_count",
            expected: format!("{} labels", assignments.len()),
            actual: format!("{}", labels.len()),
        });
    }
    Ok(assignments
        .iter()
        .zip(labels)
        .filter(|(a, &l)| a.index() != l)
        .count())
}

/// Sample-size condition evaluated for one `(system, t)` with every unknown
/// constant set to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryCondition {
    pub system_id: usize,
    pub t: usize,
    /// `‖Σ_t‖`
    pub sigma_norm: f64,
    /// `N n_x / [((ρ‖Σ_t‖ + √n_x) / (α⁰ ρ ‖Σ_t‖))² log(MT/δ)]`
    pub ratio: f64,
}

/// Informational report: the constants in the underlying conditions are not
/// known, so nothing here is a pass/fail verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    pub conditions: Vec<TrajectoryCondition>,
    pub min_ratio: f64,
    /// `Σ_i Σ_t exp(−N_i n_x (α⁰ρ‖Σ_t‖ / (ρ‖Σ_t‖ + √n_x))²)`
    pub tail_sum: f64,
    /// `Δ_min / (1 + Δ_max · tail_sum)`
    pub separation_margin: f64,
    pub separation: SeparationReport,
}

pub const DIAGNOSTICS_NOTE: &str = "constants unknown; informational only";

/// Evaluates the trajectory-count and separation conditions for a whole
/// configuration (`systems` reference `truths` by `cluster_id`).
pub fn assumption_diagnostics(
    systems: &[SystemSpec],
    truths: &[ClusterGroundTruth],
    alpha0: f64,
    delta: f64,
) -> Result<AssumptionReport> {
    if !(alpha0 > 0.0 && alpha0 < 0.5) {
        return Err(SysIdError::Config(format!(
            "alpha0 must lie in (0, 1/2), got {alpha0}"
        )));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(SysIdError::Config(format!(
            "delta must lie in (0, 1), got {delta}"
        )));
    }
    let sep = separation(truths)?;
    let m = systems.len() as f64;

    let mut conditions = Vec::new();
    let mut tail_sum = 0.0;
    for spec in systems {
        let truth = truths.get(spec.cluster_id).ok_or_else(|| {
            SysIdError::Config(format!("system {} has unknown cluster", spec.system_id))
        })?;
        let rho = snr(spec, sep.delta_min)?;
        let n_x = truth.n_x() as f64;
        let log_term = (m * spec.horizon as f64 / delta).ln();
        let samples = spec.num_rollouts as f64 * n_x;
        for t in 0..spec.horizon {
            let sigma_norm = state_input_covariance(spec, truth, t)?.norm();
            let signal = rho * sigma_norm;
            let q = alpha0 * signal / (signal + n_x.sqrt());
            let ratio = samples * q * q / log_term;
            tail_sum += (-samples * q * q).exp();
            conditions.push(TrajectoryCondition {
                system_id: spec.system_id,
                t,
                sigma_norm,
                ratio,
            });
        }
    }
    let min_ratio = conditions
        .iter()
        .map(|c| c.ratio)
        .fold(f64::INFINITY, f64::min);
    Ok(AssumptionReport {
        conditions,
        min_ratio,
        tail_sum,
        separation_margin: sep.delta_min / (1.0 + sep.delta_max * tail_sum),
        separation: sep,
    })
}
