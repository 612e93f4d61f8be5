//! Clustered system identification by alternating minimization.
//!
//! Each iteration runs two phases against the current models `Θ̂_1 … Θ̂_K`:
//!
//! * **cluster estimation**: every system picks
//!   `ĵ = argmin_j ‖X⁽ⁱ⁾ − Θ̂_j Z⁽ⁱ⁾‖_F²`;
//! * **model estimation**: every cluster with at least one member takes one
//!   averaged gradient step
//!   `Θ̂_j ← Θ̂_j + (2η_j / |Ĉ_j|) Σ_{i∈Ĉ_j} (X⁽ⁱ⁾ − Θ̂_j Z⁽ⁱ⁾) Z⁽ⁱ⁾ᵀ`.
//!
//! Cluster estimation runs in parallel over systems; the per-cluster gradient
//! sums are reduced in ascending system id so results are bit-reproducible and
//! independent of the order in which batches are supplied.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::analytic_moments::step_size_from_moment_sums;
use crate::error::{Result, SysIdError};
use crate::linalg::{eigen_extremes, frobenius_sq, spectral_norm};
use crate::lti_sim::{BatchData, ClusterGroundTruth};
use crate::metrics::{separation, spectral_error};

/// Current estimates `Θ̂_1 … Θ̂_K` and the number of model updates applied.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSet {
    thetas: Vec<DMatrix<f64>>,
    iteration: usize,
}

impl ModelSet {
    pub fn new(thetas: Vec<DMatrix<f64>>) -> Result<Self> {
        let first = thetas
            .first()
            .ok_or_else(|| SysIdError::Config("a model set needs at least one model".into()))?;
        let shape = first.shape();
        if let Some(bad) = thetas.iter().find(|t| t.shape() != shape) {
            return Err(SysIdError::shape("ModelSet member", shape, bad.shape()));
        }
        Ok(Self {
            thetas,
            iteration: 0,
        })
    }

    /// Models equal to the given ground truths.
    pub fn from_truths(truths: &[ClusterGroundTruth]) -> Result<Self> {
        Self::new(truths.iter().map(|t| t.theta().clone()).collect())
    }

    pub fn k(&self) -> usize {
        self.thetas.len()
    }

    pub fn theta(&self, j: usize) -> &DMatrix<f64> {
        &self.thetas[j]
    }

    pub fn thetas(&self) -> &[DMatrix<f64>] {
        &self.thetas
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn shape(&self) -> (usize, usize) {
        self.thetas[0].shape()
    }
}

/// Hard cluster assignment of one system (the one-hot vector `e_i`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Assignment {
    index: usize,
    k: usize,
}

impl Assignment {
    /// Panics if `index >= k`.
    pub fn new(index: usize, k: usize) -> Self {
        assert!(
            index < k,
            "assignment {index} out of range for {k} clusters"
        );
        Self { index, k }
    }

    /// Estimated cluster `ĵ`.
    pub fn index(&self) -> usize {
        self.index
    }

    pub fn num_clusters(&self) -> usize {
        self.k
    }

    pub fn one_hot(&self) -> DVector<f64> {
        DVector::from_fn(self.k, |j, _| if j == self.index { 1.0 } else { 0.0 })
    }
}

/// How the per-cluster step sizes `η_j` are chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum StepRule {
    /// One step size shared by every cluster.
    Fixed(f64),
    /// One step size per cluster.
    PerCluster(Vec<f64>),
    /// `η_j = |Ĉ_j| / λ_min(Σ_{i∈Ĉ_j} S_i)` re-evaluated on the estimated
    /// membership each iteration; `S_i` is the moment sum of the `i`-th batch
    /// (see [`crate::analytic_moments::moment_sum`]), in batch order.
    Theoretical(Vec<DMatrix<f64>>),
}

impl StepRule {
    fn step_sizes(&self, k: usize, assignments: &[Assignment]) -> Result<Vec<f64>> {
        match self {
            StepRule::Fixed(eta) => Ok(vec![*eta; k]),
            StepRule::PerCluster(etas) => {
                if etas.len() != k {
                    return Err(SysIdError::DimensionMismatch {
                        context: "per-cluster step sizes",
                        expected: k.to_string(),
                        actual: etas.len().to_string(),
                    });
                }
                Ok(etas.clone())
            }
            StepRule::Theoretical(sums) => {
                if sums.len() != assignments.len() {
                    return Err(SysIdError::DimensionMismatch {
                        context: "theoretical step rule moment sums",
                        expected: assignments.len().to_string(),
                        actual: sums.len().to_string(),
                    });
                }
                (0..k)
                    .map(|j| {
                        let members: Vec<_> = assignments
                            .iter()
                            .zip(sums)
                            .filter(|(a, _)| a.index() == j)
                            .map(|(_, s)| s)
                            .collect();
                        if members.is_empty() {
                            Ok(0.0)
                        } else {
                            step_size_from_moment_sums(members)
                        }
                    })
                    .collect()
            }
        }
    }
}

/// Ground truth used only to score a run.
#[derive(Debug, Clone, Copy)]
pub struct Reference<'a> {
    pub truths: &'a [ClusterGroundTruth],
    /// True cluster of each batch, in batch order.
    pub labels: &'a [usize],
}

/// State after one completed iteration `r` (1-based): the assignments made
/// from `Θ̂^(r-1)` and the errors of `Θ̂^(r)`.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// `ĵ` per batch, in batch order.
    pub assignments: Vec<usize>,
    pub misclassified: usize,
    /// `‖Θ̂_j − Θ_j‖` per cluster after the update.
    pub errors: Vec<f64>,
    pub step_sizes: Vec<f64>,
    /// Clusters that received no system this iteration (left unchanged).
    pub empty_clusters: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunHistory {
    pub records: Vec<IterationRecord>,
    pub final_models: ModelSet,
}

impl RunHistory {
    pub fn final_errors(&self) -> &[f64] {
        self.records
            .last()
            .map(|r| r.errors.as_slice())
            .unwrap_or(&[])
    }
}

/// `C(Θ) = ‖X − Θ Z‖_F²`.
pub fn frobenius_cost(batch: &BatchData, theta: &DMatrix<f64>) -> Result<f64> {
    batch.check_theta(theta, "frobenius_cost theta")?;
    Ok(frobenius_sq(&(batch.x() - theta * batch.z())))
}

/// Cluster estimation for one system. Ties go to the smallest index.
pub fn estimate_cluster(batch: &BatchData, models: &ModelSet) -> Result<Assignment> {
    let mut best = (0usize, f64::INFINITY);
    for (j, theta) in models.thetas().iter().enumerate() {
        let cost = frobenius_cost(batch, theta)?;
        if cost < best.1 {
            best = (j, cost);
        }
    }
    Ok(Assignment::new(best.0, models.k()))
}

/// One model-estimation step. Clusters without members keep their model.
pub fn model_update_step(
    models: &ModelSet,
    assignments: &[Assignment],
    batches: &[BatchData],
    step_sizes: &[f64],
) -> Result<ModelSet> {
    if assignments.len() != batches.len() {
        return Err(SysIdError::DimensionMismatch {
            context: "model_update_step assignments",
            expected: batches.len().to_string(),
            actual: assignments.len().to_string(),
        });
    }
    if step_sizes.len() != models.k() {
        return Err(SysIdError::DimensionMismatch {
            context: "model_update_step step sizes",
            expected: models.k().to_string(),
            actual: step_sizes.len().to_string(),
        });
    }

    let mut order: Vec<usize> = (0..batches.len()).collect();
    order.sort_by_key(|&i| batches[i].system_id());

    let mut thetas = models.thetas.clone();
    for (j, theta) in thetas.iter_mut().enumerate() {
        let members: Vec<usize> = order
            .iter()
            .copied()
            .filter(|&i| assignments[i].index() == j)
            .collect();
        if members.is_empty() {
            log::debug!("cluster {j} has no members; model left unchanged");
            continue;
        }
        let current = models.theta(j);
        let mut grad = DMatrix::zeros(current.nrows(), current.ncols());
        for &i in &members {
            let b = &batches[i];
            b.check_theta(current, "model_update_step theta")?;
            let resid = b.x() - current * b.z();
            grad += resid * b.z().transpose();
        }
        *theta += grad * (2.0 * step_sizes[j] / members.len() as f64);
    }
    Ok(ModelSet {
        thetas,
        iteration: models.iteration + 1,
    })
}

/// Warm start: `Θ̂_j = Θ_j + P_j` with `P_j` a Gaussian direction rescaled to
/// spectral norm `(½ − α⁰) Δ_min`.
///
/// A single cluster has no separation; its radius is then measured against
/// `‖Θ_1‖` instead.
pub fn warm_init<R: Rng + ?Sized>(
    truths: &[ClusterGroundTruth],
    alpha0: f64,
    rng: &mut R,
) -> Result<ModelSet> {
    if !(alpha0 > 0.0 && alpha0 < 0.5) {
        return Err(SysIdError::Config(format!(
            "alpha0 must lie in (0, 1/2), got {alpha0}"
        )));
    }
    let scale = match truths.len() {
        0 => {
            return Err(SysIdError::Config(
                "warm_init needs at least one cluster".into(),
            ))
        }
        1 => spectral_norm(truths[0].theta()),
        _ => separation(truths)?.delta_min,
    };
    if !(scale > 0.0) {
        return Err(SysIdError::Degenerate(
            "clusters are not separated (Δ_min = 0)".into(),
        ));
    }
    let radius = (0.5 - alpha0) * scale;
    let thetas = truths
        .iter()
        .map(|truth| {
            let (r, c) = truth.theta().shape();
            let mut dir = DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal));
            let norm = spectral_norm(&dir);
            if norm > 0.0 {
                dir *= radius / norm;
            }
            truth.theta() + dir
        })
        .collect();
    ModelSet::new(thetas)
}

/// A step size that makes every single-cluster gradient step non-expansive:
/// `|C| / (2 λ_max(Σ_i Z⁽ⁱ⁾Z⁽ⁱ⁾ᵀ))`.
pub fn safe_step_size(batches: &[&BatchData]) -> Result<f64> {
    let first = batches
        .first()
        .ok_or_else(|| SysIdError::Config("safe_step_size needs at least one batch".into()))?;
    let mut gram = DMatrix::zeros(first.n_z(), first.n_z());
    for b in batches {
        gram += b.z() * b.z().transpose();
    }
    let (_, lmax) = eigen_extremes(&gram);
    if !(lmax > 0.0) {
        return Err(SysIdError::Degenerate("all regressors are zero".into()));
    }
    Ok(batches.len() as f64 / (2.0 * lmax))
}

/// Iteration budget `⌈2 + ln(Δ_min / 4ε)⌉` (at least 1) suggested for a target
/// error `ε`.
pub fn suggested_iterations(delta_min: f64, target_error: f64) -> Result<usize> {
    if !(delta_min > 0.0 && target_error > 0.0) {
        return Err(SysIdError::Config(
            "suggested_iterations needs positive separation and target error".into(),
        ));
    }
    let r = 2.0 + (delta_min / (4.0 * target_error)).ln();
    Ok(r.ceil().max(1.0) as usize)
}

/// Runs `iterations` rounds of cluster estimation followed by model estimation.
pub fn run(
    reference: Reference<'_>,
    batches: &[BatchData],
    init: ModelSet,
    step_rule: &StepRule,
    iterations: usize,
) -> Result<RunHistory> {
    if iterations == 0 {
        return Err(SysIdError::Config("iterations must be at least 1".into()));
    }
    if batches.is_empty() {
        return Err(SysIdError::Config("no systems to identify".into()));
    }
    if reference.labels.len() != batches.len() {
        return Err(SysIdError::DimensionMismatch {
            context: "run labels",
            expected: batches.len().to_string(),
            actual: reference.labels.len().to_string(),
        });
    }
    if reference.truths.len() != init.k() {
        return Err(SysIdError::DimensionMismatch {
            context: "run ground truths",
            expected: init.k().to_string(),
            actual: reference.truths.len().to_string(),
        });
    }

    let k = init.k();
    let mut models = init;
    let mut records = Vec::with_capacity(iterations);
    for r in 1..=iterations {
        let assignments = batches
            .par_iter()
            .map(|b| estimate_cluster(b, &models))
            .collect::<Result<Vec<_>>>()?;
        let step_sizes = step_rule.step_sizes(k, &assignments)?;
        let empty_clusters: Vec<usize> = (0..k)
            .filter(|&j| assignments.iter().all(|a| a.index() != j))
            .collect();
        if !empty_clusters.is_empty() {
            log::info!("iteration {r}: empty clusters {empty_clusters:?} skipped");
        }
        models = model_update_step(&models, &assignments, batches, &step_sizes)?;

        let errors = models
            .thetas()
            .iter()
            .zip(reference.truths)
            .map(|(m, t)| spectral_error(m, t.theta()))
            .collect::<Result<Vec<_>>>()?;
        let assignments: Vec<usize> = assignments.iter().map(Assignment::index).collect();
        let misclassified = assignments
            .iter()
            .zip(reference.labels)
            .filter(|(a, l)| a != l)
            .count();
        records.push(IterationRecord {
            iteration: r,
            assignments,
            misclassified,
            errors,
            step_sizes,
            empty_clusters,
        });
    }
    Ok(RunHistory {
        records,
        final_models: models,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti_sim::{collect_batches, stream_rng, SystemSpec};

    fn truths() -> Vec<ClusterGroundTruth> {
        vec![
            ClusterGroundTruth::from_rows(2, 1, &[0.5, 0.1, 0.0, 0.3], &[1.0, 0.2]).unwrap(),
            ClusterGroundTruth::from_rows(2, 1, &[-0.4, 0.0, 0.2, 0.1], &[0.1, 1.0]).unwrap(),
        ]
    }

    fn batch(cluster: usize, id: usize, sigma_w: f64, seed: u64) -> BatchData {
        let mut spec = SystemSpec::isotropic(id, cluster, 0.5, 4, 6);
        spec.sigma_w = sigma_w;
        collect_batches(&spec, &truths()[cluster], &mut stream_rng(seed, id as u64)).unwrap()
    }

    #[test]
    fn cost_is_zero_at_generator_for_noiseless_data() {
        let b = batch(1, 0, 0.0, 3);
        assert_eq!(frobenius_cost(&b, truths()[1].theta()).unwrap(), 0.0);
        let empty = BatchData::from_parts(
            0,
            DMatrix::zeros(2, 4),
            DMatrix::zeros(3, 4),
            DMatrix::zeros(2, 4),
        )
        .unwrap();
        let theta = DMatrix::from_element(2, 3, 7.0);
        assert_eq!(frobenius_cost(&empty, &theta).unwrap(), 0.0);
        assert!(frobenius_cost(&empty, &DMatrix::zeros(3, 3)).is_err());
    }

    #[test]
    fn cluster_estimation_cases() {
        let models = ModelSet::from_truths(&truths()).unwrap();
        for j in 0..2 {
            let b = batch(j, 5, 0.0, 9);
            assert_eq!(estimate_cluster(&b, &models).unwrap().index(), j);
        }
        let single = ModelSet::new(vec![truths()[1].theta().clone()]).unwrap();
        assert_eq!(
            estimate_cluster(&batch(0, 0, 0.1, 1), &single)
                .unwrap()
                .index(),
            0
        );
        let twins = ModelSet::new(vec![truths()[1].theta().clone(); 2]).unwrap();
        assert_eq!(
            estimate_cluster(&batch(1, 0, 0.0, 1), &twins)
                .unwrap()
                .index(),
            0
        );
    }

    #[test]
    fn one_hot_matches_index() {
        let a = Assignment::new(2, 4);
        assert_eq!(a.one_hot().as_slice(), &[0.0, 0.0, 1.0, 0.0]);
        assert_eq!(a.one_hot().sum(), 1.0);
    }

    #[test]
    fn update_fixed_point_and_zero_step() {
        let t = truths();
        let models = ModelSet::from_truths(&t).unwrap();
        let batches = vec![batch(0, 0, 0.0, 1), batch(1, 1, 0.0, 1)];
        let assign = vec![Assignment::new(0, 2), Assignment::new(1, 2)];
        let next = model_update_step(&models, &assign, &batches, &[0.01, 0.01]).unwrap();
        assert_eq!(next.iteration(), 1);
        for j in 0..2 {
            assert!((next.theta(j) - t[j].theta()).amax() <= 1e-12);
        }

        let noisy = vec![batch(0, 0, 0.3, 1), batch(1, 1, 0.3, 1)];
        let perturbed = ModelSet::new(vec![
            t[0].theta().add_scalar(0.1),
            t[1].theta().add_scalar(-0.2),
        ])
        .unwrap();
        let next = model_update_step(&perturbed, &assign, &noisy, &[0.0, 0.0]).unwrap();
        assert_eq!(next.thetas(), perturbed.thetas());
    }

    #[test]
    fn empty_cluster_keeps_model() {
        let t = truths();
        let models =
            ModelSet::new(vec![t[0].theta().add_scalar(0.3), t[1].theta().clone()]).unwrap();
        let batches = vec![batch(1, 0, 0.2, 4)];
        let next =
            model_update_step(&models, &[Assignment::new(1, 2)], &batches, &[0.01, 0.01]).unwrap();
        assert_eq!(next.theta(0), models.theta(0));
    }

    #[test]
    fn one_step_matches_closed_form() {
        let t = truths();
        let b = batch(0, 0, 0.0, 21);
        let e = DMatrix::from_row_slice(2, 3, &[0.05, -0.02, 0.01, 0.0, 0.03, -0.04]);
        let models = ModelSet::new(vec![t[0].theta() + &e]).unwrap();
        let eta = 0.002;
        let next =
            model_update_step(&models, &[Assignment::new(0, 1)], std::slice::from_ref(&b), &[eta]).unwrap();
        let gram = b.z() * b.z().transpose();
        let expect = &e * (DMatrix::identity(3, 3) - gram * (2.0 * eta));
        assert!((next.theta(0) - t[0].theta() - expect).amax() < 1e-12);
    }

    #[test]
    fn warm_init_radius() {
        let t = truths();
        let sep = separation(&t).unwrap();
        let mut rng = stream_rng(0, 1);
        for alpha0 in [0.05, 0.25, 0.49, 0.5 - 1e-9] {
            let init = warm_init(&t, alpha0, &mut rng).unwrap();
            for j in 0..2 {
                let r = spectral_error(init.theta(j), t[j].theta()).unwrap();
                assert!((r - (0.5 - alpha0) * sep.delta_min).abs() < 1e-10);
            }
        }
        assert!(warm_init(&t, 0.5, &mut rng).is_err());
        assert!(warm_init(&t, 0.0, &mut rng).is_err());
        let same = vec![t[0].clone(), t[0].clone()];
        assert!(matches!(
            warm_init(&same, 0.25, &mut rng),
            Err(SysIdError::Degenerate(_))
        ));
    }

    #[test]
    fn run_single_iteration_equals_manual_composition() {
        let t = truths();
        let batches: Vec<_> = (0..4).map(|i| batch(i % 2, i, 0.2, 8)).collect();
        let labels: Vec<_> = (0..4).map(|i| i % 2).collect();
        let init = warm_init(&t, 0.25, &mut stream_rng(8, u64::MAX)).unwrap();
        let h = run(
            Reference {
                truths: &t,
                labels: &labels,
            },
            &batches,
            init.clone(),
            &StepRule::Fixed(1e-3),
            1,
        )
        .unwrap();
        let assign: Vec<_> = batches
            .iter()
            .map(|b| estimate_cluster(b, &init).unwrap())
            .collect();
        let manual = model_update_step(&init, &assign, &batches, &[1e-3, 1e-3]).unwrap();
        assert_eq!(h.final_models, manual);
        assert_eq!(h.records.len(), 1);
        assert_eq!(
            h.records[0].assignments,
            assign.iter().map(|a| a.index()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn theoretical_rule_uses_estimated_members() {
        let s1 = DMatrix::identity(3, 3) * 2.0;
        let s2 = DMatrix::identity(3, 3) * 4.0;
        let rule = StepRule::Theoretical(vec![s1, s2]);
        let assign = [Assignment::new(0, 2), Assignment::new(0, 2)];
        let etas = rule.step_sizes(2, &assign).unwrap();
        assert!((etas[0] - 2.0 / 6.0).abs() < 1e-15);
        assert_eq!(etas[1], 0.0);
    }

    #[test]
    fn suggested_iteration_count() {
        assert_eq!(suggested_iterations(4.0, 1.0).unwrap(), 2);
        assert_eq!(suggested_iterations(1.0, 1e-3).unwrap(), 8);
        assert!(suggested_iterations(0.0, 1.0).is_err());
    }

    #[test]
    fn run_rejects_bad_inputs() {
        let t = truths();
        let init = ModelSet::from_truths(&t).unwrap();
        let batches = vec![batch(0, 0, 0.1, 1)];
        let reference = Reference {
            truths: &t,
            labels: &[0],
        };
        assert!(run(reference, &batches, init.clone(), &StepRule::Fixed(1e-3), 0).is_err());
        let bad = Reference {
            truths: &t,
            labels: &[0, 1],
        };
        assert!(run(bad, &batches, init.clone(), &StepRule::Fixed(1e-3), 1).is_err());
        assert!(run(
            reference,
            &batches,
            init,
            &StepRule::PerCluster(vec![1.0]),
            1
        )
        .is_err());
    }
}
