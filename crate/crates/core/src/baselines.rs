//! Reference estimators: a single system learning alone, one shared model
//! learned by every system (no clustering), and closed-form least squares.

use nalgebra::DMatrix;

use crate::clustered::{
    model_update_step, run, Assignment, IterationRecord, ModelSet, Reference, RunHistory, StepRule,
};
use crate::error::{Result, SysIdError};
use crate::linalg::{eigen_extremes, SINGULAR_RTOL};
use crate::lti_sim::{BatchData, ClusterGroundTruth};
use crate::metrics::spectral_error;

/// Gradient descent `Θ̂ ← Θ̂ + 2η (X − Θ̂Z) Zᵀ` on one system's own data.
///
/// This is the clustered algorithm with one system and one cluster.
pub fn single_agent_run(
    batch: &BatchData,
    truth: &ClusterGroundTruth,
    init: &DMatrix<f64>,
    eta: f64,
    iterations: usize,
) -> Result<RunHistory> {
    run(
        Reference {
            truths: std::slice::from_ref(truth),
            labels: &[0],
        },
        std::slice::from_ref(batch),
        ModelSet::new(vec![init.clone()])?,
        &StepRule::Fixed(eta),
        iterations,
    )
}

/// One shared model updated with the average gradient of all systems.
///
/// Each record's `errors[j]` is the distance of the shared model to cluster
/// `j`'s ground truth; `assignments` are all zero and `misclassified` is 0.
pub fn pooled_run(
    batches: &[BatchData],
    truths: &[ClusterGroundTruth],
    init: &DMatrix<f64>,
    eta: f64,
    iterations: usize,
) -> Result<RunHistory> {
    if iterations == 0 {
        return Err(SysIdError::Config("iterations must be at least 1".into()));
    }
    if batches.is_empty() {
        return Err(SysIdError::Config("no systems to pool".into()));
    }
    let everyone = vec![Assignment::new(0, 1); batches.len()];
    let mut models = ModelSet::new(vec![init.clone()])?;
    let mut records = Vec::with_capacity(iterations);
    for r in 1..=iterations {
        models = model_update_step(&models, &everyone, batches, &[eta])?;
        let errors = truths
            .iter()
            .map(|t| spectral_error(models.theta(0), t.theta()))
            .collect::<Result<Vec<_>>>()?;
        records.push(IterationRecord {
            iteration: r,
            assignments: vec![0; batches.len()],
            misclassified: 0,
            errors,
            step_sizes: vec![eta],
            empty_clusters: Vec::new(),
        });
    }
    Ok(RunHistory {
        records,
        final_models: models,
    })
}

/// Minimizer of `Σ_i ‖X⁽ⁱ⁾ − Θ Z⁽ⁱ⁾‖_F²` over the given batches:
/// `(Σ X Zᵀ)(Σ Z Zᵀ)⁻¹`, solved through a Cholesky factorization.
pub fn least_squares_pooled(batches: &[&BatchData]) -> Result<DMatrix<f64>> {
    let first = batches
        .first()
        .ok_or_else(|| SysIdError::Config("least squares needs at least one batch".into()))?;
    let (n_x, n_z) = (first.n_x(), first.n_z());
    let mut gram = DMatrix::zeros(n_z, n_z);
    let mut cross = DMatrix::zeros(n_z, n_x);
    for b in batches {
        if (b.n_x(), b.n_z()) != (n_x, n_z) {
            return Err(SysIdError::shape(
                "least squares batch",
                (n_x, n_z),
                (b.n_x(), b.n_z()),
            ));
        }
        gram += b.z() * b.z().transpose();
        cross += b.z() * b.x().transpose();
    }
    let (lmin, lmax) = eigen_extremes(&gram);
    if !(lmin > SINGULAR_RTOL * lmax) {
        return Err(SysIdError::Degenerate(format!(
            "Z Zᵀ is singular (λ_min = {lmin:e}, λ_max = {lmax:e})"
        )));
    }
    let chol = gram
        .cholesky()
        .ok_or_else(|| SysIdError::Degenerate("Cholesky factorization of Z Zᵀ failed".into()))?;
    // (ZZᵀ) Θᵀ = Z Xᵀ
    Ok(chol.solve(&cross).transpose())
}

/// `X Zᵀ (Z Zᵀ)⁻¹` for one system.
pub fn least_squares(batch: &BatchData) -> Result<DMatrix<f64>> {
    least_squares_pooled(&[batch])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustered::frobenius_cost;
    use crate::lti_sim::{collect_batches, stream_rng, SystemSpec};

    fn truth() -> ClusterGroundTruth {
        ClusterGroundTruth::from_rows(2, 1, &[0.6, 0.2, -0.1, 0.4], &[1.0, 0.5]).unwrap()
    }

    fn batch(sigma_w: f64, seed: u64) -> BatchData {
        let mut spec = SystemSpec::isotropic(0, 0, 0.4, 6, 8);
        spec.sigma_w = sigma_w;
        collect_batches(&spec, &truth(), &mut stream_rng(seed, 0)).unwrap()
    }

    #[test]
    fn noiseless_least_squares_recovers_truth() {
        let est = least_squares(&batch(0.0, 1)).unwrap();
        assert!(spectral_error(&est, truth().theta()).unwrap() < 1e-8);
    }

    #[test]
    fn identity_design_returns_x() {
        let x = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, -1.0, 0.5, 4.0]);
        let b = BatchData::from_parts(0, x.clone(), DMatrix::identity(3, 3), DMatrix::zeros(2, 3))
            .unwrap();
        assert!((least_squares(&b).unwrap() - x).amax() < 1e-14);
    }

    #[test]
    fn noisy_least_squares_is_stationary() {
        let b = batch(0.3, 2);
        let est = least_squares(&b).unwrap();
        let grad = (b.x() - &est * b.z()) * b.z().transpose();
        assert!(grad.norm() < 1e-8, "{}", grad.norm());
    }

    #[test]
    fn singular_design_is_degenerate() {
        let b = BatchData::from_parts(
            0,
            DMatrix::zeros(2, 5),
            DMatrix::from_element(3, 5, 1.0),
            DMatrix::zeros(2, 5),
        )
        .unwrap();
        assert!(matches!(least_squares(&b), Err(SysIdError::Degenerate(_))));
        assert!(least_squares_pooled(&[]).is_err());
    }

    #[test]
    fn pooled_least_squares_singleton_and_duplicate() {
        let b = batch(0.2, 3);
        let single = least_squares(&b).unwrap();
        assert_eq!(least_squares_pooled(&[&b]).unwrap(), single);
        let dup = least_squares_pooled(&[&b, &b]).unwrap();
        assert!((dup - &single).amax() < 1e-12);
    }

    #[test]
    fn least_squares_is_a_minimizer() {
        let b = batch(0.3, 4);
        let est = least_squares(&b).unwrap();
        let best = frobenius_cost(&b, &est).unwrap();
        let mut rng = stream_rng(4, 99);
        use rand::Rng;
        for _ in 0..100 {
            let e = DMatrix::from_fn(2, 3, |_, _| rng.random_range(-0.1..0.1));
            assert!(best <= frobenius_cost(&b, &(&est + e)).unwrap());
        }
    }

    #[test]
    fn single_agent_fixed_point() {
        let b = batch(0.0, 5);
        let h = single_agent_run(&b, &truth(), truth().theta(), 1e-3, 5).unwrap();
        assert!(h.records.iter().all(|r| r.errors[0] < 1e-12));
    }

    #[test]
    fn pooled_reports_error_against_every_cluster() {
        let other =
            ClusterGroundTruth::from_rows(2, 1, &[0.0, 0.0, 0.0, 0.0], &[0.0, 0.0]).unwrap();
        let b = batch(0.1, 6);
        let h = pooled_run(&[b], &[truth(), other], truth().theta(), 1e-3, 3).unwrap();
        assert_eq!(h.records.len(), 3);
        assert!(h
            .records
            .iter()
            .all(|r| r.errors.len() == 2 && r.misclassified == 0));
    }
}
