use csysid_core::analytic_moments::theoretical_step_size;
use csysid_core::clustered::Assignment;
use csysid_core::metrics::{misclassification_count, separation, spectral_error};
use csysid_core::{benchmark as bm, ClusterGroundTruth, SystemSpec};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-2.0f64..2.0, rows * cols)
        .prop_map(move |v| DMatrix::from_row_slice(rows, cols, &v))
}

fn truth() -> impl Strategy<Value = ClusterGroundTruth> {
    (matrix(2, 2), matrix(2, 1)).prop_map(|(a, b)| ClusterGroundTruth::new(a * 0.4, b).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn spectral_error_triangle(a in matrix(3, 5), b in matrix(3, 5), c in matrix(3, 5)) {
        let ab = spectral_error(&a, &b).unwrap();
        let bc = spectral_error(&b, &c).unwrap();
        let ac = spectral_error(&a, &c).unwrap();
        prop_assert!(ac <= ab + bc + 1e-10);
        prop_assert!((ab - spectral_error(&b, &a).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn separation_is_order_free(truths in prop::collection::vec(truth(), 2..6), seed in any::<u64>()) {
        let r = separation(&truths).unwrap();
        let mut shuffled = truths.clone();
        let n = shuffled.len();
        shuffled.rotate_left((seed % n as u64) as usize);
        shuffled.reverse();
        let s = separation(&shuffled).unwrap();
        prop_assert_eq!(r.delta_min, s.delta_min);
        prop_assert_eq!(r.delta_max, s.delta_max);
        prop_assert!(0.0 <= r.delta_min && r.delta_min <= r.delta_max);
    }

    #[test]
    fn misclassification_survives_relabeling(
        pairs in prop::collection::vec((0usize..4, 0usize..4), 1..40),
        shift in 0usize..4,
    ) {
        let est: Vec<_> = pairs.iter().map(|&(a, _)| Assignment::new(a, 4)).collect();
        let labels: Vec<_> = pairs.iter().map(|&(_, l)| l).collect();
        let base = misclassification_count(&est, &labels).unwrap();
        let relabel = |j: usize| (j + shift) % 4;
        let est2: Vec<_> = est.iter().map(|a| Assignment::new(relabel(a.index()), 4)).collect();
        let labels2: Vec<_> = labels.iter().map(|&l| relabel(l)).collect();
        prop_assert_eq!(base, misclassification_count(&est2, &labels2).unwrap());
        prop_assert!(base <= labels.len());
    }

    #[test]
    fn step_size_ignores_member_order(
        counts in prop::collection::vec((0usize..3, 1usize..20), 1..8),
        rotate in 0usize..8,
    ) {
        let truths = bm::truths();
        let mut members: Vec<_> = counts
            .iter()
            .enumerate()
            .map(|(i, &(j, n))| SystemSpec::isotropic(i, j, bm::CLUSTER_SIGMAS[j], n, 6))
            .collect();
        let a = theoretical_step_size(&members, &truths).unwrap();
        let len = members.len();
        members.rotate_left(rotate % len);
        members.reverse();
        let b = theoretical_step_size(&members, &truths).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * a);
    }

    #[test]
    fn one_hot_is_consistent(k in 1usize..10, pick in 0usize..10) {
        let j = pick % k;
        let a = Assignment::new(j, k);
        let v = a.one_hot();
        prop_assert_eq!(v.len(), k);
        prop_assert_eq!(v.sum(), 1.0);
        prop_assert_eq!(v[j], 1.0);
    }
}
