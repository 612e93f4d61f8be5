//! The three-cluster benchmark: 50 systems with 3 states and 2 inputs split
//! 10 / 24 / 16 across three dynamics, identical noise scales within a cluster.

use crate::lti_sim::{ClusterGroundTruth, SystemSpec};

pub const N_X: usize = 3;
pub const N_U: usize = 2;

/// Members per cluster.
pub const CLUSTER_SIZES: [usize; 3] = [10, 24, 16];

/// `σ_x = σ_u = σ_w` per cluster.
pub const CLUSTER_SIGMAS: [f64; 3] = [0.11, 0.12, 0.05];

pub const NUM_ROLLOUTS: usize = 100;
pub const HORIZON: usize = 50;
pub const STEP_SIZE: f64 = 1e-3;
pub const ITERATIONS: usize = 100;

pub const A: [[f64; 9]; 3] = [
    [0.5, 0.3, 0.1, 0.0, 0.2, 0.0, 0.1, 0.0, 0.3],
    [-0.3, 0.0, 0.0, 0.1, 0.4, 0.0, 0.2, 0.3, 0.5],
    [-0.1, 0.1, 0.1, 0.1, 0.15, 0.1, 0.1, 0.0, 0.2],
];

pub const B: [[f64; 6]; 3] = [
    [1.0, 0.5, 0.1, 1.0, 0.75, 1.5],
    [1.0, 0.5, 0.1, 1.0, 0.75, 1.5],
    [0.8, 0.1, 0.1, 1.5, 0.4, 0.8],
];

pub fn truths() -> Vec<ClusterGroundTruth> {
    (0..3)
        .map(|j| ClusterGroundTruth::from_rows(N_X, N_U, &A[j], &B[j]).expect("benchmark matrices"))
        .collect()
}

/// Specs for all systems, cluster by cluster, with `cluster_sizes[j]` members
/// each, `num_rollouts` rollouts of length `horizon`.
pub fn specs_with_sizes(
    cluster_sizes: &[usize],
    num_rollouts: usize,
    horizon: usize,
) -> Vec<SystemSpec> {
    let mut out = Vec::new();
    for (j, &size) in cluster_sizes.iter().enumerate() {
        for _ in 0..size {
            let id = out.len();
            out.push(SystemSpec::isotropic(
                id,
                j,
                CLUSTER_SIGMAS[j],
                num_rollouts,
                horizon,
            ));
        }
    }
    out
}

/// The 50 benchmark systems.
pub fn specs(num_rollouts: usize, horizon: usize) -> Vec<SystemSpec> {
    specs_with_sizes(&CLUSTER_SIZES, num_rollouts, horizon)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout() {
        let s = specs(NUM_ROLLOUTS, HORIZON);
        assert_eq!(s.len(), 50);
        assert_eq!(s.iter().filter(|x| x.cluster_id == 1).count(), 24);
        assert!(s.iter().enumerate().all(|(i, x)| x.system_id == i));
        assert_eq!(s[49].sigma_w, 0.05);
        let t = truths();
        assert_eq!(t[0].b(), t[1].b());
        assert_eq!(t[2].a()[(1, 1)], 0.15);
    }
}
