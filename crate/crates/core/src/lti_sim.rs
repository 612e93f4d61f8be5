//! Rollout generation for linear time-invariant systems driven by Gaussian
//! excitation,
//!
//! ```text
//! x_{t+1} = A x_t + B u_t + w_t,   x_0 ~ N(0, σ_x² I), u_t ~ N(0, σ_u² I), w_t ~ N(0, σ_w² I)
//! ```
//!
//! and assembly of the per-system batch matrices `X`, `Z`, `W` that satisfy
//! `X = Θ Z + W` with `Θ = [A B]` and `z_t = [x_t; u_t]`.
//!
//! Column layout: inside rollout `l` columns run backwards in time
//! (`x_T … x_1`, `z_{T-1} … z_0`, `w_{T-1} … w_0`); rollouts are concatenated in
//! increasing `l`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Result, SysIdError};
use crate::linalg::hconcat;

/// Stream reserved for warm-start perturbations; system streams use their id.
pub const INIT_STREAM: u64 = 1 << 63;

/// Independent random stream `stream` derived from `master_seed`.
///
/// Streams never overlap, so the data of system `i` depends only on
/// `(master_seed, i)` and not on how many other systems exist.
pub fn stream_rng(master_seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}

/// Ground-truth dynamics `(A_j, B_j)` of one cluster together with `Θ_j = [A_j B_j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterGroundTruth {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    theta: DMatrix<f64>,
}

impl ClusterGroundTruth {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        if !a.is_square() || a.nrows() == 0 {
            return Err(SysIdError::Config(format!(
                "state matrix A must be square and non-empty, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != a.nrows() || b.ncols() == 0 {
            return Err(SysIdError::shape(
                "input matrix B",
                (a.nrows(), b.ncols().max(1)),
                b.shape(),
            ));
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(SysIdError::Config("system matrices must be finite".into()));
        }
        let theta = hconcat(&a, &b);
        Ok(Self { a, b, theta })
    }

    /// Builds from row-major entries.
    pub fn from_rows(n_x: usize, n_u: usize, a: &[f64], b: &[f64]) -> Result<Self> {
        if a.len() != n_x * n_x || b.len() != n_x * n_u {
            return Err(SysIdError::Config(format!(
                "expected {} entries for A and {} for B, got {} and {}",
                n_x * n_x,
                n_x * n_u,
                a.len(),
                b.len()
            )));
        }
        Self::new(
            DMatrix::from_row_slice(n_x, n_x, a),
            DMatrix::from_row_slice(n_x, n_u, b),
        )
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn theta(&self) -> &DMatrix<f64> {
        &self.theta
    }

    pub fn n_x(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_u(&self) -> usize {
        self.b.ncols()
    }
}

/// Per-system data-collection settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    pub system_id: usize,
    pub cluster_id: usize,
    pub sigma_x: f64,
    pub sigma_u: f64,
    pub sigma_w: f64,
    pub num_rollouts: usize,
    pub horizon: usize,
}

impl SystemSpec {
    /// Shared noise scale `σ = σ_x = σ_u = σ_w`.
    pub fn isotropic(
        system_id: usize,
        cluster_id: usize,
        sigma: f64,
        num_rollouts: usize,
        horizon: usize,
    ) -> Self {
        Self {
            system_id,
            cluster_id,
            sigma_x: sigma,
            sigma_u: sigma,
            sigma_w: sigma,
            num_rollouts,
            horizon,
        }
    }

    /// Zero noise scales are accepted as degenerate Gaussians (useful for
    /// noiseless oracles); negative or non-finite scales are not.
    pub fn validate(&self) -> Result<()> {
        for (name, s) in [
            ("sigma_x", self.sigma_x),
            ("sigma_u", self.sigma_u),
            ("sigma_w", self.sigma_w),
        ] {
            if !s.is_finite() || s < 0.0 {
                return Err(SysIdError::Config(format!(
                    "system {}: {name} must be a finite non-negative number, got {s}",
                    self.system_id
                )));
            }
        }
        if self.num_rollouts == 0 {
            return Err(SysIdError::Config(format!(
                "system {}: num_rollouts must be at least 1",
                self.system_id
            )));
        }
        if self.horizon == 0 {
            return Err(SysIdError::Config(format!(
                "system {}: horizon must be at least 1",
                self.system_id
            )));
        }
        Ok(())
    }
}

/// One simulated trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    /// `x_0 … x_T`
    pub states: Vec<DVector<f64>>,
    /// `u_0 … u_{T-1}`
    pub inputs: Vec<DVector<f64>>,
    /// `w_0 … w_{T-1}`
    pub noises: Vec<DVector<f64>>,
}

impl Rollout {
    /// `z_t = [x_t; u_t]`.
    pub fn state_input(&self, t: usize) -> DVector<f64> {
        let x = &self.states[t];
        let u = &self.inputs[t];
        let mut z = DVector::zeros(x.len() + u.len());
        z.rows_mut(0, x.len()).copy_from(x);
        z.rows_mut(x.len(), u.len()).copy_from(u);
        z
    }

    /// Horizon `T`.
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R, dim: usize, sigma: f64) -> DVector<f64> {
    DVector::from_fn(dim, |_, _| {
        let e: f64 = rng.sample(StandardNormal);
        sigma * e
    })
}

/// Draws one rollout of length `spec.horizon`.
///
/// Draw order: `x_0`, then `(u_t, w_t)` for `t = 0 … T-1`.
pub fn sample_rollout<R: Rng + ?Sized>(
    spec: &SystemSpec,
    truth: &ClusterGroundTruth,
    rng: &mut R,
) -> Result<Rollout> {
    spec.validate()?;
    let (n_x, n_u) = (truth.n_x(), truth.n_u());
    let horizon = spec.horizon;

    let mut states = Vec::with_capacity(horizon + 1);
    let mut inputs = Vec::with_capacity(horizon);
    let mut noises = Vec::with_capacity(horizon);

    states.push(gaussian(rng, n_x, spec.sigma_x));
    for t in 0..horizon {
        let u = gaussian(rng, n_u, spec.sigma_u);
        let w = gaussian(rng, n_x, spec.sigma_w);
        let next = truth.a() * &states[t] + truth.b() * &u + &w;
        states.push(next);
        inputs.push(u);
        noises.push(w);
    }
    Ok(Rollout {
        states,
        inputs,
        noises,
    })
}

/// Batch matrices of one system: `X = Θ Z + W`.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchData {
    system_id: usize,
    x: DMatrix<f64>,
    z: DMatrix<f64>,
    w: DMatrix<f64>,
}

impl BatchData {
    /// Assembles a batch from explicit matrices (synthetic designs, tests).
    pub fn from_parts(
        system_id: usize,
        x: DMatrix<f64>,
        z: DMatrix<f64>,
        w: DMatrix<f64>,
    ) -> Result<Self> {
        if z.ncols() != x.ncols() {
            return Err(SysIdError::shape(
                "batch Z",
                (z.nrows(), x.ncols()),
                z.shape(),
            ));
        }
        if w.shape() != x.shape() {
            return Err(SysIdError::shape("batch W", x.shape(), w.shape()));
        }
        if z.nrows() < x.nrows() {
            return Err(SysIdError::Config(format!(
                "Z must have at least as many rows as X ({} < {})",
                z.nrows(),
                x.nrows()
            )));
        }
        Ok(Self { system_id, x, z, w })
    }

    pub fn system_id(&self) -> usize {
        self.system_id
    }

    /// Next states, `n_x × N·T`.
    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    /// State-input pairs, `(n_x+n_u) × N·T`.
    pub fn z(&self) -> &DMatrix<f64> {
        &self.z
    }

    /// Process noise, `n_x × N·T`.
    pub fn w(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn n_x(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_z(&self) -> usize {
        self.z.nrows()
    }

    /// Number of samples `N·T`.
    pub fn num_columns(&self) -> usize {
        self.x.ncols()
    }

    pub(crate) fn check_theta(&self, theta: &DMatrix<f64>, context: &'static str) -> Result<()> {
        if theta.shape() != (self.n_x(), self.n_z()) {
            return Err(SysIdError::shape(
                context,
                (self.n_x(), self.n_z()),
                theta.shape(),
            ));
        }
        Ok(())
    }
}

/// Collects `spec.num_rollouts` independent rollouts and stacks them.
pub fn collect_batches<R: Rng + ?Sized>(
    spec: &SystemSpec,
    truth: &ClusterGroundTruth,
    rng: &mut R,
) -> Result<BatchData> {
    spec.validate()?;
    let (n_x, n_u) = (truth.n_x(), truth.n_u());
    let horizon = spec.horizon;
    let cols = spec.num_rollouts * horizon;
    let mut x = DMatrix::zeros(n_x, cols);
    let mut z = DMatrix::zeros(n_x + n_u, cols);
    let mut w = DMatrix::zeros(n_x, cols);

    for l in 0..spec.num_rollouts {
        let rollout = sample_rollout(spec, truth, rng)?;
        for (k, t) in (0..horizon).rev().enumerate() {
            let col = l * horizon + k;
            x.column_mut(col).copy_from(&rollout.states[t + 1]);
            z.view_mut((0, col), (n_x, 1)).copy_from(&rollout.states[t]);
            z.view_mut((n_x, col), (n_u, 1))
                .copy_from(&rollout.inputs[t]);
            w.column_mut(col).copy_from(&rollout.noises[t]);
        }
    }
    Ok(BatchData {
        system_id: spec.system_id,
        x,
        z,
        w,
    })
}

/// Generates the batches of every system, each from its own stream of
/// `master_seed`. Output order follows `specs`.
pub fn generate_batches(
    specs: &[SystemSpec],
    truths: &[ClusterGroundTruth],
    master_seed: u64,
) -> Result<Vec<BatchData>> {
    specs
        .par_iter()
        .map(|spec| {
            let truth = truths.get(spec.cluster_id).ok_or_else(|| {
                SysIdError::Config(format!(
                    "system {} references cluster {} but only {} clusters exist",
                    spec.system_id,
                    spec.cluster_id,
                    truths.len()
                ))
            })?;
            let mut rng = stream_rng(master_seed, spec.system_id as u64);
            collect_batches(spec, truth, &mut rng)
        })
        .collect()
}

/// `‖X − Θ Z − W‖_F`; zero for the generating `Θ`.
pub fn verify_batch_relation(batch: &BatchData, theta: &DMatrix<f64>) -> Result<f64> {
    batch.check_theta(theta, "verify_batch_relation theta")?;
    Ok((batch.x() - theta * batch.z() - batch.w()).norm())
}
