//! Closed-form second moments of the state-input pairs `z_t = [x_t; u_t]`.
//!
//! Unrolling the dynamics gives
//!
//! ```text
//! x_t = G_t [u_0; …; u_{t-1}] + F_t [w_0; …; w_{t-1}] + A^t x_0
//! G_t = [A^{t-1}B … AB B],   F_t = [A^{t-1} … A I]
//! ```
//!
//! so `z_t ~ N(0, Σ_t)` with state block
//! `σ_u² G_t G_tᵀ + σ_w² F_t F_tᵀ + σ_x² A^t (A^t)ᵀ`, input block `σ_u² I` and
//! zero cross blocks. `t = 0` uses empty `G_0`, `F_0` so that `Σ_0` falls out of
//! the same expression.

use nalgebra::DMatrix;

use crate::error::{Result, SysIdError};
use crate::linalg::{block_diag, eigen_extremes, SINGULAR_RTOL};
use crate::lti_sim::{ClusterGroundTruth, SystemSpec};

/// `G_t` and `F_t` for a given `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseBlocks {
    /// `n_x × t·n_u`
    pub g: DMatrix<f64>,
    /// `n_x × t·n_x`
    pub f: DMatrix<f64>,
    pub t: usize,
}

/// Covariance `Σ_t` of `z_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateInputCovariance {
    pub sigma: DMatrix<f64>,
    pub t: usize,
}

impl StateInputCovariance {
    /// Upper-left `n_x × n_x` block (covariance of `x_t`).
    pub fn state_block(&self, n_x: usize) -> DMatrix<f64> {
        self.sigma.view((0, 0), (n_x, n_x)).clone_owned()
    }

    /// Largest eigenvalue, i.e. `‖Σ_t‖`.
    pub fn norm(&self) -> f64 {
        eigen_extremes(&self.sigma).1
    }
}

/// Builds `G_t = [A^{t-1}B … B]` and `F_t = [A^{t-1} … I]`.
///
/// `t = 0` yields `n_x × 0` blocks.
pub fn impulse_blocks(a: &DMatrix<f64>, b: &DMatrix<f64>, t: usize) -> Result<ImpulseBlocks> {
    if !a.is_square() {
        return Err(SysIdError::shape(
            "impulse_blocks A",
            (a.nrows(), a.nrows()),
            a.shape(),
        ));
    }
    if b.nrows() != a.nrows() {
        return Err(SysIdError::shape(
            "impulse_blocks B",
            (a.nrows(), b.ncols()),
            b.shape(),
        ));
    }
    let (n_x, n_u) = (a.nrows(), b.ncols());
    let mut g = DMatrix::zeros(n_x, t * n_u);
    let mut f = DMatrix::zeros(n_x, t * n_x);

    // Fill from the right: block t-1 holds A^0, block t-2 holds A^1, ...
    let mut power = DMatrix::<f64>::identity(n_x, n_x);
    for k in (0..t).rev() {
        f.view_mut((0, k * n_x), (n_x, n_x)).copy_from(&power);
        g.view_mut((0, k * n_u), (n_x, n_u))
            .copy_from(&(&power * b));
        power = a * &power;
    }
    Ok(ImpulseBlocks { g, f, t })
}

/// `Σ_t` for system `spec` evolving under `truth`. Requires `t ≤ spec.horizon`.
pub fn state_input_covariance(
    spec: &SystemSpec,
    truth: &ClusterGroundTruth,
    t: usize,
) -> Result<StateInputCovariance> {
    spec.validate()?;
    if t > spec.horizon {
        return Err(SysIdError::Config(format!(
            "covariance requested at t = {t} beyond horizon {}",
            spec.horizon
        )));
    }
    let (a, b) = (truth.a(), truth.b());
    let (n_x, n_u) = (truth.n_x(), truth.n_u());
    let blocks = impulse_blocks(a, b, t)?;

    let mut a_pow = DMatrix::<f64>::identity(n_x, n_x);
    for _ in 0..t {
        a_pow = a * &a_pow;
    }
    let (sx2, su2, sw2) = (
        spec.sigma_x * spec.sigma_x,
        spec.sigma_u * spec.sigma_u,
        spec.sigma_w * spec.sigma_w,
    );
    let state = &blocks.g * blocks.g.transpose() * su2
        + &blocks.f * blocks.f.transpose() * sw2
        + &a_pow * a_pow.transpose() * sx2;
    let input = DMatrix::<f64>::identity(n_u, n_u) * su2;
    Ok(StateInputCovariance {
        sigma: block_diag(&state, &input),
        t,
    })
}

/// `N_i Σ_{t=0}^{T-1} Σ_t^{(i)}`: the expected `Z Zᵀ` of one system.
pub fn moment_sum(spec: &SystemSpec, truth: &ClusterGroundTruth) -> Result<DMatrix<f64>> {
    let n = truth.n_x() + truth.n_u();
    let mut acc = DMatrix::zeros(n, n);
    for t in 0..spec.horizon {
        acc += state_input_covariance(spec, truth, t)?.sigma;
    }
    Ok(acc * spec.num_rollouts as f64)
}

/// `|C| / λ_min(Σ_{i∈C} S_i)` for per-member moment sums `S_i`.
pub fn step_size_from_moment_sums<'a, I>(sums: I) -> Result<f64>
where
    I: IntoIterator<Item = &'a DMatrix<f64>>,
{
    let mut count = 0usize;
    let mut total: Option<DMatrix<f64>> = None;
    for s in sums {
        count += 1;
        total = Some(match total {
            None => s.clone(),
            Some(acc) => acc + s,
        });
    }
    let total = total
        .ok_or_else(|| SysIdError::Degenerate("step size requested for an empty cluster".into()))?;
    let (lmin, lmax) = eigen_extremes(&total);
    if !(lmin > SINGULAR_RTOL * lmax) || lmax <= 0.0 {
        return Err(SysIdError::Degenerate(format!(
            "moment sum is singular (λ_min = {lmin:e}, λ_max = {lmax:e})"
        )));
    }
    Ok(count as f64 / lmin)
}

/// Step size `η = |C| / λ_min(Σ_{i∈C} N_i Σ_t Σ_t^{(i)})` over the given
/// members. Each member's moments use `truths[member.cluster_id]`, so the list
/// may be a true cluster or an estimated one.
pub fn theoretical_step_size(members: &[SystemSpec], truths: &[ClusterGroundTruth]) -> Result<f64> {
    let sums = members
        .iter()
        .map(|m| {
            let truth = truths.get(m.cluster_id).ok_or_else(|| {
                SysIdError::Config(format!(
                    "system {} references unknown cluster {}",
                    m.system_id, m.cluster_id
                ))
            })?;
            moment_sum(m, truth)
        })
        .collect::<Result<Vec<_>>>()?;
    step_size_from_moment_sums(&sums)
}
