//! Mutual information between the next observation and the next transition
//! value, via a moment-matched Gaussian recursion through the GP.
//!
//! The transition value at an uncertain input x ~ N(u, S) is approximated
//! by a Gaussian whose exact first two moments come from the kernel
//! expectations l, l_i, l_ij (closed form for squared-exponential kernels,
//! quadrature otherwise). The recursion pushes the belief through every
//! recorded control and one candidate; the information value is then a
//! log-determinant ratio of observation covariances.

use crate::error::Result;

use crate::kernels::kernel_expectations;
use crate::model::{predictive_obs_cov, GpssmModel, SparsePosterior};
use crate::numerics::{Matrix, Vector};

/// Default Gauss-Hermite nodes per uncertain dimension.
pub const DEFAULT_QUADRATURE_NODES: usize = 24;

/// The propagated Gaussian over the transition value: N(f_t | M_t, V_t)
/// with V_t diagonal across the independent latent-dimension GPs.
#[derive(Clone, Debug)]
pub struct MomentBelief {
    pub step: usize,
    pub mean: Vector<f64>,
    pub var: Vector<f64>,
}

/// Solved posterior plus the integration settings, reused across recursion
/// steps of one model state.
pub struct MomentPropagator<'m> {
    model: &'m GpssmModel<f64>,
    posterior: SparsePosterior<f64>,
    nodes: usize,
}

impl<'m> MomentPropagator<'m> {
    pub fn new(model: &'m GpssmModel<f64>, nodes: usize) -> Result<Self> {
        assert!(nodes >= 16);
        Ok(MomentPropagator { model, posterior: SparsePosterior::build(model)?, nodes })
    }

    /// Belief over f_1 under the known initial-state prior and the first
    /// recorded control.
    pub fn init_belief(&self, c0: &Vector<f64>) -> Result<MomentBelief> {
        let mean = self.model.x0_prior.mean.clone();
        let cov = self.model.x0_prior.cov.clone();
        let (m, v) = self.moments_through_gp(&mean, &cov, c0)?;
        Ok(MomentBelief { step: 1, mean: m, var: v })
    }

    /// One recursion step: the state enters as N(M_{t-1}, V_{t-1} + Q), the
    /// next control deterministically.
    pub fn propagate(&self, belief: &MomentBelief, c_next: &Vector<f64>) -> Result<MomentBelief> {
        let d_x = self.model.d_x;
        let state_cov = Matrix::from_fn(d_x, d_x, |i, j| {
            if i == j {
                belief.var[i] + self.model.process_noise[i]
            } else {
                0.0
            }
        });
        let (m, v) = self.moments_through_gp(&belief.mean, &state_cov, c_next)?;
        Ok(MomentBelief { step: belief.step + 1, mean: m, var: v })
    }

    /// Exact first two moments of the GP posterior pushed through an input
    /// whose state part is N(state_mean, state_cov) and whose control part
    /// is fixed.
    fn moments_through_gp(
        &self,
        state_mean: &Vector<f64>,
        state_cov: &Matrix<f64>,
        control: &Vector<f64>,
    ) -> Result<(Vector<f64>, Vector<f64>)> {
        let model = self.model;
        let d_x = model.d_x;
        let d_in = model.input_dim();
        let u = state_mean.concat(control);
        let cov = Matrix::from_fn(d_in, d_in, |i, j| {
            if i < d_x && j < d_x {
                state_cov[(i, j)]
            } else {
                0.0
            }
        });
        let z = &model.inducing.locations;
        let mut mean_out = Vector::zeros(d_x);
        let mut var_out = Vector::zeros(d_x);
        for dim in 0..d_x {
            let (kernel, _, beta, correction) = self.posterior.dim_parts(dim);
            let e = kernel_expectations(kernel, &u, &cov, z, self.nodes)?;
            // Posterior mean is m(x) + k(x, Z) beta with m the identity on
            // the state part, so the integrated mean gains u[dim].
            let weighted = beta.dot(&e.l_vec);
            let mean = u[dim] + weighted;
            // E[sigma^2(x)] = l - sum_ab correction_ab l_ab.
            let mut expected_var = e.l;
            for a in 0..z.len() {
                for b in 0..z.len() {
                    expected_var = expected_var - correction[(a, b)] * e.l_mat[(a, b)];
                }
            }
            // E[mu(x)^2] = E[x_dim^2] + 2 sum_a beta_a E[x_dim k_a] + beta^T l_mat beta.
            let mut cross = 0.0;
            for a in 0..z.len() {
                cross += beta[a] * e.xk_vec[a][dim];
            }
            let second_moment =
                u[dim] * u[dim] + cov[(dim, dim)] + 2.0 * cross + e.l_mat.quad_form(beta, beta);
            let var = expected_var + second_moment - mean * mean;
            mean_out[dim] = mean;
            var_out[dim] = var.max(0.0);
        }
        Ok((mean_out, var_out))
    }
}

/// Belief over f_1 with default integration settings.
pub fn init_belief(model: &GpssmModel<f64>, c0: &Vector<f64>) -> Result<MomentBelief> {
    MomentPropagator::new(model, DEFAULT_QUADRATURE_NODES)?.init_belief(c0)
}

/// One recursion step with default integration settings.
pub fn propagate(
    model: &GpssmModel<f64>,
    belief: &MomentBelief,
    c_next: &Vector<f64>,
) -> Result<MomentBelief> {
    MomentPropagator::new(model, DEFAULT_QUADRATURE_NODES)?.propagate(belief, c_next)
}

/// `0.5 log [ det(R + C (V_t + Q) C^T) / det(R + C Q C^T) ]`.
pub fn latest_mi(model: &GpssmModel<f64>, belief: &MomentBelief) -> Result<f64> {
    let c = &model.emission;
    let d_y = model.d_y;
    let mut numerator = predictive_obs_cov(model);
    for i in 0..d_y {
        for j in 0..d_y {
            let mut acc = 0.0;
            for k in 0..model.d_x {
                acc += c[(i, k)] * belief.var[k] * c[(j, k)];
            }
            numerator[(i, j)] += acc;
        }
    }
    let denominator = predictive_obs_cov(model);
    let num_logdet = numerator.cholesky()?.chol_logdet();
    let den_logdet = denominator.cholesky()?.chol_logdet();
    Ok(0.5 * (num_logdet - den_logdet))
}

/// Full recursion through the recorded controls and one candidate, then the
/// log-determinant ratio. This is the per-candidate score of the latest-MI
/// strategy; each evaluation is independent and parallelizable.
pub fn latest_mi_for_candidate(
    propagator: &MomentPropagator<'_>,
    model: &GpssmModel<f64>,
    controls: &[Vector<f64>],
    candidate: &Vector<f64>,
) -> Result<f64> {
    let mut belief = match controls.first() {
        Some(c0) => propagator.init_belief(c0)?,
        None => propagator.init_belief(candidate)?,
    };
    for c in controls.iter().skip(1) {
        belief = propagator.propagate(&belief, c)?;
    }
    if !controls.is_empty() {
        belief = propagator.propagate(&belief, candidate)?;
    }
    latest_mi(model, &belief)
}
