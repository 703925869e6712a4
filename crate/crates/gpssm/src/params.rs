//! Flat parameter vector <-> model conversion for the trainer.
//!
//! Positive quantities (signal variance, lengthscales, noise diagonals,
//! q(x0) scales, the diagonal of the inducing Cholesky factor) are carried
//! in log space so gradient steps cannot leave the feasible set; the
//! inducing covariance stays SPD by construction of its factor.

use crate::grad::Scalar;
use crate::kernels::{AugmentedInput, KernelSpec};
use crate::model::{GpssmModel, InducingSet};
use crate::numerics::{Matrix, Vector};

/// Which parameter groups the trainer may move.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamMask {
    pub kernel: bool,
    pub inducing_locations: bool,
    pub inducing_distribution: bool,
    pub process_noise: bool,
    pub obs_noise: bool,
    pub initial_state: bool,
}

impl ParamMask {
    pub fn all() -> Self {
        ParamMask {
            kernel: true,
            inducing_locations: true,
            inducing_distribution: true,
            process_noise: true,
            obs_noise: true,
            initial_state: true,
        }
    }

    pub fn frozen() -> Self {
        ParamMask {
            kernel: false,
            inducing_locations: false,
            inducing_distribution: false,
            process_noise: false,
            obs_noise: false,
            initial_state: false,
        }
    }

    /// Only the variational pieces; the generative model stays put.
    pub fn variational_only() -> Self {
        ParamMask { inducing_distribution: true, initial_state: true, ..ParamMask::frozen() }
    }
}

#[derive(Clone, Copy, Debug)]
enum Group {
    Kernel,
    InducingLocations,
    InducingDistribution,
    ProcessNoise,
    ObsNoise,
    InitialState,
}

/// Index map of the flat parameter vector for one model shape.
#[derive(Clone, Debug)]
pub struct ParamLayout {
    d_x: usize,
    d_y: usize,
    d_in: usize,
    m: usize,
    groups: Vec<Group>, // one entry per scalar parameter
}

impl ParamLayout {
    pub fn of(model: &GpssmModel<f64>) -> Self {
        let d_x = model.d_x;
        let d_in = model.input_dim();
        let m = model.inducing.size();
        let mut groups = Vec::new();
        for _ in 0..d_x {
            groups.extend(std::iter::repeat(Group::Kernel).take(1 + d_in));
            groups.extend(std::iter::repeat(Group::InducingDistribution).take(m + m * (m + 1) / 2));
        }
        groups.extend(std::iter::repeat(Group::InducingLocations).take(m * d_in));
        groups.extend(std::iter::repeat(Group::ProcessNoise).take(d_x));
        groups.extend(std::iter::repeat(Group::ObsNoise).take(model.d_y));
        groups.extend(std::iter::repeat(Group::InitialState).take(2 * d_x));
        ParamLayout { d_x, d_y: model.d_y, d_in, m, groups }
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    /// True at every index the mask allows the optimizer to move.
    pub fn trainable(&self, mask: &ParamMask) -> Vec<bool> {
        self.groups
            .iter()
            .map(|g| match g {
                Group::Kernel => mask.kernel,
                Group::InducingLocations => mask.inducing_locations,
                Group::InducingDistribution => mask.inducing_distribution,
                Group::ProcessNoise => mask.process_noise,
                Group::ObsNoise => mask.obs_noise,
                Group::InitialState => mask.initial_state,
            })
            .collect()
    }

    /// Flattens a model into the parameter vector.
    pub fn pack(&self, model: &GpssmModel<f64>) -> Vec<f64> {
        let mut theta = Vec::with_capacity(self.len());
        for dim in 0..self.d_x {
            let k = &model.kernels[dim];
            theta.push(k.signal_variance.ln());
            for i in 0..self.d_in {
                theta.push(k.lengthscales[i].ln());
            }
            for i in 0..self.m {
                theta.push(model.inducing.mean[dim][i]);
            }
            let l = &model.inducing.cov_chol[dim];
            for i in 0..self.m {
                for j in 0..=i {
                    if i == j {
                        theta.push(l[(i, j)].ln());
                    } else {
                        theta.push(l[(i, j)]);
                    }
                }
            }
        }
        for z in &model.inducing.locations {
            for i in 0..self.d_in {
                theta.push(z.full()[i]);
            }
        }
        for i in 0..self.d_x {
            theta.push(model.process_noise[i].ln());
        }
        for i in 0..self.d_y {
            theta.push(model.obs_noise[i].ln());
        }
        for i in 0..self.d_x {
            theta.push(model.x0_q_mean[i]);
        }
        for i in 0..self.d_x {
            theta.push(model.x0_q_std[i].ln());
        }
        debug_assert_eq!(theta.len(), self.len());
        theta
    }

    /// Rebuilds a model from the parameter vector; fixed structure (dims,
    /// kernel family, emission map, x0 prior) comes from the template.
    pub fn unpack<S: Scalar>(&self, theta: &[S], template: &GpssmModel<f64>) -> GpssmModel<S> {
        assert_eq!(theta.len(), self.len());
        let mut pos = 0usize;
        let mut take = || {
            let v = theta[pos];
            pos += 1;
            v
        };
        let mut kernels = Vec::with_capacity(self.d_x);
        let mut mean = Vec::with_capacity(self.d_x);
        let mut cov_chol = Vec::with_capacity(self.d_x);
        for dim in 0..self.d_x {
            let sigma2 = take().exp();
            let lengthscales = Vector::from_fn(self.d_in, |_| take().exp());
            kernels.push(KernelSpec::new(template.kernels[dim].family, sigma2, lengthscales));
            mean.push(Vector::from_fn(self.m, |_| take()));
            let mut l = Matrix::zeros(self.m, self.m);
            for i in 0..self.m {
                for j in 0..=i {
                    l[(i, j)] = if i == j { take().exp() } else { take() };
                }
            }
            cov_chol.push(l);
        }
        let locations = (0..self.m)
            .map(|_| AugmentedInput::from_concat(Vector::from_fn(self.d_in, |_| take()), self.d_x))
            .collect();
        let process_noise = Vector::from_fn(self.d_x, |_| take().exp());
        let obs_noise = Vector::from_fn(self.d_y, |_| take().exp());
        let x0_q_mean = Vector::from_fn(self.d_x, |_| take());
        let x0_q_std = Vector::from_fn(self.d_x, |_| take().exp());
        debug_assert_eq!(pos, self.len());
        GpssmModel {
            d_x: template.d_x,
            d_y: template.d_y,
            d_c: template.d_c,
            kernels,
            emission: Matrix::from_fn(template.d_y, template.d_x, |i, j| {
                S::from_f64(template.emission[(i, j)])
            }),
            offset: Vector::from_f64_slice(template.offset.as_slice()),
            process_noise,
            obs_noise,
            x0_prior: crate::numerics::GaussianDist {
                mean: Vector::from_f64_slice(template.x0_prior.mean.as_slice()),
                cov: Matrix::from_fn(template.d_x, template.d_x, |i, j| {
                    S::from_f64(template.x0_prior.cov[(i, j)])
                }),
            },
            x0_q_mean,
            x0_q_std,
            inducing: InducingSet { locations, mean, cov_chol },
        }
    }

    /// As [`unpack`](Self::unpack) for `f64`, but bit-copies every group
    /// the mask froze so an untouched group survives round trips exactly.
    pub fn unpack_masked(
        &self,
        theta: &[f64],
        template: &GpssmModel<f64>,
        mask: &ParamMask,
    ) -> GpssmModel<f64> {
        let mut model = self.unpack::<f64>(theta, template);
        if !mask.kernel {
            model.kernels = template.kernels.clone();
        }
        if !mask.inducing_locations {
            model.inducing.locations = template.inducing.locations.clone();
        }
        if !mask.inducing_distribution {
            model.inducing.mean = template.inducing.mean.clone();
            model.inducing.cov_chol = template.inducing.cov_chol.clone();
        }
        if !mask.process_noise {
            model.process_noise = template.process_noise.clone();
        }
        if !mask.obs_noise {
            model.obs_noise = template.obs_noise.clone();
        }
        if !mask.initial_state {
            model.x0_q_mean = template.x0_q_mean.clone();
            model.x0_q_std = template.x0_q_std.clone();
        }
        model
    }
}
