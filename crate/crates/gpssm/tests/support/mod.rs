//! Shared oracles for the linear-Gaussian reference system.
//!
//! The reference is a one-dimensional random walk with an intermediate
//! transition value carrying its own noise:
//!
//! ```text
//! f_t = x_{t-1} + e_t,   e_t ~ N(0, sigma_f^2)
//! x_t = f_t + w_t,       w_t ~ N(0, q)
//! y_t = x_t + v_t,       v_t ~ N(0, r)
//! ```
//!
//! A GP state-space model with identity prior mean, signal variance
//! sigma_f^2, a lengthscale far below the state spacing and the inducing
//! distribution left at its prior realizes exactly this process, so
//! closed-form Kalman quantities can grade the Monte-Carlo estimators.

use gpssm::kernels::{AugmentedInput, KernelFamily, KernelSpec};
use gpssm::model::{GpssmModel, InducingSet, Trajectory};
use gpssm::numerics::{GaussianDist, Matrix, Vector, LN_2PI};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[derive(Clone, Copy, Debug)]
pub struct LinearSsm {
    pub sigma_f2: f64,
    pub q: f64,
    pub r: f64,
    pub mu0: f64,
    pub p0: f64,
    pub steps: usize,
}

impl LinearSsm {
    /// Effective process noise of the collapsed transition.
    fn q_eff(&self) -> f64 {
        self.sigma_f2 + self.q
    }

    /// Draws observations (and the controls, all zero) from the true model.
    pub fn simulate(&self, seed: u64) -> Trajectory {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = self.mu0 + self.p0.sqrt() * rng.sample::<f64, _>(StandardNormal);
        let mut observations = Vec::with_capacity(self.steps);
        let mut controls = Vec::with_capacity(self.steps);
        for _ in 0..self.steps {
            let f = x + self.sigma_f2.sqrt() * rng.sample::<f64, _>(StandardNormal);
            x = f + self.q.sqrt() * rng.sample::<f64, _>(StandardNormal);
            let y = x + self.r.sqrt() * rng.sample::<f64, _>(StandardNormal);
            observations.push(Vector::new(vec![y]));
            controls.push(Vector::new(vec![0.0]));
        }
        Trajectory::new(observations, controls).unwrap()
    }

    /// Exact log marginal likelihood via the Kalman predictive recursion.
    pub fn log_marginal(&self, traj: &Trajectory) -> f64 {
        let mut mean = self.mu0;
        let mut var = self.p0;
        let mut logp = 0.0;
        for y in &traj.observations {
            let pred_var = var + self.q_eff();
            let innov_var = pred_var + self.r;
            let innov = y[0] - mean;
            logp += -0.5 * (innov * innov / innov_var + innov_var.ln() + LN_2PI);
            let gain = pred_var / innov_var;
            mean += gain * innov;
            var = pred_var * (1.0 - gain);
        }
        logp
    }

    /// Joint covariance of (y_{1:t}, f_{1:t}) by expressing every variable
    /// as a linear combination of the independent basis noises
    /// [x0, e_1..e_t, w_1..w_t, v_1..v_t].
    fn joint(&self) -> (Matrix<f64>, usize) {
        let t = self.steps;
        let basis = 1 + 3 * t;
        let variances: Vec<f64> = std::iter::once(self.p0)
            .chain(std::iter::repeat(self.sigma_f2).take(t))
            .chain(std::iter::repeat(self.q).take(t))
            .chain(std::iter::repeat(self.r).take(t))
            .collect();
        // Coefficient rows for x_0..x_t built by the recursion.
        let mut x_rows: Vec<Vec<f64>> = vec![vec![0.0; basis]];
        x_rows[0][0] = 1.0;
        let mut f_rows: Vec<Vec<f64>> = Vec::with_capacity(t);
        for i in 1..=t {
            let mut f_row = x_rows[i - 1].clone();
            f_row[i] += 1.0; // e_i
            let mut x_row = f_row.clone();
            x_row[t + i] += 1.0; // w_i
            f_rows.push(f_row);
            x_rows.push(x_row);
        }
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(2 * t);
        for i in 1..=t {
            let mut y_row = x_rows[i].clone();
            y_row[2 * t + i] += 1.0; // v_i
            rows.push(y_row);
        }
        rows.extend(f_rows);
        let dim = rows.len();
        let mut sigma = Matrix::zeros(dim, dim);
        for a in 0..dim {
            for b in 0..dim {
                let mut acc = 0.0;
                for k in 0..basis {
                    acc += rows[a][k] * rows[b][k] * variances[k];
                }
                sigma[(a, b)] = acc;
            }
        }
        (sigma, t)
    }

    fn logdet_block(sigma: &Matrix<f64>, rows: std::ops::Range<usize>) -> f64 {
        let n = rows.len();
        let start = rows.start;
        let block = Matrix::from_fn(n, n, |i, j| sigma[(start + i, start + j)]);
        block.cholesky().unwrap().chol_logdet()
    }

    /// The exact mutual information between y_{1:t} and f_{1:t} under the
    /// joint Gaussian.
    pub fn true_mi(&self) -> f64 {
        let (sigma, t) = self.joint();
        let ld_y = Self::logdet_block(&sigma, 0..t);
        let ld_f = Self::logdet_block(&sigma, t..2 * t);
        let ld_joint = sigma.cholesky().unwrap().chol_logdet();
        0.5 * (ld_y + ld_f - ld_joint)
    }

    /// Entropy of y_{1:t}.
    pub fn observation_entropy(&self) -> f64 {
        let (sigma, t) = self.joint();
        0.5 * (Self::logdet_block(&sigma, 0..t) + t as f64 * (LN_2PI + 1.0))
    }

    /// Expectation of the factorized conditional score
    /// `sum_i log N(y_i | f_i, r + q)` under the true joint: each residual
    /// y_i - f_i = w_i + v_i has variance exactly r + q.
    pub fn factorized_conditional_entropy(&self) -> f64 {
        let v = self.r + self.q;
        self.steps as f64 * 0.5 * ((LN_2PI + v.ln()) + 1.0)
    }

    /// Population value targeted by the sample-based estimator:
    /// h(y) minus the factorized conditional entropy.
    pub fn factorized_mi(&self) -> f64 {
        self.observation_entropy() - self.factorized_conditional_entropy()
    }

    /// Realized counterpart for one observed trajectory:
    /// `E_{f|y}[ sum_i log N(y_i | f_i, r+q) ] - log p(y)`, both terms from
    /// the joint Gaussian.
    pub fn realized_factorized_mi(&self, traj: &Trajectory) -> f64 {
        let (sigma, t) = self.joint();
        // Condition f on y: mean = S_fy S_yy^{-1} y, cov = S_ff - S_fy S_yy^{-1} S_yf.
        let syy = Matrix::from_fn(t, t, |i, j| sigma[(i, j)]);
        let sfy = Matrix::from_fn(t, t, |i, j| sigma[(t + i, j)]);
        let sff = Matrix::from_fn(t, t, |i, j| sigma[(t + i, t + j)]);
        let chol_yy = syy.cholesky().unwrap();
        let y = Vector::from_fn(t, |i| traj.observations[i][0] - self.mu0);
        let w = chol_yy.chol_solve(&y);
        let f_mean = Vector::from_fn(t, |i| self.mu0 + sfy.row(i).dot(&w));
        // Diagonal of the conditional covariance.
        let mut f_var = Vector::zeros(t);
        for i in 0..t {
            let row = sfy.row(i);
            let solved = chol_yy.chol_solve(&row);
            f_var[i] = sff[(i, i)] - row.dot(&solved);
        }
        let v = self.r + self.q;
        let mut conditional_score = 0.0;
        for i in 0..t {
            let resid = traj.observations[i][0] - f_mean[i];
            conditional_score += -0.5 * ((resid * resid + f_var[i]) / v + v.ln() + LN_2PI);
        }
        conditional_score - self.log_marginal(traj)
    }

    /// The GPSSM whose generative law coincides with this linear system:
    /// identity prior mean, signal variance sigma_f^2, lengthscales far
    /// below the state spacing (so transition values at distinct inputs are
    /// independent), inducing distribution at its prior.
    pub fn gpssm(&self, num_inducing: usize, seed: u64) -> GpssmModel<f64> {
        let sigma2 = self.sigma_f2.max(1e-12);
        let kernel = KernelSpec::isotropic(KernelFamily::SquaredExponential, sigma2, 1e-3, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let locations: Vec<AugmentedInput<f64>> = (0..num_inducing)
            .map(|_| {
                AugmentedInput::from_concat(
                    Vector::new(vec![rng.gen_range(-3.0..3.0), rng.gen_range(0.0..1.0)]),
                    1,
                )
            })
            .collect();
        let kzz = gpssm::kernels::gram(&kernel, &locations, &locations).unwrap();
        let mean = vec![Vector::from_fn(num_inducing, |i| locations[i].full()[0])];
        let cov_chol = vec![kzz.cholesky().unwrap()];
        GpssmModel {
            d_x: 1,
            d_y: 1,
            d_c: 1,
            kernels: vec![kernel],
            emission: Matrix::identity(1),
            offset: Vector::zeros(1),
            process_noise: Vector::new(vec![self.q]),
            obs_noise: Vector::new(vec![self.r]),
            x0_prior: GaussianDist::isotropic(Vector::new(vec![self.mu0]), self.p0),
            x0_q_mean: Vector::new(vec![self.mu0]),
            x0_q_std: Vector::new(vec![self.p0.sqrt()]),
            inducing: InducingSet { locations, mean, cov_chol },
        }
    }
}
