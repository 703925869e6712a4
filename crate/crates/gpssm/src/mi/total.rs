//! Mutual information between all observations (plus the predicted next
//! one) and all transition values, from per-sample lower-bound estimates.
//!
//! Each sample draws one state path from the variational chain and one
//! transition value per step; the bound is the exact conditional
//! log-likelihood of the observations given those transition values minus
//! the same-sample single-path ELBO on the sequence extended by the
//! candidate step. The extension reuses the path draws, so the score over
//! a candidate grid shares every prefix computation; this reuse of the
//! inference machinery is what makes this criterion cheap per candidate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::elbo::{initial_and_inducing_kl, logpdf_diag, transition_kl_const};
use crate::error::Result;
use crate::kernels::AugmentedInput;
use crate::model::{GpssmModel, SparsePosterior, Trajectory, VariationalChain};
use crate::numerics::gaussian::logpdf_with_chol;
use crate::numerics::{Matrix, Vector};
use crate::seeds::{self, tags};

/// Sample-mean estimate of the total mutual information.
#[derive(Clone, Debug)]
pub struct TotalMiEstimate {
    /// Mean of the per-sample bounds (exactly).
    pub value: f64,
    pub per_sample: Vec<f64>,
    pub samples: usize,
    pub seed: u64,
}

/// Candidate-independent pieces of one `(model, chain, trajectory)` state.
struct SharedTerms {
    /// Cholesky factor of `R + C Q C^T`.
    pred_cov_chol: Matrix<f64>,
    kl_const: f64,
    /// KL[q(x0) || p(x0)] + KL[q(u) || p(u)].
    variational_kl: f64,
}

impl SharedTerms {
    fn build(
        model: &GpssmModel<f64>,
        posterior: &SparsePosterior<f64>,
        chain: &VariationalChain<f64>,
    ) -> Result<Self> {
        let pred_cov_chol = crate::model::predictive_obs_cov(model).cholesky()?;
        let (x0_kl, inducing_kl) = initial_and_inducing_kl(model, posterior)?;
        Ok(SharedTerms {
            pred_cov_chol,
            kl_const: transition_kl_const(model, chain),
            variational_kl: x0_kl + inducing_kl,
        })
    }
}

/// One sampled path with its candidate-independent partial sums and the
/// noise reserved for the candidate extension.
struct PathSample {
    last_state: Vector<f64>,
    /// sum_t log N(y_t | C f_{t+1} + d, R + C Q C^T).
    prefix_numerator: f64,
    /// sum_t log N(y_t | C x_{t+1} + d, R).
    prefix_loglik: f64,
    /// sum_t KL[q(x_{t+1} | x_t) || p(x_{t+1} | f_{t+1})].
    prefix_transition_kl: f64,
    eps_f_ext: Vector<f64>,
    eps_x_ext: Vector<f64>,
}

fn draw_path(
    model: &GpssmModel<f64>,
    posterior: &SparsePosterior<f64>,
    chain: &VariationalChain<f64>,
    traj: &Trajectory,
    shared: &SharedTerms,
    seed: u64,
) -> Result<PathSample> {
    let d_x = model.d_x;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = |n: usize| Vector::<f64>::from_fn(n, |_| rng.sample::<f64, _>(StandardNormal));

    let x0_chol = chain.x0.cov.cholesky()?;
    let mut x = chain.x0.mean.add(&x0_chol.matvec(&normal(d_x)));
    let mut prefix_numerator = 0.0;
    let mut prefix_loglik = 0.0;
    let mut prefix_transition_kl = 0.0;
    for t in 0..traj.len() {
        let input = AugmentedInput::new(&x, &traj.controls[t]);
        let eps_f = normal(d_x);
        let mut f = Vector::zeros(d_x);
        for dim in 0..d_x {
            let (mean, var) = posterior.predict_dim_at(dim, &input, &model.inducing.locations);
            f[dim] = mean + var.max(0.0).sqrt() * eps_f[dim];
        }
        let y_from_f = model.emission.matvec(&f).add(&model.offset);
        prefix_numerator += logpdf_with_chol(&traj.observations[t], &y_from_f, &shared.pred_cov_chol);

        let chain_mean = chain.transition.matvec(&x).add(&chain.offsets[t]);
        let x_next = chain_mean.add(&chain.noise_chol.matvec(&normal(d_x)));
        let mut maha = 0.0;
        for i in 0..d_x {
            let d = chain_mean[i] - f[i];
            maha += d * d / model.process_noise[i];
        }
        prefix_transition_kl += shared.kl_const + 0.5 * maha;
        let y_mean = model.emission.matvec(&x_next).add(&model.offset);
        prefix_loglik += logpdf_diag(&traj.observations[t], &y_mean, &model.obs_noise);
        x = x_next;
    }
    let eps_f_ext = normal(d_x);
    let eps_x_ext = normal(d_x);
    Ok(PathSample {
        last_state: x,
        prefix_numerator,
        prefix_loglik,
        prefix_transition_kl,
        eps_f_ext,
        eps_x_ext,
    })
}

/// Extends one path by the candidate step and evaluates the bound.
fn extend_and_bound(
    model: &GpssmModel<f64>,
    posterior: &SparsePosterior<f64>,
    chain: &VariationalChain<f64>,
    shared: &SharedTerms,
    path: &PathSample,
    candidate: &Vector<f64>,
) -> f64 {
    let d_x = model.d_x;
    let input = AugmentedInput::new(&path.last_state, candidate);
    let mut f_ext = Vector::zeros(d_x);
    for dim in 0..d_x {
        let (mean, var) = posterior.predict_dim_at(dim, &input, &model.inducing.locations);
        f_ext[dim] = mean + var.max(0.0).sqrt() * path.eps_f_ext[dim];
    }
    // The predicted observation is the predictive mean given the sampled f.
    let y_hat = model.emission.matvec(&f_ext).add(&model.offset);
    let num_ext = logpdf_with_chol(&y_hat, &y_hat, &shared.pred_cov_chol);

    // Chain offset for the predicted step: b = S C^T R^{-1} (y_hat - d).
    let resid = Vector::from_fn(model.d_y, |r| (y_hat[r] - model.offset[r]) / model.obs_noise[r]);
    let ct_resid = Vector::from_fn(d_x, |i| {
        let mut acc = 0.0;
        for r in 0..model.d_y {
            acc += model.emission[(r, i)] * resid[r];
        }
        acc
    });
    let b_ext = chain.noise.matvec(&ct_resid);
    let chain_mean = chain.transition.matvec(&path.last_state).add(&b_ext);
    let x_ext = chain_mean.add(&chain.noise_chol.matvec(&path.eps_x_ext));

    let mut maha = 0.0;
    for i in 0..d_x {
        let d = chain_mean[i] - f_ext[i];
        maha += d * d / model.process_noise[i];
    }
    let kl_ext = shared.kl_const + 0.5 * maha;
    let y_mean = model.emission.matvec(&x_ext).add(&model.offset);
    let loglik_ext = logpdf_diag(&y_hat.to_f64(), &y_mean, &model.obs_noise);

    let numerator = path.prefix_numerator + num_ext;
    let elbo_sample = (path.prefix_loglik + loglik_ext)
        - (path.prefix_transition_kl + kl_ext)
        - shared.variational_kl;
    numerator - elbo_sample
}

/// The s-th sample bound i_s; reproducible given `seed_s`, and identical
/// to the corresponding term inside [`total_mi`] when given its derived
/// per-sample seed.
pub fn per_sample_bound(
    model: &GpssmModel<f64>,
    chain: &VariationalChain<f64>,
    traj: &Trajectory,
    candidate: &Vector<f64>,
    seed_s: u64,
) -> Result<f64> {
    let posterior = SparsePosterior::build(model)?;
    let shared = SharedTerms::build(model, &posterior, chain)?;
    let path = draw_path(model, &posterior, chain, traj, &shared, seed_s)?;
    Ok(extend_and_bound(model, &posterior, chain, &shared, &path, candidate))
}

/// Paths drawn once per `(model, chain, trajectory, seed)`, scoring any
/// number of candidates against the shared draws.
pub struct TotalMiScorer<'m> {
    model: &'m GpssmModel<f64>,
    posterior: SparsePosterior<f64>,
    chain: &'m VariationalChain<f64>,
    shared: SharedTerms,
    paths: Vec<PathSample>,
    seed: u64,
}

impl<'m> TotalMiScorer<'m> {
    pub fn new(
        model: &'m GpssmModel<f64>,
        chain: &'m VariationalChain<f64>,
        traj: &Trajectory,
        samples: usize,
        seed: u64,
    ) -> Result<Self> {
        assert!(samples >= 1);
        let posterior = SparsePosterior::build(model)?;
        let shared = SharedTerms::build(model, &posterior, chain)?;
        let paths = (0..samples)
            .map(|s| {
                let seed_s = seeds::derive_indexed(seed, tags::MI_SAMPLE, s as u64);
                draw_path(model, &posterior, chain, traj, &shared, seed_s)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TotalMiScorer { model, posterior, chain, shared, paths, seed })
    }

    pub fn score(&self, candidate: &Vector<f64>) -> TotalMiEstimate {
        let per_sample: Vec<f64> = self
            .paths
            .iter()
            .map(|p| extend_and_bound(self.model, &self.posterior, self.chain, &self.shared, p, candidate))
            .collect();
        let value = per_sample.iter().sum::<f64>() / per_sample.len() as f64;
        TotalMiEstimate { value, samples: per_sample.len(), per_sample, seed: self.seed }
    }
}

/// Mean of `samples` per-sample bounds with derived seeds; deterministic
/// given `seed` and independent of the candidate's effect on the draws.
pub fn total_mi(
    model: &GpssmModel<f64>,
    chain: &VariationalChain<f64>,
    traj: &Trajectory,
    candidate: &Vector<f64>,
    samples: usize,
    seed: u64,
) -> Result<TotalMiEstimate> {
    Ok(TotalMiScorer::new(model, chain, traj, samples, seed)?.score(candidate))
}
