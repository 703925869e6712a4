//! Monte-Carlo evidence lower bound and its gradient-ascent maximization.
//!
//! The bound has four terms:
//!
//! ```text
//! L_T =   E_q[ sum_t log p(y_t | x_t) ]                   (expected log-lik)
//!       - sum_t E_q[ KL[q(x_t | x_{t-1}) || p(x_t | f_t)] ] (transition KL)
//!       - KL[q(x_0) || p(x_0)]                              (initial state)
//!       - sum_dims KL[q(u) || p(u)]                         (inducing)
//! ```
//!
//! State paths and transition values are reparameterized against noise
//! drawn once per `(seed, sample)`, which makes each estimate a smooth,
//! deterministic function of the parameters: the same code path yields
//! values on `f64` and exact gradients on the autodiff tape.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::grad::{Scalar, Tape, Var};
use crate::kernels::AugmentedInput;
use crate::model::{prior_mean_dim, GpssmModel, SparsePosterior, VariationalChain, VARIANCE_FLOOR};
use crate::numerics::gaussian::kl_from_chol;
use crate::numerics::{Matrix, Vector, LN_2PI};
use crate::params::{ParamLayout, ParamMask};
use crate::seeds::{self, tags};

/// One Monte-Carlo evaluation of the bound with its term breakdown.
#[derive(Clone, Debug)]
pub struct ElboEstimate {
    pub value: f64,
    pub expected_loglik: f64,
    pub transition_kl: f64,
    pub initial_state_kl: f64,
    pub inducing_kl: f64,
    pub samples: usize,
    pub seed: u64,
}

impl ElboEstimate {
    fn from_terms(terms: (f64, f64, f64, f64), samples: usize, seed: u64) -> Self {
        let (t1, t2, t3, t4) = terms;
        ElboEstimate {
            value: t1 - t2 - t3 - t4,
            expected_loglik: t1,
            transition_kl: t2,
            initial_state_kl: t3,
            inducing_kl: t4,
            samples,
            seed,
        }
    }
}

/// Trainer settings. An epoch is one gradient step on the full sequence.
#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub samples_per_estimate: usize,
    pub seed: u64,
    pub mask: ParamMask,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            learning_rate: 0.01,
            samples_per_estimate: 10,
            seed: 0,
            mask: ParamMask::all(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: GpssmModel<f64>,
    /// Fixed-seed evaluation after every epoch; `epochs` entries.
    pub trace: Vec<ElboEstimate>,
    /// Epoch at which a non-finite gradient aborted training, if any.
    pub aborted_at: Option<usize>,
}

/// Standard-normal draws shared by every term of one estimate.
struct NoiseDraws {
    /// per sample: x0 (d_x), then per step: state noise and f noise.
    x0: Vec<Vector<f64>>,
    state: Vec<Vec<Vector<f64>>>,
    f: Vec<Vec<Vector<f64>>>,
}

impl NoiseDraws {
    fn generate(seed: u64, samples: usize, steps: usize, d_x: usize) -> Self {
        let mut x0 = Vec::with_capacity(samples);
        let mut state = Vec::with_capacity(samples);
        let mut f = Vec::with_capacity(samples);
        for s in 0..samples {
            let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive_indexed(seed, tags::ELBO_SAMPLE, s as u64));
            x0.push(Vector::from_fn(d_x, |_| rng.sample::<f64, _>(StandardNormal)));
            let mut st = Vec::with_capacity(steps);
            let mut fs = Vec::with_capacity(steps);
            for _ in 0..steps {
                st.push(Vector::from_fn(d_x, |_| rng.sample::<f64, _>(StandardNormal)));
                fs.push(Vector::from_fn(d_x, |_| rng.sample::<f64, _>(StandardNormal)));
            }
            state.push(st);
            f.push(fs);
        }
        NoiseDraws { x0, state, f }
    }
}

/// log N(x | mean, diag(var)) without factorizations.
pub(crate) fn logpdf_diag<S: Scalar>(x: &Vector<f64>, mean: &Vector<S>, var: &Vector<S>) -> S {
    let mut acc = S::zero();
    for i in 0..mean.len() {
        let d = S::from_f64(x[i]) - mean[i];
        acc = acc + d * d / var[i] + var[i].ln();
    }
    (acc + mean.len() as f64 * LN_2PI) * -0.5
}

/// Initial-state and inducing KL terms, shared with the total-MI bound.
pub(crate) fn initial_and_inducing_kl<S: Scalar>(
    model: &GpssmModel<S>,
    posterior: &SparsePosterior<S>,
) -> Result<(S, S)> {
    let d_x = model.d_x;
    let chol_q0 = Matrix::from_fn(d_x, d_x, |i, j| if i == j { model.x0_q_std[i] } else { S::zero() });
    let chol_p0 = model.x0_prior.cov.cholesky()?;
    let x0_kl = kl_from_chol(&model.x0_q_mean, &chol_q0, &model.x0_prior.mean, &chol_p0)?;

    let m = model.inducing.size();
    let mut inducing_kl = S::zero();
    for dim in 0..d_x {
        let (_, chol_kzz, _, _) = posterior.dim_parts(dim);
        let m_z = Vector::from_fn(m, |i| prior_mean_dim(dim, &model.inducing.locations[i]));
        inducing_kl = inducing_kl
            + kl_from_chol(&model.inducing.mean[dim], &model.inducing.cov_chol[dim], &m_z, chol_kzz)?;
    }
    Ok((x0_kl, inducing_kl))
}

/// The f-independent part of each transition KL:
/// `0.5 [ tr(Q^{-1} S) - d + logdet Q - logdet S ]`.
pub(crate) fn transition_kl_const<S: Scalar>(model: &GpssmModel<S>, chain: &VariationalChain<S>) -> S {
    let d_x = model.d_x;
    let mut tr_qinv_s = S::zero();
    let mut logdet_q = S::zero();
    for i in 0..d_x {
        tr_qinv_s = tr_qinv_s + chain.noise[(i, i)] / model.process_noise[i];
        logdet_q = logdet_q + model.process_noise[i].ln();
    }
    (tr_qinv_s - S::from_f64(d_x as f64) + logdet_q - chain.noise_chol.chol_logdet()) * 0.5
}

/// The four ELBO terms for any scalar type, given pre-drawn noise.
fn elbo_terms<S: Scalar>(
    model: &GpssmModel<S>,
    chain: &VariationalChain<S>,
    traj: &crate::model::Trajectory,
    noise: &NoiseDraws,
) -> Result<(S, S, S, S)> {
    let d_x = model.d_x;
    let steps = traj.len();
    let samples = noise.x0.len();
    let posterior = SparsePosterior::build(model)?;
    let (term3, term4) = initial_and_inducing_kl(model, &posterior)?;
    let kl_const = transition_kl_const(model, chain);

    let x0_chol = Matrix::from_fn(d_x, d_x, |i, j| if i == j { model.x0_q_std[i] } else { S::zero() });
    let mut term1 = S::zero();
    let mut term2 = S::zero();
    for s in 0..samples {
        let mut x = Vector::from_fn(d_x, |i| model.x0_q_mean[i]);
        {
            let shift = x0_chol.matvec(&Vector::from_f64_slice(noise.x0[s].as_slice()));
            x = x.add(&shift);
        }
        for t in 0..steps {
            let control = Vector::from_f64_slice(traj.controls[t].as_slice());
            let input = AugmentedInput::new(&x, &control);
            // Sample f_{t+1} from the sparse posterior at the sampled input.
            let mut f = Vector::zeros(d_x);
            for dim in 0..d_x {
                let (mean, var) = posterior.predict_dim_at(dim, &input, &model.inducing.locations);
                let var = if var.val() < VARIANCE_FLOOR { S::from_f64(VARIANCE_FLOOR) } else { var };
                f[dim] = mean + var.sqrt() * noise.f[s][t][dim];
            }
            // Step the chain: x_{t+1} = A x_t + b_t + chol(S) eps.
            let chain_mean = chain.transition.matvec(&x).add(&chain.offsets[t]);
            let x_next = chain_mean.add(
                &chain.noise_chol.matvec(&Vector::from_f64_slice(noise.state[s][t].as_slice())),
            );
            // Transition KL between N(chain_mean, S) and N(f, Q).
            let mut maha = S::zero();
            for i in 0..d_x {
                let d = chain_mean[i] - f[i];
                maha = maha + d * d / model.process_noise[i];
            }
            term2 = term2 + kl_const + maha * 0.5;
            // Emission log-likelihood at the sampled next state.
            let y_mean = model.emission.matvec(&x_next).add(&model.offset);
            term1 = term1 + logpdf_diag(&traj.observations[t], &y_mean, &model.obs_noise);
            x = x_next;
        }
    }
    let inv_s = 1.0 / samples as f64;
    Ok((term1 * inv_s, term2 * inv_s, term3, term4))
}

/// Monte-Carlo ELBO estimate; deterministic in `(model, traj, samples, seed)`.
pub fn elbo(
    model: &GpssmModel<f64>,
    chain: &VariationalChain<f64>,
    traj: &crate::model::Trajectory,
    samples: usize,
    seed: u64,
) -> Result<ElboEstimate> {
    if traj.is_empty() {
        return Err(Error::LengthMismatch { context: "elbo over an empty trajectory".into() });
    }
    let noise = NoiseDraws::generate(seed, samples, traj.len(), model.d_x);
    let terms = elbo_terms(model, chain, traj, &noise)?;
    Ok(ElboEstimate::from_terms(terms, samples, seed))
}

/// ELBO and its exact gradient with respect to the flat parameter vector.
pub fn elbo_with_grad(
    layout: &ParamLayout,
    theta: &[f64],
    template: &GpssmModel<f64>,
    traj: &crate::model::Trajectory,
    samples: usize,
    seed: u64,
) -> Result<(ElboEstimate, Vec<f64>)> {
    let noise = NoiseDraws::generate(seed, samples, traj.len(), template.d_x);
    let tape = Tape::with_capacity(1 << 16);
    let leaves: Vec<Var> = theta.iter().map(|&v| tape.var(v)).collect();
    let model = layout.unpack::<Var>(&leaves, template);
    let chain = VariationalChain::derive(&model, traj)?;
    let (t1, t2, t3, t4) = elbo_terms(&model, &chain, traj, &noise)?;
    let objective = t1 - t2 - t3 - t4;
    let adjoint = tape.gradient(objective);
    let grad: Vec<f64> = leaves.iter().map(|v| adjoint[v.index().unwrap()]).collect();
    let estimate = ElboEstimate::from_terms((t1.val(), t2.val(), t3.val(), t4.val()), samples, seed);
    Ok((estimate, grad))
}

/// Maximizes the Monte-Carlo ELBO by adaptive-moment gradient ascent.
///
/// Per epoch: one gradient step at a fresh derived seed, then a fixed-seed
/// evaluation for the trace. Returns the parameters with the best traced
/// value (never worse than the starting point under the evaluation seed).
/// A non-finite gradient stops the loop and flags the outcome.
pub fn train(
    model: &GpssmModel<f64>,
    traj: &crate::model::Trajectory,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    let layout = ParamLayout::of(model);
    let trainable = layout.trainable(&cfg.mask);
    let mut theta = layout.pack(model);
    let eval_seed = seeds::derive(cfg.seed, tags::TRAIN_EVAL);

    let eval = |theta: &[f64]| -> Result<ElboEstimate> {
        let m = layout.unpack_masked(theta, model, &cfg.mask);
        let chain = VariationalChain::derive(&m, traj)?;
        elbo(&m, &chain, traj, cfg.samples_per_estimate, eval_seed)
    };

    let mut best_theta = theta.clone();
    let mut best_value = eval(&theta)?.value;

    let (beta1, beta2, eps): (f64, f64, f64) = (0.9, 0.999, 1e-8);
    let mut moment1 = vec![0.0; theta.len()];
    let mut moment2 = vec![0.0; theta.len()];
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut aborted_at = None;

    for epoch in 0..cfg.epochs {
        let step_seed = seeds::derive_indexed(cfg.seed, tags::TRAIN_EPOCH, epoch as u64);
        let (_, grad) =
            elbo_with_grad(&layout, &theta, model, traj, cfg.samples_per_estimate, step_seed)?;
        if grad.iter().zip(&trainable).any(|(g, &t)| t && !g.is_finite()) {
            aborted_at = Some(epoch);
            break;
        }
        let t = (epoch + 1) as f64;
        let bias1 = 1.0 - beta1.powf(t);
        let bias2 = 1.0 - beta2.powf(t);
        for i in 0..theta.len() {
            if !trainable[i] {
                continue;
            }
            moment1[i] = beta1 * moment1[i] + (1.0 - beta1) * grad[i];
            moment2[i] = beta2 * moment2[i] + (1.0 - beta2) * grad[i] * grad[i];
            theta[i] += cfg.learning_rate * (moment1[i] / bias1) / ((moment2[i] / bias2).sqrt() + eps);
        }
        let estimate = eval(&theta)?;
        if estimate.value.is_finite() && estimate.value > best_value {
            best_value = estimate.value;
            best_theta.copy_from_slice(&theta);
        }
        trace.push(estimate);
    }

    Ok(TrainOutcome {
        model: layout.unpack_masked(&best_theta, model, &cfg.mask),
        trace,
        aborted_at,
    })
}

/// Writes the per-epoch trace as CSV: epoch, total, and the four terms.
pub fn write_trace_csv(trace: &[ElboEstimate], path: &std::path::Path) -> Result<()> {
    let mut out =
        String::from("epoch,elbo,expected_loglik,transition_kl,initial_state_kl,inducing_kl\n");
    for (epoch, e) in trace.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            epoch, e.value, e.expected_loglik, e.transition_kl, e.initial_state_kl, e.inducing_kl
        ));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
