//! The state-space model with a GP prior on the transition function,
//! its sparse variational posterior, and the derived Gaussian chain over
//! latent states.
//!
//! One independent GP (own kernel, own inducing distribution) is placed on
//! each latent dimension; the inducing locations are shared. Emissions are
//! linear-Gaussian `y = C x + d + noise` with `C` and `d` fixed to the
//! observation map of the system at hand, which pins the latent space to
//! the observed coordinates.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::grad::Scalar;
use crate::kernels::{gram, kernel_eval_unchecked, AugmentedInput, KernelFamily, KernelSpec};
use crate::numerics::{GaussianDist, Matrix, Vector};

static NEGATIVE_VARIANCE_CLIPS: AtomicU64 = AtomicU64::new(0);

/// How often a predictive variance came out (slightly) negative and was
/// clipped to zero since process start.
pub fn negative_variance_clips() -> u64 {
    NEGATIVE_VARIANCE_CLIPS.load(Ordering::Relaxed)
}

/// Variance floor used before square roots on the differentiable path.
pub(crate) const VARIANCE_FLOOR: f64 = 1e-12;

/// Inducing locations shared across latent dimensions, with one free
/// Gaussian `q(u) = N(mean, L L^T)` per dimension.
#[derive(Clone, Debug)]
pub struct InducingSet<S = f64> {
    pub locations: Vec<AugmentedInput<S>>,
    pub mean: Vec<Vector<S>>,
    pub cov_chol: Vec<Matrix<S>>,
}

impl<S: Scalar> InducingSet<S> {
    pub fn size(&self) -> usize {
        self.locations.len()
    }

    pub fn to_f64(&self) -> InducingSet<f64> {
        InducingSet {
            locations: self.locations.iter().map(|z| z.to_f64()).collect(),
            mean: self.mean.iter().map(|m| m.to_f64()).collect(),
            cov_chol: self.cov_chol.iter().map(|c| c.to_f64()).collect(),
        }
    }
}

/// All parameters of the generative model plus the variational state.
#[derive(Clone, Debug)]
pub struct GpssmModel<S = f64> {
    pub d_x: usize,
    pub d_y: usize,
    pub d_c: usize,
    /// One kernel per latent dimension, over `d_x + d_c` inputs.
    pub kernels: Vec<KernelSpec<S>>,
    /// Emission matrix C (fixed to the system's observation map).
    pub emission: Matrix<S>,
    /// Emission offset d (fixed).
    pub offset: Vector<S>,
    /// Diagonal of the process-noise covariance Q.
    pub process_noise: Vector<S>,
    /// Diagonal of the observation-noise covariance R.
    pub obs_noise: Vector<S>,
    /// Known prior on the initial state.
    pub x0_prior: GaussianDist<S>,
    /// Trainable variational posterior over the initial state (diagonal).
    pub x0_q_mean: Vector<S>,
    pub x0_q_std: Vector<S>,
    pub inducing: InducingSet<S>,
}

/// Prior mean of the transition GP: identity on the state part of the
/// augmented input ("states persist").
pub fn prior_mean_dim<S: Scalar>(dim: usize, input: &AugmentedInput<S>) -> S {
    input.full()[dim]
}

impl GpssmModel<f64> {
    /// Builds a model with inducing locations sampled uniformly over the
    /// given per-dimension bounds of the augmented input space, and
    /// `q(u) = p(u)`, `q(x0) = p(x0)` as the variational starting point.
    #[allow(clippy::too_many_arguments)]
    pub fn init(
        d_x: usize,
        d_y: usize,
        d_c: usize,
        kernels: Vec<KernelSpec<f64>>,
        emission: Matrix<f64>,
        offset: Vector<f64>,
        process_noise: Vector<f64>,
        obs_noise: Vector<f64>,
        x0_prior: GaussianDist<f64>,
        input_bounds: &[(f64, f64)],
        num_inducing: usize,
        seed: u64,
    ) -> Result<Self> {
        let d_in = d_x + d_c;
        if kernels.len() != d_x {
            return Err(Error::dim(format!("{} kernels for {} latent dims", kernels.len(), d_x)));
        }
        if input_bounds.len() != d_in {
            return Err(Error::dim(format!(
                "{} input bounds for {} augmented dims",
                input_bounds.len(),
                d_in
            )));
        }
        if emission.rows() != d_y || emission.cols() != d_x {
            return Err(Error::dim("emission matrix shape"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let locations: Vec<AugmentedInput<f64>> = (0..num_inducing)
            .map(|_| {
                let values = Vector::from_fn(d_in, |i| {
                    let (lo, hi) = input_bounds[i];
                    rng.gen_range(lo..hi)
                });
                AugmentedInput::from_concat(values, d_x)
            })
            .collect();
        let mut mean = Vec::with_capacity(d_x);
        let mut cov_chol = Vec::with_capacity(d_x);
        for (dim, kernel) in kernels.iter().enumerate() {
            let kzz = gram(kernel, &locations, &locations)?;
            cov_chol.push(kzz.cholesky()?);
            mean.push(Vector::from_fn(num_inducing, |i| prior_mean_dim(dim, &locations[i])));
        }
        let x0_q_mean = x0_prior.mean.clone();
        let x0_q_std = Vector::from_fn(d_x, |i| x0_prior.cov[(i, i)].sqrt());
        Ok(GpssmModel {
            d_x,
            d_y,
            d_c,
            kernels,
            emission,
            offset,
            process_noise,
            obs_noise,
            x0_prior,
            x0_q_mean,
            x0_q_std,
            inducing: InducingSet { locations, mean, cov_chol },
        })
    }

    /// Observation covariance of one-step prediction, `R + C Q C^T`.
    pub fn predictive_obs_cov(&self) -> Matrix<f64> {
        predictive_obs_cov(self)
    }
}

/// `R + C Q C^T` for any scalar type.
pub fn predictive_obs_cov<S: Scalar>(model: &GpssmModel<S>) -> Matrix<S> {
    let c = &model.emission;
    let mut out = Matrix::zeros(model.d_y, model.d_y);
    for i in 0..model.d_y {
        for j in 0..model.d_y {
            let mut acc = S::zero();
            for k in 0..model.d_x {
                acc = acc + c[(i, k)] * model.process_noise[k] * c[(j, k)];
            }
            out[(i, j)] = acc;
        }
    }
    for i in 0..model.d_y {
        out[(i, i)] = out[(i, i)] + model.obs_noise[i];
    }
    out
}

impl<S: Scalar> GpssmModel<S> {
    pub fn input_dim(&self) -> usize {
        self.d_x + self.d_c
    }

    pub fn to_f64(&self) -> GpssmModel<f64> {
        GpssmModel {
            d_x: self.d_x,
            d_y: self.d_y,
            d_c: self.d_c,
            kernels: self.kernels.iter().map(|k| k.to_f64()).collect(),
            emission: self.emission.to_f64(),
            offset: self.offset.to_f64(),
            process_noise: self.process_noise.to_f64(),
            obs_noise: self.obs_noise.to_f64(),
            x0_prior: self.x0_prior.to_f64(),
            x0_q_mean: self.x0_q_mean.to_f64(),
            x0_q_std: self.x0_q_std.to_f64(),
            inducing: self.inducing.to_f64(),
        }
    }
}

/// Per-dimension solved representation of the sparse GP posterior, built
/// once per model state and then queried in O(M^2) per prediction.
pub struct SparsePosterior<S = f64> {
    dims: Vec<DimPosterior<S>>,
}

struct DimPosterior<S> {
    kernel: KernelSpec<S>,
    chol_kzz: Matrix<S>,
    /// K_zz^{-1} (mu_u - m(Z)).
    beta: Vector<S>,
    /// K_zz^{-1} (K_zz - Sigma_u) K_zz^{-1}.
    correction: Matrix<S>,
}

impl<S: Scalar> SparsePosterior<S> {
    pub fn build(model: &GpssmModel<S>) -> Result<Self> {
        let z = &model.inducing.locations;
        if z.is_empty() {
            return Err(Error::dim("model has no inducing points"));
        }
        let m = z.len();
        let mut dims = Vec::with_capacity(model.d_x);
        for dim in 0..model.d_x {
            let kernel = model.kernels[dim].clone();
            let kzz = gram(&kernel, z, z)?;
            let chol_kzz = kzz.cholesky()?;
            let centred = Vector::from_fn(m, |i| {
                model.inducing.mean[dim][i] - prior_mean_dim(dim, &z[i])
            });
            let beta = chol_kzz.chol_solve(&centred);
            // K^{-1} - (K^{-1} L_u)(K^{-1} L_u)^T
            let k_inv = chol_kzz.chol_solve_mat(&Matrix::identity(m));
            let w = chol_kzz.chol_solve_mat(&model.inducing.cov_chol[dim]);
            let mut correction = k_inv;
            for i in 0..m {
                for j in 0..m {
                    let mut acc = S::zero();
                    for t in 0..m {
                        acc = acc + w[(i, t)] * w[(j, t)];
                    }
                    correction[(i, j)] = correction[(i, j)] - acc;
                }
            }
            dims.push(DimPosterior { kernel, chol_kzz, beta, correction });
        }
        Ok(SparsePosterior { dims })
    }

    pub fn num_dims(&self) -> usize {
        self.dims.len()
    }

    pub fn num_inducing(&self) -> usize {
        self.dims[0].beta.len()
    }

    /// Posterior mean and (unclipped) variance of f_dim at one input,
    /// reusing a caller-provided kernel-vector buffer.
    pub fn predict_dim_at(
        &self,
        dim: usize,
        input: &AugmentedInput<S>,
        z: &[AugmentedInput<S>],
    ) -> (S, S) {
        let p = &self.dims[dim];
        let m = z.len();
        let k_vec = Vector::from_fn(m, |i| kernel_eval_unchecked(&p.kernel, input.full(), z[i].full()));
        let mean = prior_mean_dim(dim, input) + k_vec.dot(&p.beta);
        let var = p.kernel.signal_variance - p.correction.quad_form(&k_vec, &k_vec);
        (mean, var)
    }

    /// Means and variances of all latent dimensions at one input.
    pub fn predict(
        &self,
        model: &GpssmModel<S>,
        input: &AugmentedInput<S>,
    ) -> (Vector<S>, Vector<S>) {
        let z = &model.inducing.locations;
        let d = self.dims.len();
        let mut means = Vector::zeros(d);
        let mut vars = Vector::zeros(d);
        for dim in 0..d {
            let (mean, var) = self.predict_dim_at(dim, input, z);
            means[dim] = mean;
            vars[dim] = var;
        }
        (means, vars)
    }

    /// Access for moment propagation: Cholesky of K_zz, beta weights and
    /// the posterior variance correction of one latent dimension.
    pub(crate) fn dim_parts(&self, dim: usize) -> (&KernelSpec<S>, &Matrix<S>, &Vector<S>, &Matrix<S>) {
        let p = &self.dims[dim];
        (&p.kernel, &p.chol_kzz, &p.beta, &p.correction)
    }
}

/// Predictive Gaussian of the transition function at one augmented input.
/// Negative variances (numerical cancellation) are clipped to zero and
/// counted.
pub fn sparse_gp_predict(model: &GpssmModel<f64>, input: &AugmentedInput<f64>) -> Result<GaussianDist<f64>> {
    let posterior = SparsePosterior::build(model)?;
    Ok(sparse_gp_predict_with(model, &posterior, input))
}

/// Same as [`sparse_gp_predict`] with a prebuilt posterior.
pub fn sparse_gp_predict_with(
    model: &GpssmModel<f64>,
    posterior: &SparsePosterior<f64>,
    input: &AugmentedInput<f64>,
) -> GaussianDist<f64> {
    let (means, mut vars) = posterior.predict(model, input);
    for i in 0..vars.len() {
        if vars[i] < 0.0 {
            debug_assert!(vars[i] >= -1e-6, "variance {} far below zero", vars[i]);
            NEGATIVE_VARIANCE_CLIPS.fetch_add(1, Ordering::Relaxed);
            vars[i] = 0.0;
        }
    }
    GaussianDist { mean: means, cov: Matrix::from_diag(&vars) }
}

/// Observed data: `controls[t]` was applied at state x_t and produced
/// `observations[t]` (= y_{t+1} in generative indexing).
#[derive(Clone, Debug, Default)]
pub struct Trajectory {
    pub observations: Vec<Vector<f64>>,
    pub controls: Vec<Vector<f64>>,
    /// Latent states sampled during inference, if any (length T + 1).
    pub latent_states: Option<Vec<Vector<f64>>>,
}

impl Trajectory {
    pub fn new(observations: Vec<Vector<f64>>, controls: Vec<Vector<f64>>) -> Result<Self> {
        if observations.len() != controls.len() {
            return Err(Error::LengthMismatch {
                context: format!(
                    "{} observations vs {} controls (one control per produced observation)",
                    observations.len(),
                    controls.len()
                ),
            });
        }
        Ok(Trajectory { observations, controls, latent_states: None })
    }

    /// Number of observed steps T.
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn push_step(&mut self, control: Vector<f64>, observation: Vector<f64>) {
        self.controls.push(control);
        self.observations.push(observation);
    }
}

/// The Gaussian chain `q(x_i | x_{i-1}) = N(A x_{i-1} + b_{i-1}, S)`.
///
/// Under the state-valued free-parameter choice the chain is fully derived:
/// `S = (Q^{-1} + C^T R^{-1} C)^{-1}`, `A = S Q^{-1}`,
/// `b_{i-1} = S C^T R^{-1} (y_i - d)`, so it is recomputed whenever the
/// model's `Q`, `R`, `C` or `d` change. Only `q(x0)` is free.
#[derive(Clone, Debug)]
pub struct VariationalChain<S = f64> {
    pub transition: Matrix<S>,
    pub noise: Matrix<S>,
    pub noise_chol: Matrix<S>,
    /// offsets[i] drives the step producing observation i.
    pub offsets: Vec<Vector<S>>,
    pub x0: GaussianDist<S>,
}

impl<S: Scalar> VariationalChain<S> {
    pub fn derive(model: &GpssmModel<S>, traj: &Trajectory) -> Result<Self> {
        let d_x = model.d_x;
        let c = &model.emission;
        // Q^{-1} + C^T R^{-1} C (Q, R diagonal)
        let mut precision = Matrix::zeros(d_x, d_x);
        for i in 0..d_x {
            precision[(i, i)] = model.process_noise[i].recip();
        }
        for i in 0..d_x {
            for j in 0..d_x {
                let mut acc = S::zero();
                for r in 0..model.d_y {
                    acc = acc + c[(r, i)] * c[(r, j)] / model.obs_noise[r];
                }
                precision[(i, j)] = precision[(i, j)] + acc;
            }
        }
        let noise = precision.inverse_spd()?;
        let noise_chol = noise.cholesky()?;
        let transition = Matrix::from_fn(d_x, d_x, |i, j| noise[(i, j)] / model.process_noise[j]);
        let offsets = traj
            .observations
            .iter()
            .map(|y| {
                // S C^T R^{-1} (y - d)
                let resid = Vector::from_fn(model.d_y, |r| {
                    (S::from_f64(y[r]) - model.offset[r]) / model.obs_noise[r]
                });
                let ct_resid = Vector::from_fn(d_x, |i| {
                    let mut acc = S::zero();
                    for r in 0..model.d_y {
                        acc = acc + c[(r, i)] * resid[r];
                    }
                    acc
                });
                noise.matvec(&ct_resid)
            })
            .collect();
        let x0_cov = Matrix::from_fn(d_x, d_x, |i, j| {
            if i == j {
                model.x0_q_std[i] * model.x0_q_std[i]
            } else {
                S::zero()
            }
        });
        Ok(VariationalChain {
            transition,
            noise,
            noise_chol,
            offsets,
            x0: GaussianDist { mean: model.x0_q_mean.clone(), cov: x0_cov },
        })
    }
}

impl VariationalChain<f64> {
    /// Mean of the chain marginal at every step (linear-Gaussian recursion).
    pub fn marginal_means(&self) -> Vec<Vector<f64>> {
        let mut means = vec![self.x0.mean.clone()];
        for b in &self.offsets {
            let prev = means.last().unwrap();
            means.push(self.transition.matvec(prev).add(b));
        }
        means
    }
}

/// Draws x_{0:T} from the variational chain; deterministic given the seed.
pub fn sample_posterior_states(
    _model: &GpssmModel<f64>,
    chain: &VariationalChain<f64>,
    traj: &Trajectory,
    seed: u64,
) -> Vec<Vector<f64>> {
    debug_assert_eq!(chain.offsets.len(), traj.len());
    let d_x = chain.x0.mean.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x0_chol = chain.x0.cov.cholesky().expect("q(x0) covariance must be SPD");
    let eps0 = Vector::from_fn(d_x, |_| rng.sample::<f64, _>(StandardNormal));
    let mut states = Vec::with_capacity(traj.len() + 1);
    states.push(chain.x0.mean.add(&x0_chol.matvec(&eps0)));
    for b in &chain.offsets {
        let prev = states.last().unwrap();
        let eps = Vector::from_fn(d_x, |_| rng.sample::<f64, _>(StandardNormal));
        let next = chain.transition.matvec(prev).add(b).add(&chain.noise_chol.matvec(&eps));
        states.push(next);
    }
    states
}

/// One-step observation prediction under a new control: samples the
/// transition value f at (x_T, c_star) and returns
/// `N(C f + d, R + C Q C^T)` along with the sampled f.
pub fn predict_observation(
    model: &GpssmModel<f64>,
    posterior: &SparsePosterior<f64>,
    x_last: &Vector<f64>,
    c_star: &Vector<f64>,
    seed: u64,
) -> (GaussianDist<f64>, Vector<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let input = AugmentedInput::new(x_last, c_star);
    let f_dist = sparse_gp_predict_with(model, posterior, &input);
    let f = Vector::from_fn(model.d_x, |i| {
        f_dist.mean[i] + f_dist.cov[(i, i)].sqrt() * rng.sample::<f64, _>(StandardNormal)
    });
    let mean = model.emission.matvec(&f).add(&model.offset);
    let cov = predictive_obs_cov(model);
    (GaussianDist { mean, cov }, f)
}

// ---------------------------------------------------------------------------
// Checkpoint serialization: flat key-value text, exact f64 round-trip.
// ---------------------------------------------------------------------------

fn write_vec(out: &mut String, key: &str, v: &Vector<f64>) {
    out.push_str(key);
    out.push_str(" =");
    for x in v.iter() {
        out.push(' ');
        out.push_str(&format!("{x:?}"));
    }
    out.push('\n');
}

fn write_mat(out: &mut String, key: &str, m: &Matrix<f64>) {
    out.push_str(key);
    out.push_str(" =");
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            out.push(' ');
            out.push_str(&format!("{:?}", m[(i, j)]));
        }
    }
    out.push('\n');
}

impl GpssmModel<f64> {
    /// Serializes every parameter to a flat key-value text block.
    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("d_x = {}\nd_y = {}\nd_c = {}\n", self.d_x, self.d_y, self.d_c));
        for (j, k) in self.kernels.iter().enumerate() {
            out.push_str(&format!("kernel.{j}.family = {}\n", k.family.name()));
            out.push_str(&format!("kernel.{j}.sigma2 = {:?}\n", k.signal_variance));
            write_vec(&mut out, &format!("kernel.{j}.lengthscales"), &k.lengthscales);
        }
        write_mat(&mut out, "emission.c", &self.emission);
        write_vec(&mut out, "emission.d", &self.offset);
        write_vec(&mut out, "process_noise", &self.process_noise);
        write_vec(&mut out, "obs_noise", &self.obs_noise);
        write_vec(&mut out, "x0_prior.mean", &self.x0_prior.mean);
        write_mat(&mut out, "x0_prior.cov", &self.x0_prior.cov);
        write_vec(&mut out, "x0_q.mean", &self.x0_q_mean);
        write_vec(&mut out, "x0_q.std", &self.x0_q_std);
        out.push_str(&format!("inducing.m = {}\n", self.inducing.size()));
        for (i, z) in self.inducing.locations.iter().enumerate() {
            write_vec(&mut out, &format!("inducing.z.{i}"), z.full());
        }
        for j in 0..self.d_x {
            write_vec(&mut out, &format!("inducing.mean.{j}"), &self.inducing.mean[j]);
            write_mat(&mut out, &format!("inducing.cov_chol.{j}"), &self.inducing.cov_chol[j]);
        }
        out
    }

    /// Parses the output of [`GpssmModel::to_key_values`].
    pub fn from_key_values(text: &str) -> Result<Self> {
        let mut map = std::collections::BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
            map.insert(key.trim().to_string(), value.trim().to_string());
        }
        let get = |key: &str| -> Result<&String> {
            map.get(key).ok_or_else(|| Error::Config(format!("missing key `{key}`")))
        };
        let parse_usize =
            |key: &str| -> Result<usize> { get(key)?.parse().map_err(|_| Error::Config(format!("bad usize `{key}`"))) };
        let parse_vec = |key: &str| -> Result<Vector<f64>> {
            let vals: std::result::Result<Vec<f64>, _> =
                get(key)?.split_whitespace().map(str::parse).collect();
            Ok(Vector::new(vals.map_err(|_| Error::Config(format!("bad float list `{key}`")))?))
        };
        let parse_mat = |key: &str, rows: usize, cols: usize| -> Result<Matrix<f64>> {
            let v = parse_vec(key)?;
            if v.len() != rows * cols {
                return Err(Error::Config(format!("`{key}` expected {} values, got {}", rows * cols, v.len())));
            }
            Ok(Matrix::from_fn(rows, cols, |i, j| v[i * cols + j]))
        };

        let d_x = parse_usize("d_x")?;
        let d_y = parse_usize("d_y")?;
        let d_c = parse_usize("d_c")?;
        let d_in = d_x + d_c;
        let mut kernels = Vec::with_capacity(d_x);
        for j in 0..d_x {
            let family = KernelFamily::parse(get(&format!("kernel.{j}.family"))?)?;
            let sigma2: f64 = get(&format!("kernel.{j}.sigma2"))?
                .parse()
                .map_err(|_| Error::Config("bad sigma2".into()))?;
            let lengthscales = parse_vec(&format!("kernel.{j}.lengthscales"))?;
            kernels.push(KernelSpec::new(family, sigma2, lengthscales));
        }
        let m = parse_usize("inducing.m")?;
        let mut locations = Vec::with_capacity(m);
        for i in 0..m {
            locations.push(AugmentedInput::from_concat(parse_vec(&format!("inducing.z.{i}"))?, d_x));
        }
        let mut mean = Vec::with_capacity(d_x);
        let mut cov_chol = Vec::with_capacity(d_x);
        for j in 0..d_x {
            mean.push(parse_vec(&format!("inducing.mean.{j}"))?);
            cov_chol.push(parse_mat(&format!("inducing.cov_chol.{j}"), m, m)?);
        }
        let model = GpssmModel {
            d_x,
            d_y,
            d_c,
            kernels,
            emission: parse_mat("emission.c", d_y, d_x)?,
            offset: parse_vec("emission.d")?,
            process_noise: parse_vec("process_noise")?,
            obs_noise: parse_vec("obs_noise")?,
            x0_prior: GaussianDist::new(parse_vec("x0_prior.mean")?, parse_mat("x0_prior.cov", d_x, d_x)?)?,
            x0_q_mean: parse_vec("x0_q.mean")?,
            x0_q_std: parse_vec("x0_q.std")?,
            inducing: InducingSet { locations, mean, cov_chol },
        };
        if model.kernels.iter().any(|k| k.input_dim() != d_in) {
            return Err(Error::dim("kernel lengthscale count vs augmented input dim"));
        }
        Ok(model)
    }
}
