//! Covariance functions over augmented state-control inputs, gram matrices,
//! and the expectations of kernels under a Gaussian input distribution.
//!
//! The squared-exponential family has closed-form expectations; other
//! families go through Gauss-Hermite quadrature over the uncertain input
//! dimensions, with a seeded Monte-Carlo fallback above four dimensions.

use crate::error::{Error, Result};
use crate::grad::Scalar;
use crate::numerics::gaussian::logpdf_mean_cov;
use crate::numerics::{Matrix, Vector, LN_2PI};

/// Input dimensions with variance below this are treated as deterministic
/// when integrating kernel expectations.
const DETERMINISTIC_VARIANCE: f64 = 1e-14;
/// Largest number of uncertain dimensions handled by tensorized quadrature.
pub const MAX_QUADRATURE_DIM: usize = 4;
/// Sample count and seed of the Monte-Carlo fallback.
const MC_FALLBACK_SAMPLES: usize = 100_000;
const MC_FALLBACK_SEED: u64 = 0x6b65_726e_656c_7363;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelFamily {
    SquaredExponential,
    Matern32,
}

impl KernelFamily {
    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::SquaredExponential => "squared_exponential",
            KernelFamily::Matern32 => "matern32",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "se" | "rbf" | "squared_exponential" | "squaredexponential" => {
                Ok(KernelFamily::SquaredExponential)
            }
            "matern32" | "matern_32" | "matern3/2" => Ok(KernelFamily::Matern32),
            other => Err(Error::Config(format!("unknown kernel family `{other}`"))),
        }
    }
}

/// A stationary kernel with one lengthscale per augmented-input dimension.
#[derive(Clone, Debug)]
pub struct KernelSpec<S = f64> {
    pub family: KernelFamily,
    pub signal_variance: S,
    pub lengthscales: Vector<S>,
}

impl<S: Scalar> KernelSpec<S> {
    pub fn new(family: KernelFamily, signal_variance: S, lengthscales: Vector<S>) -> Self {
        debug_assert!(signal_variance.val() > 0.0);
        debug_assert!(lengthscales.iter().all(|l| l.val() > 0.0));
        KernelSpec { family, signal_variance, lengthscales }
    }

    /// All lengthscales initialized to one scalar, the usual starting point.
    pub fn isotropic(family: KernelFamily, signal_variance: f64, lengthscale: f64, dim: usize) -> Self {
        KernelSpec {
            family,
            signal_variance: S::from_f64(signal_variance),
            lengthscales: Vector::from_fn(dim, |_| S::from_f64(lengthscale)),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.lengthscales.len()
    }

    pub fn to_f64(&self) -> KernelSpec<f64> {
        KernelSpec {
            family: self.family,
            signal_variance: self.signal_variance.val(),
            lengthscales: self.lengthscales.to_f64(),
        }
    }
}

/// A state vector with its control appended, the kernel's input space.
#[derive(Clone, Debug)]
pub struct AugmentedInput<S = f64> {
    values: Vector<S>,
    state_dim: usize,
}

impl<S: Scalar> AugmentedInput<S> {
    pub fn new(state: &Vector<S>, control: &Vector<S>) -> Self {
        AugmentedInput { values: state.concat(control), state_dim: state.len() }
    }

    pub fn from_concat(values: Vector<S>, state_dim: usize) -> Self {
        debug_assert!(state_dim <= values.len());
        AugmentedInput { values, state_dim }
    }

    pub fn full(&self) -> &Vector<S> {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn state(&self) -> Vector<S> {
        Vector::from_fn(self.state_dim, |i| self.values[i])
    }

    pub fn control(&self) -> Vector<S> {
        Vector::from_fn(self.values.len() - self.state_dim, |i| self.values[self.state_dim + i])
    }

    pub fn to_f64(&self) -> AugmentedInput<f64> {
        AugmentedInput { values: self.values.to_f64(), state_dim: self.state_dim }
    }
}

fn check_dims<S: Scalar>(k: &KernelSpec<S>, a: &AugmentedInput<S>, b: &AugmentedInput<S>) -> Result<()> {
    if a.dim() != k.input_dim() || b.dim() != k.input_dim() {
        return Err(Error::dim(format!(
            "kernel over {} dims applied to inputs of dims {} and {}",
            k.input_dim(),
            a.dim(),
            b.dim()
        )));
    }
    Ok(())
}

/// k(a, b).
pub fn kernel_eval<S: Scalar>(k: &KernelSpec<S>, a: &AugmentedInput<S>, b: &AugmentedInput<S>) -> Result<S> {
    check_dims(k, a, b)?;
    Ok(kernel_eval_unchecked(k, a.full(), b.full()))
}

pub(crate) fn kernel_eval_unchecked<S: Scalar>(k: &KernelSpec<S>, a: &Vector<S>, b: &Vector<S>) -> S {
    let mut scaled_sq = S::zero();
    for i in 0..a.len() {
        let d = (a[i] - b[i]) / k.lengthscales[i];
        scaled_sq = scaled_sq + d * d;
    }
    match k.family {
        KernelFamily::SquaredExponential => k.signal_variance * (scaled_sq * -0.5).exp(),
        KernelFamily::Matern32 => {
            if scaled_sq.val() < 1e-28 {
                return k.signal_variance;
            }
            let r = scaled_sq.sqrt() * 3f64.sqrt();
            k.signal_variance * (r + 1.0) * (-r).exp()
        }
    }
}

/// Gram matrix with entry (i, j) = k(X_i, Y_j).
pub fn gram<S: Scalar>(k: &KernelSpec<S>, x: &[AugmentedInput<S>], y: &[AugmentedInput<S>]) -> Result<Matrix<S>> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::dim("gram matrix over an empty input list"));
    }
    for a in x.iter().chain(y.iter()) {
        if a.dim() != k.input_dim() {
            return Err(Error::dim(format!(
                "kernel over {} dims applied to input of dim {}",
                k.input_dim(),
                a.dim()
            )));
        }
    }
    Ok(Matrix::from_fn(x.len(), y.len(), |i, j| {
        kernel_eval_unchecked(k, x[i].full(), y[j].full())
    }))
}

/// The three kernel integrals under x ~ N(u, S), plus the first-moment
/// weighted expectation needed when the prior mean depends on the input.
#[derive(Clone, Debug)]
pub struct KernelExpectations<S = f64> {
    /// E[k(x, x)].
    pub l: S,
    /// l_vec[i] = E[k(x, z_i)].
    pub l_vec: Vector<S>,
    /// l_mat[i][j] = E[k(x, z_i) k(x, z_j)].
    pub l_mat: Matrix<S>,
    /// xk_vec[i] = E[x k(x, z_i)].
    pub xk_vec: Vec<Vector<S>>,
}

/// Closed-form expectations for the squared-exponential kernel.
///
/// With Lambda = diag(lengthscales^2) and c = (2 pi)^{d/2} |Lambda|^{1/2} sigma^2:
/// l = sigma^2, l_vec[i] = c N(u | z_i, Lambda + S) and
/// l_mat[i][j] = c^2 N(z_i | z_j, 2 Lambda) N(u | (z_i + z_j)/2, Lambda/2 + S).
pub fn se_kernel_expectations<S: Scalar>(
    k: &KernelSpec<S>,
    u: &Vector<S>,
    s: &Matrix<S>,
    x: &[AugmentedInput<S>],
) -> Result<KernelExpectations<S>> {
    if k.family != KernelFamily::SquaredExponential {
        return Err(Error::UnsupportedKernel { family: k.family.name().to_string() });
    }
    let d = k.input_dim();
    if u.len() != d || s.rows() != d || s.cols() != d {
        return Err(Error::dim(format!(
            "expectations over {d}-dim kernel with mean of dim {} and cov {}x{}",
            u.len(),
            s.rows(),
            s.cols()
        )));
    }
    let m = x.len();
    let lambda = Vector::from_fn(d, |i| k.lengthscales[i] * k.lengthscales[i]);
    let lambda_mat = Matrix::from_diag(&lambda);

    // ln c = (d/2) ln(2 pi) + (1/2) ln|Lambda| + ln sigma^2
    let mut ln_det_lambda = S::zero();
    for i in 0..d {
        ln_det_lambda = ln_det_lambda + lambda[i].ln();
    }
    let ln_c = ln_det_lambda * 0.5 + k.signal_variance.ln() + (d as f64 / 2.0) * LN_2PI;

    // Shared solve machinery for N(u | z_i, Lambda + S) and the product
    // location m_i = u + S (S + Lambda)^{-1} (z_i - u).
    let lam_plus_s = lambda_mat.add(s);
    let chol_ls = lam_plus_s.cholesky()?;

    let mut l_vec = Vector::zeros(m);
    let mut xk_vec = Vec::with_capacity(m);
    for (i, zi) in x.iter().enumerate() {
        let ln_n = logpdf_mean_cov(u, zi.full(), &lam_plus_s)?;
        let li = (ln_c + ln_n).exp();
        l_vec[i] = li;
        let diff = zi.full().sub(u);
        let w = chol_ls.chol_solve(&diff);
        let shift = s.matvec(&w);
        xk_vec.push(Vector::from_fn(d, |j| (u[j] + shift[j]) * li));
    }

    let half_lam_plus_s = lambda_mat.scale(S::from_f64(0.5)).add(s);
    let two_lambda = lambda_mat.scale(S::from_f64(2.0));
    let mut l_mat = Matrix::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let ln_pair = logpdf_mean_cov(x[i].full(), x[j].full(), &two_lambda)?;
            let mid = Vector::from_fn(d, |t| (x[i].full()[t] + x[j].full()[t]) * 0.5);
            let ln_loc = logpdf_mean_cov(u, &mid, &half_lam_plus_s)?;
            let value = (ln_c * 2.0 + ln_pair + ln_loc).exp();
            l_mat[(i, j)] = value;
            l_mat[(j, i)] = value;
        }
    }

    Ok(KernelExpectations { l: k.signal_variance, l_vec, l_mat, xk_vec })
}

/// Physicists' Gauss-Hermite nodes and weights for weight function e^{-x^2}.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    let mut z = 0.0f64;
    for i in 0..(n + 1) / 2 {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * nodes[0],
            3 => 1.91 * z - 0.91 * nodes[1],
            _ => 2.0 * z - nodes[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..200 {
            let mut p1 = std::f64::consts::PI.powf(-0.25);
            let mut p2 = 0.0;
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = z;
        nodes[n - 1 - i] = -z;
        weights[i] = 2.0 / (pp * pp);
        weights[n - 1 - i] = weights[i];
    }
    (nodes, weights)
}

fn active_dims<S: Scalar>(s: &Matrix<S>) -> Vec<usize> {
    (0..s.rows()).filter(|&i| s[(i, i)].val() > DETERMINISTIC_VARIANCE).collect()
}

/// Gauss-Hermite tensor-product estimate of the same expectations, valid
/// for any kernel family. Deterministic input dimensions (zero variance)
/// are held fixed and only the remaining ones are integrated.
pub fn quadrature_kernel_expectations<S: Scalar>(
    k: &KernelSpec<S>,
    u: &Vector<S>,
    s: &Matrix<S>,
    x: &[AugmentedInput<S>],
    nodes: usize,
) -> Result<KernelExpectations<S>> {
    assert!(nodes >= 16, "quadrature needs at least 16 nodes per dimension");
    let active = active_dims(s);
    if active.len() > MAX_QUADRATURE_DIM {
        return Err(Error::DimensionTooLarge { dim: active.len(), max: MAX_QUADRATURE_DIM });
    }
    let (gh_nodes, gh_weights) = gauss_hermite(nodes);
    let points = tensor_points(u, s, &active, &gh_nodes, &gh_weights)?;
    Ok(expectations_from_points(k, x, &points))
}

/// Routes to the closed form (squared exponential), tensorized quadrature
/// (up to four uncertain dimensions), or the seeded Monte-Carlo fallback.
pub fn kernel_expectations<S: Scalar>(
    k: &KernelSpec<S>,
    u: &Vector<S>,
    s: &Matrix<S>,
    x: &[AugmentedInput<S>],
    nodes: usize,
) -> Result<KernelExpectations<S>> {
    if k.family == KernelFamily::SquaredExponential {
        return se_kernel_expectations(k, u, s, x);
    }
    match quadrature_kernel_expectations(k, u, s, x, nodes) {
        Err(Error::DimensionTooLarge { .. }) => Ok(mc_kernel_expectations(k, u, s, x)),
        other => other,
    }
}

fn mc_kernel_expectations<S: Scalar>(
    k: &KernelSpec<S>,
    u: &Vector<S>,
    s: &Matrix<S>,
    x: &[AugmentedInput<S>],
) -> KernelExpectations<S> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(MC_FALLBACK_SEED);
    let active = active_dims(s);
    let sub = Matrix::from_fn(active.len(), active.len(), |i, j| s[(active[i], active[j])]);
    let chol = sub.cholesky().expect("input covariance must be PSD");
    let d = u.len();
    let w = 1.0 / MC_FALLBACK_SAMPLES as f64;
    let mut points = Vec::with_capacity(MC_FALLBACK_SAMPLES);
    for _ in 0..MC_FALLBACK_SAMPLES {
        let eps = Vector::from_fn(active.len(), |_| {
            S::from_f64(rand::Rng::sample::<f64, _>(&mut rng, rand_distr::StandardNormal))
        });
        let shift = chol.matvec(&eps);
        let mut point = Vector::from_fn(d, |i| u[i]);
        for (a, &dim) in active.iter().enumerate() {
            point[dim] = point[dim] + shift[a];
        }
        points.push((point, w));
    }
    expectations_from_points(k, x, &points)
}

fn tensor_points<S: Scalar>(
    u: &Vector<S>,
    s: &Matrix<S>,
    active: &[usize],
    gh_nodes: &[f64],
    gh_weights: &[f64],
) -> Result<Vec<(Vector<S>, f64)>> {
    let d = u.len();
    let da = active.len();
    if da == 0 {
        return Ok(vec![(u.clone(), 1.0)]);
    }
    let sub = Matrix::from_fn(da, da, |i, j| s[(active[i], active[j])]);
    let chol = sub.cholesky()?;
    let n = gh_nodes.len();
    let total = n.pow(da as u32);
    let norm = std::f64::consts::PI.powf(-(da as f64) / 2.0);
    let sqrt2 = std::f64::consts::SQRT_2;
    let mut points = Vec::with_capacity(total);
    let mut index = vec![0usize; da];
    for _ in 0..total {
        let xi = Vector::from_fn(da, |i| S::from_f64(sqrt2 * gh_nodes[index[i]]));
        let shift = chol.matvec(&xi);
        let mut point = Vector::from_fn(d, |i| u[i]);
        let mut weight = norm;
        for (a, &dim) in active.iter().enumerate() {
            point[dim] = point[dim] + shift[a];
            weight *= gh_weights[index[a]];
        }
        points.push((point, weight));
        for slot in index.iter_mut() {
            *slot += 1;
            if *slot < n {
                break;
            }
            *slot = 0;
        }
    }
    Ok(points)
}

fn expectations_from_points<S: Scalar>(
    k: &KernelSpec<S>,
    x: &[AugmentedInput<S>],
    points: &[(Vector<S>, f64)],
) -> KernelExpectations<S> {
    let m = x.len();
    let d = k.input_dim();
    let mut l = S::zero();
    let mut l_vec = Vector::zeros(m);
    let mut l_mat = Matrix::zeros(m, m);
    let mut xk_vec = vec![Vector::zeros(d); m];
    let mut kx = Vector::zeros(m);
    for (point, weight) in points {
        l = l + kernel_eval_unchecked(k, point, point) * *weight;
        for i in 0..m {
            kx[i] = kernel_eval_unchecked(k, point, x[i].full());
        }
        for i in 0..m {
            let wk = kx[i] * *weight;
            l_vec[i] = l_vec[i] + wk;
            for j in i..m {
                l_mat[(i, j)] = l_mat[(i, j)] + wk * kx[j];
            }
            for t in 0..d {
                xk_vec[i][t] = xk_vec[i][t] + wk * point[t];
            }
        }
    }
    for i in 0..m {
        for j in (i + 1)..m {
            l_mat[(j, i)] = l_mat[(i, j)];
        }
    }
    KernelExpectations { l, l_vec, l_mat, xk_vec }
}
