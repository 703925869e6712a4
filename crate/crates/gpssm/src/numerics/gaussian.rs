//! Multivariate Gaussian distributions and the standard closed forms on them.

use crate::error::{Error, Result};
use crate::grad::Scalar;
use crate::numerics::matrix::{Matrix, Vector};

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Multivariate normal with symmetric positive-definite covariance.
#[derive(Clone, Debug)]
pub struct GaussianDist<S = f64> {
    pub mean: Vector<S>,
    pub cov: Matrix<S>,
}

impl<S: Scalar> GaussianDist<S> {
    /// Validates dimensions and symmetry (within `1e-10` relative).
    pub fn new(mean: Vector<S>, cov: Matrix<S>) -> Result<Self> {
        if cov.rows() != cov.cols() || cov.rows() != mean.len() {
            return Err(Error::dim(format!(
                "gaussian mean has length {} but covariance is {}x{}",
                mean.len(),
                cov.rows(),
                cov.cols()
            )));
        }
        if cov.asymmetry() > 1e-10 {
            return Err(Error::InvalidGaussian {
                context: format!("covariance asymmetry {:.3e} exceeds 1e-10", cov.asymmetry()),
            });
        }
        Ok(GaussianDist { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Isotropic Gaussian, mostly for tests and initial states.
    pub fn isotropic(mean: Vector<S>, variance: f64) -> Self {
        let n = mean.len();
        let cov = Matrix::from_fn(n, n, |i, j| {
            if i == j {
                S::from_f64(variance)
            } else {
                S::zero()
            }
        });
        GaussianDist { mean, cov }
    }

    pub fn to_f64(&self) -> GaussianDist<f64> {
        GaussianDist { mean: self.mean.to_f64(), cov: self.cov.to_f64() }
    }
}

/// log N(x | mean, cov).
pub fn gaussian_logpdf<S: Scalar>(x: &Vector<S>, g: &GaussianDist<S>) -> Result<S> {
    if x.len() != g.dim() {
        return Err(Error::dim(format!("logpdf point has length {}, gaussian dim {}", x.len(), g.dim())));
    }
    logpdf_mean_cov(x, &g.mean, &g.cov)
}

/// log N(x | mean, cov) without constructing a distribution value.
pub fn logpdf_mean_cov<S: Scalar>(x: &Vector<S>, mean: &Vector<S>, cov: &Matrix<S>) -> Result<S> {
    let chol = cov.cholesky()?;
    let diff = x.sub(mean);
    let z = chol.solve_lower(&diff);
    let quad = z.dot(&z);
    let logdet = chol.chol_logdet();
    let d = x.len() as f64;
    Ok((quad + logdet + d * LN_2PI) * -0.5)
}

/// log N(x | mean, L L^T) given the lower Cholesky factor of the covariance.
pub fn logpdf_with_chol<S: Scalar>(x: &Vector<S>, mean: &Vector<S>, chol: &Matrix<S>) -> S {
    let diff = x.sub(mean);
    let z = chol.solve_lower(&diff);
    let quad = z.dot(&z);
    let logdet = chol.chol_logdet();
    (quad + logdet + x.len() as f64 * LN_2PI) * -0.5
}

/// KL[q || p] between two Gaussians of equal dimension.
pub fn gaussian_kl<S: Scalar>(q: &GaussianDist<S>, p: &GaussianDist<S>) -> Result<S> {
    if q.dim() != p.dim() {
        return Err(Error::dim(format!("KL between dims {} and {}", q.dim(), p.dim())));
    }
    let chol_p = p.cov.cholesky()?;
    let chol_q = q.cov.cholesky()?;
    kl_from_chol(&q.mean, &chol_q, &p.mean, &chol_p)
}

/// KL[q || p] given the lower Cholesky factors of both covariances.
pub fn kl_from_chol<S: Scalar>(
    mean_q: &Vector<S>,
    chol_q: &Matrix<S>,
    mean_p: &Vector<S>,
    chol_p: &Matrix<S>,
) -> Result<S> {
    let n = mean_q.len();
    // tr(P^{-1} Q) = || L_p^{-1} L_q ||_F^2
    let mut trace = S::zero();
    for j in 0..n {
        let col = Vector::from_fn(n, |i| chol_q[(i, j)]);
        let w = chol_p.solve_lower(&col);
        trace = trace + w.dot(&w);
    }
    let diff = mean_p.sub(mean_q);
    let z = chol_p.solve_lower(&diff);
    let maha = z.dot(&z);
    let logdet_ratio = chol_p.chol_logdet() - chol_q.chol_logdet();
    Ok((trace + maha + logdet_ratio - n as f64) * 0.5)
}

/// Differential entropy `0.5 * logdet(2 pi e cov)`.
pub fn gaussian_entropy<S: Scalar>(cov: &Matrix<S>) -> Result<S> {
    let chol = cov.cholesky()?;
    let d = cov.rows() as f64;
    Ok((chol.chol_logdet() + d * (LN_2PI + 1.0)) * 0.5)
}
