//! Discretized mixed-normal covariance, the normalized test statistic and
//! coverage utilities.
//!
//! For a parameter index `j`, the sensitivity function is
//! `g_j(x, theta) = S^{-1}(x) d_j mu(x, theta)`; its state-Jacobian drives
//! the covariance discretization
//!
//! ```text
//! Sigma_n(theta)_{jl} = (dt/2) sum_i sum_{p,r} S_{pr}(X_{i-1})
//!     < row_r(grad g_j nu) | row_p(grad g_l nu) >  at X_{i-1}
//! ```
//!
//! and the scalar statistic compares the subsample estimate against the
//! fine-grid reference through the whitening
//! `|| (1/sqrt(dt)) pinv_sqrt(Sigma_n) D2l_n (theta_bar - theta_hat) ||^2`.

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::numerics::{
    chi2_quantile, pinv_sqrt_with_rank, sqrt_psd, Mat, NoiseSource, DEFAULT_RANK_TOL,
};
use crate::simulate::Path;

/// Relative step for the finite-difference fallback of `grad g_j`.
const GRAD_G_FD_STEP: f64 = 1e-5;

/// Everything the coverage decision needs about one replicate.
#[derive(Debug, Clone)]
pub struct AsymptoticReport {
    pub sigma_n: Mat,
    pub hessian: Mat,
    /// Numerical rank of `sigma_n` at the supplied tolerance.
    pub rank: usize,
    pub pinv_sqrt_sigma: Mat,
    /// The nonnegative scalar statistic.
    pub statistic: f64,
    pub dt: f64,
}

/// State-Jacobian of the sensitivity function `g_j`.
///
/// Uses the model's analytic callback when present; otherwise central finite
/// differences of `g_j`, with the step shrunk once by 10x if the stencil
/// leaves the state space.
pub fn grad_g(model: &ModelSpec, x: &[f64], theta: &[f64], j: usize) -> Result<Mat> {
    if let Some(m) = model.grad_g_analytic(x, theta, j) {
        return Ok(m);
    }
    let k = model.state_dim();
    let mut out = Mat::zeros(k, k);
    for m in 0..k {
        let mut h = GRAD_G_FD_STEP * x[m].abs().max(1.0);
        let mut stencil = None;
        for _attempt in 0..2 {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[m] += h;
            xm[m] -= h;
            if model.in_domain(&xp) && model.in_domain(&xm) {
                stencil = Some((xp, xm));
                break;
            }
            h /= 10.0;
        }
        let (xp, xm) = stencil.ok_or(Error::OutsideDomain { component: m, value: x[m] })?;
        let gp = model.sensitivity(&xp, theta, j)?;
        let gm = model.sensitivity(&xm, theta, j)?;
        for r in 0..k {
            out[(r, m)] = (gp[r] - gm[r]) / (2.0 * h);
        }
    }
    Ok(out)
}

/// trace(S * A * B^T) for square matrices of equal order.
fn trace_product(s: &Mat, a: &Mat, b: &Mat) -> f64 {
    let k = s.nrows();
    let mut acc = 0.0;
    for p in 0..k {
        for r in 0..k {
            let mut ab = 0.0;
            for m in 0..k {
                ab += a[(r, m)] * b[(p, m)];
            }
            acc += s[(p, r)] * ab;
        }
    }
    acc
}

/// Riemann-sum discretization of the asymptotic covariance along a path,
/// evaluated at `theta` and symmetrized against rounding skew.
pub fn sigma_n(model: &ModelSpec, path: &Path, theta: &[f64]) -> Result<Mat> {
    let k = model.state_dim();
    let d = model.param_dim();
    if path.dim() != k {
        return Err(Error::RejectedInput(format!(
            "path dimension {} does not match model state dimension {k}",
            path.dim()
        )));
    }
    let n = path.n_steps();
    let mut acc = Mat::zeros(d, d);
    let mut sensitivities: Vec<Mat> = Vec::with_capacity(d);
    for i in 0..n {
        let x = path.state(i);
        let nu = model.diffusion_raw(x);
        let s = model.diffusion_matrix_raw(x);
        sensitivities.clear();
        for j in 0..d {
            sensitivities.push(grad_g(model, x, theta, j)?.matmul(&nu));
        }
        for j in 0..d {
            for l in j..d {
                let v = trace_product(&s, &sensitivities[j], &sensitivities[l]);
                acc[(j, l)] += v;
                if l != j {
                    acc[(l, j)] += v;
                }
            }
        }
    }
    Ok(acc.scaled(0.5 * path.grid().dt()).symmetrized())
}

/// Builds the normalized statistic report from its ingredients.
///
/// `statistic = || (1/sqrt(dt)) pinv_sqrt(sigma_n) hessian (theta_bar -
/// theta_hat) ||_2^2`; the degrees-of-freedom candidate is the numerical
/// rank of `sigma_n`.
pub fn mixed_normal_statistic(
    sigma: &Mat,
    hessian: &Mat,
    theta_bar: &[f64],
    theta_hat: &[f64],
    dt: f64,
    rank_tol: f64,
) -> Result<AsymptoticReport> {
    let d = sigma.nrows();
    if !sigma.is_square() || !hessian.is_square() || hessian.nrows() != d {
        return Err(Error::RejectedInput("covariance and Hessian must be square, same order".into()));
    }
    if theta_bar.len() != d || theta_hat.len() != d {
        return Err(Error::RejectedInput("parameter vectors must match the matrix order".into()));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::RejectedInput(format!("dt must be positive, got {dt}")));
    }
    if sigma.max_asymmetry() > 1e-12 * sigma.max_abs().max(f64::MIN_POSITIVE) {
        return Err(Error::RejectedInput("sigma_n is not symmetric".into()));
    }

    let (whitener, rank) = pinv_sqrt_with_rank(&sigma.symmetrized(), rank_tol)?;
    let diff: Vec<f64> = theta_bar.iter().zip(theta_hat).map(|(a, b)| a - b).collect();
    let projected = whitener.matvec(&hessian.matvec(&diff));
    let statistic = projected.iter().map(|v| v * v).sum::<f64>() / dt;
    Ok(AsymptoticReport {
        sigma_n: sigma.clone(),
        hessian: hessian.clone(),
        rank,
        pinv_sqrt_sigma: whitener,
        statistic,
        dt,
    })
}

/// Fraction of statistics inside `[0, chi2_quantile(p_tail, df)]`.
pub fn coverage(statistics: &[f64], p_tail: f64, df: usize) -> Result<f64> {
    if statistics.is_empty() {
        return Err(Error::RejectedInput("coverage needs at least one statistic".into()));
    }
    if let Some(bad) = statistics.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::RejectedInput(format!(
            "statistics must be finite and nonnegative, found {bad}"
        )));
    }
    let threshold = chi2_quantile(p_tail, df)?;
    let inside = statistics.iter().filter(|&&v| v <= threshold).count();
    Ok(inside as f64 / statistics.len() as f64)
}

/// One draw from the mixed normal law `MN(0, C)`: the symmetric PSD square
/// root of `C` applied to a standard normal vector from the given stream.
pub fn sample_mixed_normal(c: &Mat, noise: &NoiseSource) -> Result<Vec<f64>> {
    let root = sqrt_psd(c, DEFAULT_RANK_TOL)?;
    let z = noise.gaussians().take(c.nrows());
    Ok(root.matvec(&z))
}
