//! The approximate log-likelihood of a discrete observation and its first
//! and second theta-derivatives.
//!
//! For a path `(X_i)` with step `dt`,
//!
//! ```text
//! l_n(theta) = sum_i <S^{-1}(X_{i-1}) mu(X_{i-1}, theta) | X_i - X_{i-1}>
//!            - (dt/2) sum_i <S^{-1}(X_{i-1}) mu(X_{i-1}, theta) | mu(X_{i-1}, theta)>
//! ```
//!
//! The theta-free additive constant of the exact discrete likelihood is
//! dropped, so values are comparable only within a fixed path and grid.

use crate::error::{Error, Result};
use crate::model::{invert_diffusion_matrix, ModelSpec};
use crate::numerics::Mat;
use crate::simulate::Path;

/// Value, gradient and Hessian of `l_n` at one parameter point.
#[derive(Debug, Clone)]
pub struct LikelihoodEvaluation {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub hessian: Mat,
}

/// Evaluation context for one `(model, path)` pair.
///
/// Construction inverts the diffusion matrix once per grid point and caches
/// the result; the estimator, the Hessian and the covariance discretization
/// all reuse the same inverses. Contexts are cheap to read concurrently and
/// never mutated after construction.
pub struct LikelihoodContext<'a> {
    model: &'a ModelSpec,
    path: &'a Path,
    dt: f64,
    /// Flattened k*k blocks, entry i holds S^{-1}(X_i) for i = 0..n-1.
    s_inv: Vec<f64>,
}

impl<'a> LikelihoodContext<'a> {
    pub fn new(model: &'a ModelSpec, path: &'a Path) -> Result<Self> {
        let k = model.state_dim();
        if path.dim() != k {
            return Err(Error::RejectedInput(format!(
                "path dimension {} does not match model state dimension {k}",
                path.dim()
            )));
        }
        let n = path.n_steps();
        let mut s_inv = vec![0.0; n * k * k];
        for i in 0..n {
            let s = model.diffusion_matrix_raw(path.state(i));
            let inv = invert_diffusion_matrix(&s).map_err(|e| match e {
                Error::SingularDiffusion { .. } => Error::SingularDiffusionAt { index: i },
                other => other,
            })?;
            s_inv[i * k * k..(i + 1) * k * k].copy_from_slice(inv.as_slice());
        }
        Ok(LikelihoodContext { model, path, dt: path.grid().dt(), s_inv })
    }

    pub fn model(&self) -> &ModelSpec {
        self.model
    }

    pub fn path(&self) -> &Path {
        self.path
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Cached `S^{-1}(X_i)` as a flat k*k row-major block.
    pub(crate) fn s_inv_block(&self, i: usize) -> &[f64] {
        let kk = self.model.state_dim() * self.model.state_dim();
        &self.s_inv[i * kk..(i + 1) * kk]
    }

    fn apply_s_inv(&self, i: usize, v: &[f64], out: &mut [f64]) {
        let k = v.len();
        let block = self.s_inv_block(i);
        for r in 0..k {
            let mut acc = 0.0;
            for c in 0..k {
                acc += block[r * k + c] * v[c];
            }
            out[r] = acc;
        }
    }

    /// `l_n(theta)`.
    pub fn value(&self, theta: &[f64]) -> Result<f64> {
        self.check_theta(theta)?;
        let k = self.model.state_dim();
        let n = self.path.n_steps();
        let mut drift_term = 0.0;
        let mut quad_term = 0.0;
        let mut w = vec![0.0; k];
        for i in 0..n {
            let x = self.path.state(i);
            let x_next = self.path.state(i + 1);
            let mu = self.model.drift_raw(x, theta);
            self.apply_s_inv(i, &mu, &mut w);
            for l in 0..k {
                drift_term += w[l] * (x_next[l] - x[l]);
                quad_term += w[l] * mu[l];
            }
        }
        Ok(drift_term - 0.5 * self.dt * quad_term)
    }

    /// Gradient of `l_n`: component j is
    /// `sum_i <S^{-1} d_j mu | (X_i - X_{i-1}) - dt mu>`.
    pub fn gradient(&self, theta: &[f64]) -> Result<Vec<f64>> {
        self.check_theta(theta)?;
        let k = self.model.state_dim();
        let d = self.model.param_dim();
        let n = self.path.n_steps();
        let mut grad = vec![0.0; d];
        let mut residual = vec![0.0; k];
        let mut w = vec![0.0; k];
        for i in 0..n {
            let x = self.path.state(i);
            let x_next = self.path.state(i + 1);
            let mu = self.model.drift_raw(x, theta);
            for l in 0..k {
                residual[l] = (x_next[l] - x[l]) - self.dt * mu[l];
            }
            self.apply_s_inv(i, &residual, &mut w);
            let jac = self.model.drift_jacobian_raw(x, theta);
            for j in 0..d {
                let mut acc = 0.0;
                for l in 0..k {
                    acc += jac[(l, j)] * w[l];
                }
                grad[j] += acc;
            }
        }
        Ok(grad)
    }

    /// Hessian of `l_n`; symmetric by construction. The curvature term
    /// `-dt sum <d_i mu | S^{-1} d_j mu>` is always present; the second
    /// derivative of the drift contributes only for non-affine models.
    pub fn hessian(&self, theta: &[f64]) -> Result<Mat> {
        self.check_theta(theta)?;
        let k = self.model.state_dim();
        let d = self.model.param_dim();
        let n = self.path.n_steps();
        let affine = self.model.is_affine();

        let mut h = Mat::zeros(d, d);
        let mut residual = vec![0.0; k];
        let mut w = vec![0.0; k];
        let mut sjac = vec![0.0; k * d];
        for i in 0..n {
            let x = self.path.state(i);
            let jac = self.model.drift_jacobian_raw(x, theta);
            let block = self.s_inv_block(i);
            // sjac = S^{-1} B
            for r in 0..k {
                for j in 0..d {
                    let mut acc = 0.0;
                    for c in 0..k {
                        acc += block[r * k + c] * jac[(c, j)];
                    }
                    sjac[r * d + j] = acc;
                }
            }
            for a in 0..d {
                for b in a..d {
                    let mut acc = 0.0;
                    for l in 0..k {
                        acc += jac[(l, a)] * sjac[l * d + b];
                    }
                    h[(a, b)] -= self.dt * acc;
                }
            }
            if !affine {
                let x_next = self.path.state(i + 1);
                let mu = self.model.drift_raw(x, theta);
                for l in 0..k {
                    residual[l] = (x_next[l] - x[l]) - self.dt * mu[l];
                }
                self.apply_s_inv(i, &residual, &mut w);
                for a in 0..d {
                    for b in a..d {
                        let curv = self.model.drift_hessian_slice_raw(x, theta, a, b);
                        let mut acc = 0.0;
                        for l in 0..k {
                            acc += curv[l] * w[l];
                        }
                        h[(a, b)] += acc;
                    }
                }
            }
        }
        for a in 0..d {
            for b in 0..a {
                h[(a, b)] = h[(b, a)];
            }
        }
        Ok(h)
    }

    pub fn evaluate(&self, theta: &[f64]) -> Result<LikelihoodEvaluation> {
        Ok(LikelihoodEvaluation {
            value: self.value(theta)?,
            gradient: self.gradient(theta)?,
            hessian: self.hessian(theta)?,
        })
    }

    /// Accumulated normal-equation pieces for affine drift
    /// `mu(x, theta) = B(x) theta + c(x)`:
    /// returns `(G, r)` with `G = sum B^T S^{-1} B` and
    /// `r = sum B^T S^{-1} (dX - dt c)`, so stationarity reads
    /// `dt G theta = r`.
    pub(crate) fn normal_equations(&self) -> Result<(Mat, Vec<f64>)> {
        if !self.model.is_affine() {
            return Err(Error::RejectedInput(
                "normal equations need a model with affine drift".into(),
            ));
        }
        let k = self.model.state_dim();
        let d = self.model.param_dim();
        let n = self.path.n_steps();
        let zero_theta = vec![0.0; d];
        let mut gram = Mat::zeros(d, d);
        let mut rhs = vec![0.0; d];
        let mut residual = vec![0.0; k];
        let mut w = vec![0.0; k];
        let mut sjac = vec![0.0; k * d];
        for i in 0..n {
            let x = self.path.state(i);
            let x_next = self.path.state(i + 1);
            let jac = self.model.drift_jacobian_raw(x, &zero_theta);
            let offset = self.model.drift_raw(x, &zero_theta);
            let block = self.s_inv_block(i);
            for r in 0..k {
                for j in 0..d {
                    let mut acc = 0.0;
                    for c in 0..k {
                        acc += block[r * k + c] * jac[(c, j)];
                    }
                    sjac[r * d + j] = acc;
                }
            }
            for a in 0..d {
                for b in a..d {
                    let mut acc = 0.0;
                    for l in 0..k {
                        acc += jac[(l, a)] * sjac[l * d + b];
                    }
                    gram[(a, b)] += acc;
                }
            }
            for l in 0..k {
                residual[l] = (x_next[l] - x[l]) - self.dt * offset[l];
            }
            self.apply_s_inv(i, &residual, &mut w);
            for j in 0..d {
                let mut acc = 0.0;
                for l in 0..k {
                    acc += jac[(l, j)] * w[l];
                }
                rhs[j] += acc;
            }
        }
        for a in 0..d {
            for b in 0..a {
                gram[(a, b)] = gram[(b, a)];
            }
        }
        Ok((gram, rhs))
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.model.param_dim() {
            return Err(Error::RejectedInput(format!(
                "parameter vector has length {}, model expects {}",
                theta.len(),
                self.model.param_dim()
            )));
        }
        Ok(())
    }
}

/// One-shot `l_n(theta)`; builds a fresh context.
pub fn loglik_n(model: &ModelSpec, path: &Path, theta: &[f64]) -> Result<f64> {
    LikelihoodContext::new(model, path)?.value(theta)
}

/// One-shot gradient of `l_n`.
pub fn grad_loglik_n(model: &ModelSpec, path: &Path, theta: &[f64]) -> Result<Vec<f64>> {
    LikelihoodContext::new(model, path)?.gradient(theta)
}

/// One-shot Hessian of `l_n`.
pub fn hess_loglik_n(model: &ModelSpec, path: &Path, theta: &[f64]) -> Result<Mat> {
    LikelihoodContext::new(model, path)?.hessian(theta)
}
