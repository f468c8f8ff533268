//! Abstract diffusion model: drift, diffusion and state-space callbacks,
//! plus runtime regularity diagnostics.
//!
//! A model describes `dX_t = mu(X_t, theta) dt + nu(X_t) dW_t` on an open
//! convex state space, with the drift parameter vector `theta` ranging over
//! a bounded box. All callbacks must be pure; a constructed `ModelSpec` is
//! immutable and safe to share across threads.

use crate::error::{Error, Result};
use crate::numerics::{fd_jacobian, sym_eigen, Mat, DEFAULT_RANK_TOL};

/// Relative step used by the finite-difference fallbacks for
/// theta-derivatives of the drift.
const THETA_FD_STEP: f64 = 1e-6;

type DriftFn = dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync;
type DriftJacFn = dyn Fn(&[f64], &[f64]) -> Mat + Send + Sync;
type DriftHessFn = dyn Fn(&[f64], &[f64], usize, usize) -> Vec<f64> + Send + Sync;
type DiffusionFn = dyn Fn(&[f64]) -> Mat + Send + Sync;
type GradGFn = dyn Fn(&[f64], &[f64], usize) -> Mat + Send + Sync;
type GuardFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;
type MemberFn = dyn Fn(&[f64]) -> bool + Send + Sync;

/// Axis-aligned box standing in for the open, relatively compact, convex
/// parameter space.
#[derive(Debug, Clone)]
pub struct ParameterDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl ParameterDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::RejectedInput("domain bound lengths differ".into()));
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::RejectedInput(format!(
                    "domain bounds invalid at component {i}: [{lo}, {hi}]"
                )));
            }
        }
        Ok(ParameterDomain { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim()
            && theta
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(t, (lo, hi))| t.is_finite() && *lo <= *t && *t <= *hi)
    }

    /// Componentwise clamp onto the box.
    pub fn project(&self, theta: &[f64]) -> Vec<f64> {
        theta
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(t, (lo, hi))| t.clamp(*lo, *hi))
            .collect()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| 0.5 * (lo + hi))
            .collect()
    }

    /// True when some component sits within `tol * (hi - lo)` of a bound.
    pub fn on_boundary(&self, theta: &[f64], tol: f64) -> bool {
        theta
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .any(|(t, (lo, hi))| {
                let margin = tol * (hi - lo);
                t - lo <= margin || hi - t <= margin
            })
    }
}

/// Ellipticity diagnostic over a sample of states.
#[derive(Debug, Clone)]
pub struct EllipticityReport {
    /// Smallest eigenvalue of S(x) over the sample.
    pub min_eigenvalue: f64,
    /// Sampled state attaining the minimum.
    pub arg_min: Vec<f64>,
    /// Whether `min_eigenvalue >= threshold`.
    pub uniform: bool,
}

/// A k-dimensional diffusion with d drift parameters.
pub struct ModelSpec {
    name: String,
    state_dim: usize,
    param_dim: usize,
    drift: Box<DriftFn>,
    drift_jac_theta: Option<Box<DriftJacFn>>,
    drift_hess_theta: Option<Box<DriftHessFn>>,
    diffusion: Box<DiffusionFn>,
    grad_g: Option<Box<GradGFn>>,
    domain_guard: Box<GuardFn>,
    domain_member: Box<MemberFn>,
    drift_affine: bool,
}

impl ModelSpec {
    /// Minimal model: drift and diffusion callbacks, full space as domain.
    /// Theta-derivatives fall back to central finite differences unless
    /// analytic callbacks are supplied with the `with_*` builders.
    pub fn new(
        name: impl Into<String>,
        state_dim: usize,
        param_dim: usize,
        drift: impl Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
        diffusion: impl Fn(&[f64]) -> Mat + Send + Sync + 'static,
    ) -> Self {
        ModelSpec {
            name: name.into(),
            state_dim,
            param_dim,
            drift: Box::new(drift),
            drift_jac_theta: None,
            drift_hess_theta: None,
            diffusion: Box::new(diffusion),
            grad_g: None,
            domain_guard: Box::new(|x| x.to_vec()),
            domain_member: Box::new(|x| x.iter().all(|v| v.is_finite())),
            drift_affine: false,
        }
    }

    pub fn with_drift_jac_theta(
        mut self,
        jac: impl Fn(&[f64], &[f64]) -> Mat + Send + Sync + 'static,
    ) -> Self {
        self.drift_jac_theta = Some(Box::new(jac));
        self
    }

    /// Callback returning the k-vector of second derivatives of the drift
    /// with respect to parameters `i` and `j`.
    pub fn with_drift_hess_theta(
        mut self,
        hess: impl Fn(&[f64], &[f64], usize, usize) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        self.drift_hess_theta = Some(Box::new(hess));
        self
    }

    /// Analytic state-Jacobian of the sensitivity function `g_j`.
    pub fn with_grad_g(
        mut self,
        grad_g: impl Fn(&[f64], &[f64], usize) -> Mat + Send + Sync + 'static,
    ) -> Self {
        self.grad_g = Some(Box::new(grad_g));
        self
    }

    /// State-space guard (projection into the domain) and membership test.
    /// The guard must be idempotent.
    pub fn with_domain(
        mut self,
        guard: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        member: impl Fn(&[f64]) -> bool + Send + Sync + 'static,
    ) -> Self {
        self.domain_guard = Box::new(guard);
        self.domain_member = Box::new(member);
        self
    }

    /// Declares the drift affine in theta: `mu(x, theta) = B(x) theta + c(x)`
    /// with `B = drift_jac_theta` independent of theta. Enables the
    /// closed-form estimator.
    pub fn with_affine_drift(mut self) -> Self {
        self.drift_affine = true;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn param_dim(&self) -> usize {
        self.param_dim
    }

    pub fn is_affine(&self) -> bool {
        self.drift_affine
    }

    pub fn has_analytic_grad_g(&self) -> bool {
        self.grad_g.is_some()
    }

    pub fn in_domain(&self, x: &[f64]) -> bool {
        x.len() == self.state_dim && (self.domain_member)(x)
    }

    pub fn guard(&self, x: &[f64]) -> Vec<f64> {
        (self.domain_guard)(x)
    }

    fn check_state(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.state_dim {
            return Err(Error::RejectedInput(format!(
                "state has length {}, model expects {}",
                x.len(),
                self.state_dim
            )));
        }
        if !(self.domain_member)(x) {
            // Point at the component the guard would move, if any.
            let guarded = self.guard(x);
            let component = x
                .iter()
                .zip(&guarded)
                .position(|(a, b)| a != b)
                .or_else(|| x.iter().position(|v| !v.is_finite()))
                .unwrap_or(0);
            return Err(Error::OutsideDomain { component, value: x[component] });
        }
        Ok(())
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.param_dim {
            return Err(Error::RejectedInput(format!(
                "parameter vector has length {}, model expects {}",
                theta.len(),
                self.param_dim
            )));
        }
        if let Some(i) = theta.iter().position(|v| !v.is_finite()) {
            return Err(Error::RejectedInput(format!(
                "parameter component {i} is not finite"
            )));
        }
        Ok(())
    }

    /// Drift vector `mu(x, theta)`, with input validation.
    pub fn drift(&self, x: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
        self.check_state(x)?;
        self.check_theta(theta)?;
        Ok((self.drift)(x, theta))
    }

    /// Unvalidated drift for inner loops; callers guarantee preconditions.
    pub(crate) fn drift_raw(&self, x: &[f64], theta: &[f64]) -> Vec<f64> {
        (self.drift)(x, theta)
    }

    /// k x d Jacobian of the drift with respect to theta. Analytic when the
    /// model supplies it, otherwise central finite differences with step
    /// `1e-6 * (1 + |theta_j|)`.
    pub fn drift_jacobian(&self, x: &[f64], theta: &[f64]) -> Result<Mat> {
        self.check_state(x)?;
        self.check_theta(theta)?;
        Ok(self.drift_jacobian_raw(x, theta))
    }

    pub(crate) fn drift_jacobian_raw(&self, x: &[f64], theta: &[f64]) -> Mat {
        if let Some(jac) = &self.drift_jac_theta {
            return jac(x, theta);
        }
        fd_jacobian::<std::convert::Infallible>(
            |th| Ok((self.drift)(x, th)),
            theta,
            THETA_FD_STEP,
        )
        .expect("infallible")
    }

    /// Second derivative `d^2 mu / d theta_i d theta_j` as a k-vector.
    pub(crate) fn drift_hessian_slice_raw(
        &self,
        x: &[f64],
        theta: &[f64],
        i: usize,
        j: usize,
    ) -> Vec<f64> {
        if let Some(hess) = &self.drift_hess_theta {
            return hess(x, theta, i, j);
        }
        if self.drift_affine {
            return vec![0.0; self.state_dim];
        }
        // Central difference of the Jacobian column j in direction i.
        let h = THETA_FD_STEP * theta[i].abs().max(1.0);
        let mut tp = theta.to_vec();
        let mut tm = theta.to_vec();
        tp[i] += h;
        tm[i] -= h;
        let jp = self.drift_jacobian_raw(x, &tp);
        let jm = self.drift_jacobian_raw(x, &tm);
        (0..self.state_dim)
            .map(|r| (jp[(r, j)] - jm[(r, j)]) / (2.0 * h))
            .collect()
    }

    /// Diffusion coefficient matrix `nu(x)`.
    pub fn diffusion(&self, x: &[f64]) -> Result<Mat> {
        self.check_state(x)?;
        let nu = (self.diffusion)(x);
        if nu.nrows() != self.state_dim || nu.ncols() != self.state_dim {
            return Err(Error::RejectedInput(format!(
                "diffusion callback returned {}x{}, expected {k}x{k}",
                nu.nrows(),
                nu.ncols(),
                k = self.state_dim
            )));
        }
        Ok(nu)
    }

    pub(crate) fn diffusion_raw(&self, x: &[f64]) -> Mat {
        (self.diffusion)(x)
    }

    /// Diffusion matrix `S(x) = nu(x) nu(x)^T`; exactly symmetric as computed.
    pub fn diffusion_matrix(&self, x: &[f64]) -> Result<Mat> {
        let nu = self.diffusion(x)?;
        Ok(gram(&nu))
    }

    pub(crate) fn diffusion_matrix_raw(&self, x: &[f64]) -> Mat {
        gram(&(self.diffusion)(x))
    }

    /// Sensitivity function `g_j(x, theta) = S^{-1}(x) d mu / d theta_j`.
    /// `j` is zero-based.
    pub fn sensitivity(&self, x: &[f64], theta: &[f64], j: usize) -> Result<Vec<f64>> {
        if j >= self.param_dim {
            return Err(Error::RejectedInput(format!(
                "parameter index {j} out of range for d={}",
                self.param_dim
            )));
        }
        let s = self.diffusion_matrix(x)?;
        let s_inv = invert_diffusion_matrix(&s)?;
        let jac = self.drift_jacobian(x, theta)?;
        let col: Vec<f64> = (0..self.state_dim).map(|r| jac[(r, j)]).collect();
        Ok(s_inv.matvec(&col))
    }

    /// Analytic `grad_x g_j` when the model provides one.
    pub fn grad_g_analytic(&self, x: &[f64], theta: &[f64], j: usize) -> Option<Mat> {
        self.grad_g.as_ref().map(|f| f(x, theta, j))
    }
}

/// `nu nu^T`, summed in a fixed order so the result is exactly symmetric.
fn gram(nu: &Mat) -> Mat {
    let k = nu.nrows();
    let mut s = Mat::zeros(k, k);
    for i in 0..k {
        for j in i..k {
            let mut acc = 0.0;
            for m in 0..nu.ncols() {
                acc += nu[(i, m)] * nu[(j, m)];
            }
            s[(i, j)] = acc;
            s[(j, i)] = acc;
        }
    }
    s
}

/// Inverse of a symmetric positive definite diffusion matrix via its
/// eigendecomposition, so singularity detection shares the pseudo-inverse
/// rank tolerance. Fails when the smallest eigenvalue drops below
/// `DEFAULT_RANK_TOL * lambda_max`, signalling an ellipticity violation.
pub fn invert_diffusion_matrix(s: &Mat) -> Result<Mat> {
    let eig = sym_eigen(s)?;
    let n = eig.eigenvalues.len();
    let lambda_max = eig.eigenvalues[0];
    let lambda_min = eig.eigenvalues[n - 1];
    let positive_definite = lambda_max > 0.0 && lambda_min > DEFAULT_RANK_TOL * lambda_max;
    if !positive_definite {
        return Err(Error::SingularDiffusion { min_eigenvalue: lambda_min });
    }
    let u = &eig.eigenvectors;
    let mut out = Mat::zeros(n, n);
    for l in 0..n {
        let w = 1.0 / eig.eigenvalues[l];
        for i in 0..n {
            for j in i..n {
                out[(i, j)] += w * u[(i, l)] * u[(j, l)];
            }
        }
    }
    for i in 0..n {
        for j in 0..i {
            out[(i, j)] = out[(j, i)];
        }
    }
    Ok(out)
}

/// Smallest eigenvalue of `S(x)` over the supplied sample of states.
///
/// The sample plays the role of the compact set in the uniform ellipticity
/// assumption; in practice it is the set of states visited by a path.
pub fn check_uniform_ellipticity(
    model: &ModelSpec,
    sample: &[Vec<f64>],
    threshold: f64,
) -> Result<EllipticityReport> {
    if sample.is_empty() {
        return Err(Error::RejectedInput("ellipticity check needs a nonempty sample".into()));
    }
    let mut min_eigenvalue = f64::INFINITY;
    let mut arg_min = sample[0].clone();
    for x in sample {
        let s = model.diffusion_matrix(x)?;
        let eig = sym_eigen(&s)?;
        let lam = *eig.eigenvalues.last().expect("nonempty spectrum");
        if lam < min_eigenvalue {
            min_eigenvalue = lam;
            arg_min = x.clone();
        }
    }
    Ok(EllipticityReport {
        min_eigenvalue,
        arg_min,
        uniform: min_eigenvalue >= threshold,
    })
}
