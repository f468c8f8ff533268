//! Maximizers of the approximate log-likelihood: the closed-form solver for
//! drift affine in theta, a safeguarded Newton ascent for everything else,
//! and the fine-grid reference estimate.

use crate::error::{Error, Result};
use crate::likelihood::LikelihoodContext;
use crate::model::{ModelSpec, ParameterDomain};
use crate::numerics::{solve_linear, sym_eigen};
use crate::simulate::Path;

/// Default gradient tolerance, scaled by `1 + |l_n|` at the candidate.
pub const DEFAULT_GRAD_TOL: f64 = 1e-10;

/// Default Newton iteration cap.
pub const DEFAULT_MAX_ITER: usize = 100;

/// Relative margin at which an iterate counts as sitting on the boundary of
/// the parameter box.
const BOUNDARY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorMethod {
    ClosedFormLinear,
    Newton,
}

/// An estimate with its solver diagnostics.
///
/// `converged` requires a small gradient, a negative definite Hessian at the
/// estimate, and (for the Newton solver) an interior point: a maximizer on
/// the boundary of the box violates the interior stationarity the asymptotic
/// theory assumes, so it is reported with `converged = false` and
/// `on_boundary = true`.
#[derive(Debug, Clone)]
pub struct EstimateResult {
    pub theta: Vec<f64>,
    /// Infinity norm of the likelihood gradient at `theta`, re-evaluated
    /// independently of the solver path.
    pub grad_norm: f64,
    /// Largest eigenvalue of the likelihood Hessian at `theta`; negative
    /// values certify a local maximum.
    pub hessian_max_eigenvalue: f64,
    pub converged: bool,
    pub iterations: usize,
    pub method: EstimatorMethod,
    pub on_boundary: bool,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Closed-form maximizer for models with drift affine in theta.
///
/// Solves the stationarity system `dt sum(B^T S^{-1} B) theta = r` of the
/// quadratic log-likelihood. A singular system (for instance a constant
/// path) is reported as non-identified.
pub fn amle_linear(model: &ModelSpec, path: &Path) -> Result<EstimateResult> {
    let ctx = LikelihoodContext::new(model, path)?;
    amle_linear_with(&ctx)
}

/// As `amle_linear`, reusing an existing evaluation context.
pub fn amle_linear_with(ctx: &LikelihoodContext<'_>) -> Result<EstimateResult> {
    let (gram, rhs) = ctx.normal_equations()?;
    let scaled = gram.scaled(ctx.dt());
    let theta = solve_linear(&scaled, &rhs).map_err(|e| match e {
        Error::SingularSystem { pivot } => Error::NonIdentified(format!(
            "normal equations are singular (pivot {pivot:.3e}); the path does not identify theta"
        )),
        other => other,
    })?;
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonIdentified("normal equations produced non-finite values".into()));
    }

    let value = ctx.value(&theta)?;
    let grad_norm = inf_norm(&ctx.gradient(&theta)?);
    // For affine drift the Hessian is -dt * Gram, independent of theta.
    let hessian = scaled.scaled(-1.0);
    let eig = sym_eigen(&hessian.symmetrized())?;
    let hessian_max_eigenvalue = eig.eigenvalues[0];
    let tol_eff = DEFAULT_GRAD_TOL * (1.0 + value.abs());
    Ok(EstimateResult {
        theta,
        grad_norm,
        hessian_max_eigenvalue,
        converged: hessian_max_eigenvalue < 0.0 && grad_norm <= tol_eff,
        iterations: 0,
        method: EstimatorMethod::ClosedFormLinear,
        on_boundary: false,
    })
}

/// Damped Newton ascent on `l_n` over a parameter box.
///
/// Each step solves the Newton system (falling back to gradient ascent when
/// the Hessian is singular), halves the step until the likelihood stops
/// decreasing, and projects onto the box. Convergence means a gradient below
/// `tol * (1 + |l_n|)` at an interior point with negative definite Hessian.
/// Exceeding `max_iter` yields a result with `converged = false`, not an
/// error.
pub fn amle_newton(
    model: &ModelSpec,
    path: &Path,
    domain: &ParameterDomain,
    init: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<EstimateResult> {
    if domain.dim() != model.param_dim() {
        return Err(Error::RejectedInput(format!(
            "domain dimension {} does not match model parameter dimension {}",
            domain.dim(),
            model.param_dim()
        )));
    }
    if !domain.contains(init) {
        return Err(Error::RejectedInput(
            "initial point lies outside the parameter box".into(),
        ));
    }
    let ctx = LikelihoodContext::new(model, path)?;

    let mut theta = init.to_vec();
    let mut value = ctx.value(&theta)?;
    let mut iterations = 0;

    while iterations < max_iter {
        let grad = ctx.gradient(&theta)?;
        if inf_norm(&grad) <= tol * (1.0 + value.abs()) {
            break;
        }
        let hessian = ctx.hessian(&theta)?;
        // Ascent direction: solve (-H) p = g; gradient ascent on failure.
        let neg_hessian = hessian.scaled(-1.0);
        let direction = match solve_linear(&neg_hessian, &grad) {
            Ok(p) => p,
            Err(_) => grad.clone(),
        };

        // Near the maximum a full Newton step no longer changes the value
        // at float resolution but still collapses the gradient, so the
        // ascent test tolerates rounding-level decreases.
        let noise_floor = 1e-13 * (1.0 + value.abs());
        let mut step = 1.0;
        let mut moved = false;
        while step > 1e-16 {
            let candidate: Vec<f64> = theta
                .iter()
                .zip(&direction)
                .map(|(t, p)| t + step * p)
                .collect();
            let candidate = domain.project(&candidate);
            let cand_value = ctx.value(&candidate)?;
            if cand_value >= value - noise_floor && candidate != theta {
                theta = candidate;
                value = cand_value.max(value);
                moved = true;
                break;
            }
            step *= 0.5;
        }
        iterations += 1;
        if !moved {
            break; // stalled: no ascent possible along this direction
        }
    }

    // Convergence is judged from the terminus alone: stationary gradient,
    // negative definite Hessian, interior point.
    let grad_norm = inf_norm(&ctx.gradient(&theta)?);
    let hessian = ctx.hessian(&theta)?;
    let eig = sym_eigen(&hessian.symmetrized())?;
    let hessian_max_eigenvalue = eig.eigenvalues[0];
    let on_boundary = domain.on_boundary(&theta, BOUNDARY_TOL);
    let grad_ok = grad_norm <= tol * (1.0 + value.abs());
    Ok(EstimateResult {
        theta,
        grad_norm,
        hessian_max_eigenvalue,
        converged: grad_ok && hessian_max_eigenvalue < 0.0 && !on_boundary,
        iterations,
        method: EstimatorMethod::Newton,
        on_boundary,
    })
}

/// Reference estimate on the finest grid, standing in for the
/// continuous-observation MLE: the closed-form solver for affine models,
/// Newton from the box center otherwise (which then requires a domain).
pub fn mle_proxy(
    model: &ModelSpec,
    fine_path: &Path,
    domain: Option<&ParameterDomain>,
) -> Result<EstimateResult> {
    if !fine_path.n_steps().is_power_of_two() {
        return Err(Error::RejectedInput(format!(
            "fine grid must have 2^l steps, got {}",
            fine_path.n_steps()
        )));
    }
    if model.is_affine() {
        amle_linear(model, fine_path)
    } else {
        let domain = domain.ok_or_else(|| {
            Error::RejectedInput("nonlinear models need a parameter box for the proxy".into())
        })?;
        amle_newton(
            model,
            fine_path,
            domain,
            &domain.center(),
            DEFAULT_GRAD_TOL,
            DEFAULT_MAX_ITER,
        )
    }
}
