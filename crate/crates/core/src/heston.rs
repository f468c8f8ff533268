//! Heston stochastic volatility system, used both as a registered model and
//! as the closed-form oracle layer for the generic estimation machinery.
//!
//! State order is `(Y, X)` with
//!
//! ```text
//! dY = (a - b Y) dt + sigma1 sqrt(Y) dW1
//! dX = (alpha - beta Y) dt + sigma2 sqrt(Y) (rho dW1 + sqrt(1-rho^2) dW2)
//! ```
//!
//! and drift parameter vector `theta = (a, b, alpha, beta)`. The volatility
//! scales `sigma1`, `sigma2` and the driver correlation `rho` are treated as
//! known. Everything in this module reduces to explicit formulas: the drift
//! estimator, the discretized asymptotic covariance and the log-likelihood
//! Hessian; the generic modules must reproduce these to tight tolerances.

use crate::error::{Error, Result};
use crate::estimator::{mle_proxy, EstimateResult};
use crate::model::ModelSpec;
use crate::numerics::{kron, Mat};
use crate::simulate::Path;

/// Floor applied to the volatility factor by the domain guard. Euler steps
/// can produce tiny negative Y excursions; clamping keeps the 1/Y terms of
/// the estimator finite.
pub const Y_FLOOR: f64 = 1e-12;

/// Full parameter set of the Heston system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HestonParams {
    pub a: f64,
    pub b: f64,
    pub alpha: f64,
    pub beta: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub rho: f64,
    pub y0: f64,
    pub x0: f64,
    pub horizon: f64,
}

impl Default for HestonParams {
    /// The simulation-study parameter set.
    fn default() -> Self {
        HestonParams {
            a: 2.0,
            b: -0.8,
            alpha: 0.02,
            beta: 2.0,
            sigma1: 0.7,
            sigma2: 0.6,
            rho: -0.8,
            y0: 0.5,
            x0: 100.0f64.ln(),
            horizon: 1.0,
        }
    }
}

impl HestonParams {
    pub fn validate(&self) -> Result<()> {
        let all_finite = [
            self.a, self.b, self.alpha, self.beta, self.sigma1, self.sigma2, self.rho, self.y0,
            self.x0, self.horizon,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::RejectedInput("Heston parameters must be finite".into()));
        }
        if self.sigma1 <= 0.0 || self.sigma2 <= 0.0 {
            return Err(Error::RejectedInput("volatility scales must be positive".into()));
        }
        if self.rho.abs() >= 1.0 {
            return Err(Error::RejectedInput(format!(
                "correlation must lie in (-1,1), got {}",
                self.rho
            )));
        }
        if self.y0 <= 0.0 {
            return Err(Error::RejectedInput("initial volatility must be positive".into()));
        }
        if self.horizon <= 0.0 {
            return Err(Error::RejectedInput("horizon must be positive".into()));
        }
        Ok(())
    }

    /// Whether `a >= sigma1^2 / 2`, the condition keeping the volatility
    /// factor strictly positive and the estimator well defined.
    pub fn feller_ok(&self) -> bool {
        self.a >= 0.5 * self.sigma1 * self.sigma1
    }

    /// Drift parameter vector `(a, b, alpha, beta)`.
    pub fn theta(&self) -> Vec<f64> {
        vec![self.a, self.b, self.alpha, self.beta]
    }

    /// Initial state `(y0, x0)`.
    pub fn initial_state(&self) -> Vec<f64> {
        vec![self.y0, self.x0]
    }
}

/// Builds the `ModelSpec` for the Heston system with analytic
/// theta-derivatives and analytic sensitivity Jacobians.
pub fn heston_model(params: &HestonParams) -> Result<ModelSpec> {
    params.validate()?;
    let HestonParams { sigma1, sigma2, rho, .. } = *params;
    let one_minus_rho2 = 1.0 - rho * rho;

    let diffusion = move |x: &[f64]| {
        let y = x[0].max(0.0);
        let sy = y.sqrt();
        Mat::from_rows(&[
            &[sigma1 * sy, 0.0],
            &[sigma2 * rho * sy, sigma2 * (one_minus_rho2 * y).sqrt()],
        ])
    };

    // grad_x g_j for the two state-dependent sensitivities; g_b and g_beta
    // are constant in the state, so their Jacobians vanish.
    let grad_g = move |x: &[f64], _theta: &[f64], j: usize| -> Mat {
        let y = x[0];
        let factor = 1.0 / (one_minus_rho2 * y * y);
        match j {
            0 => Mat::from_rows(&[
                &[-factor / (sigma1 * sigma1), 0.0],
                &[factor * rho / (sigma1 * sigma2), 0.0],
            ]),
            2 => Mat::from_rows(&[
                &[factor * rho / (sigma1 * sigma2), 0.0],
                &[-factor / (sigma2 * sigma2), 0.0],
            ]),
            _ => Mat::zeros(2, 2),
        }
    };

    Ok(ModelSpec::new(
        "heston",
        2,
        4,
        |x, th| vec![th[0] - th[1] * x[0], th[2] - th[3] * x[0]],
        diffusion,
    )
    .with_drift_jac_theta(|x, _th| {
        Mat::from_rows(&[&[1.0, -x[0], 0.0, 0.0], &[0.0, 0.0, 1.0, -x[0]]])
    })
    .with_drift_hess_theta(|_x, _th, _i, _j| vec![0.0, 0.0])
    .with_grad_g(grad_g)
    .with_domain(
        |x| vec![x[0].max(Y_FLOOR), x[1]],
        |x| x[0] > 0.0 && x.iter().all(|v| v.is_finite()),
    )
    .with_affine_drift())
}

struct PathSums {
    dt: f64,
    horizon: f64,
    sum_y: f64,
    sum_inv_y: f64,
    sum_dy_over_y: f64,
    sum_dx_over_y: f64,
    sum_inv_y2: f64,
    y_net: f64,
    x_net: f64,
}

fn accumulate(path: &Path) -> Result<PathSums> {
    if path.dim() != 2 {
        return Err(Error::RejectedInput(format!(
            "Heston formulas need 2-dimensional paths, got dimension {}",
            path.dim()
        )));
    }
    let n = path.n_steps();
    let mut sums = PathSums {
        dt: path.grid().dt(),
        horizon: path.grid().horizon(),
        sum_y: 0.0,
        sum_inv_y: 0.0,
        sum_dy_over_y: 0.0,
        sum_dx_over_y: 0.0,
        sum_inv_y2: 0.0,
        y_net: path.last_state()[0] - path.first_state()[0],
        x_net: path.last_state()[1] - path.first_state()[1],
    };
    for i in 1..=n {
        let prev = path.state(i - 1);
        let cur = path.state(i);
        let y = prev[0];
        if y <= 0.0 {
            return Err(Error::SingularDiffusionAt { index: i - 1 });
        }
        sums.sum_y += y;
        sums.sum_inv_y += 1.0 / y;
        sums.sum_inv_y2 += 1.0 / (y * y);
        sums.sum_dy_over_y += (cur[0] - prev[0]) / y;
        sums.sum_dx_over_y += (cur[1] - prev[1]) / y;
    }
    Ok(sums)
}

/// Closed-form drift estimator `(a, b, alpha, beta)` on a discrete path.
///
/// The prefactor `F = (dt^2 sum(Y) sum(1/Y) - T^2)^{-1}` exists whenever the
/// volatility factor is not constant on the grid (Cauchy-Schwarz); constant
/// paths are reported as non-identified. The volatility scales and the
/// correlation cancel and do not enter.
pub fn heston_amle(path: &Path) -> Result<Vec<f64>> {
    let s = accumulate(path)?;
    let t = s.horizon;
    let denominator = s.dt * s.dt * s.sum_y * s.sum_inv_y - t * t;
    if denominator <= 1e-10 * t * t {
        return Err(Error::NonIdentified(
            "volatility factor is constant on the grid".into(),
        ));
    }
    let f = 1.0 / denominator;
    Ok(vec![
        f * (s.dt * s.sum_y * s.sum_dy_over_y - t * s.y_net),
        f * (t * s.sum_dy_over_y - s.dt * s.y_net * s.sum_inv_y),
        f * (s.dt * s.sum_y * s.sum_dx_over_y - t * s.x_net),
        f * (t * s.sum_dx_over_y - s.dt * s.x_net * s.sum_inv_y),
    ])
}

/// Closed-form discretized asymptotic covariance: `(dt/2) sum(1/Y^2)` times
/// a fixed 4x4 pattern whose rows and columns for `b` and `beta` vanish.
pub fn heston_sigma_n(params: &HestonParams, path: &Path) -> Result<Mat> {
    params.validate()?;
    let s = accumulate(path)?;
    let one_minus_rho2 = 1.0 - params.rho * params.rho;
    let scale = 0.5 * s.dt * s.sum_inv_y2;
    let c_aa = 1.0 / one_minus_rho2;
    let c_ax = -params.sigma1 * params.rho / (params.sigma2 * one_minus_rho2);
    let c_xx = params.sigma1 * params.sigma1
        / (params.sigma2 * params.sigma2 * one_minus_rho2);
    let mut out = Mat::zeros(4, 4);
    out[(0, 0)] = scale * c_aa;
    out[(0, 2)] = scale * c_ax;
    out[(2, 0)] = scale * c_ax;
    out[(2, 2)] = scale * c_xx;
    Ok(out)
}

/// Closed-form Hessian of the approximate log-likelihood, a Kronecker
/// product of the correlation structure with the grid sums.
pub fn heston_hessian(params: &HestonParams, path: &Path) -> Result<Mat> {
    params.validate()?;
    let s = accumulate(path)?;
    let HestonParams { sigma1, sigma2, rho, .. } = *params;
    let g = 1.0 / (sigma1 * sigma1 * sigma2 * sigma2 * (1.0 - rho * rho));
    let correlation = Mat::from_rows(&[
        &[sigma2 * sigma2, -sigma1 * sigma2 * rho],
        &[-sigma1 * sigma2 * rho, sigma1 * sigma1],
    ]);
    let grid_sums = Mat::from_rows(&[
        &[-s.dt * s.sum_inv_y, s.horizon],
        &[s.horizon, -s.dt * s.sum_y],
    ]);
    Ok(kron(&correlation, &grid_sums).scaled(g))
}

/// The reference estimate used in place of the continuous-observation MLE:
/// the closed-form estimator applied to the full-resolution grid.
pub fn heston_mle_fine(fine_path: &Path) -> Result<Vec<f64>> {
    if !fine_path.n_steps().is_power_of_two() {
        return Err(Error::RejectedInput(format!(
            "fine grid must have 2^l steps, got {}",
            fine_path.n_steps()
        )));
    }
    heston_amle(fine_path)
}

/// Convenience wrapper returning the full solver diagnostics for the fine
/// grid reference, via the generic estimator.
pub fn heston_mle_fine_result(params: &HestonParams, fine_path: &Path) -> Result<EstimateResult> {
    let model = heston_model(params)?;
    mle_proxy(&model, fine_path, None)
}
