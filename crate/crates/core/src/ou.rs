//! Scalar Ornstein-Uhlenbeck model `dX = (theta1 - theta2 X) dt + sigma dW`,
//! registered as "ou". The diffusion level `sigma` is treated as known.

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::numerics::Mat;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuParams {
    pub theta1: f64,
    pub theta2: f64,
    pub sigma: f64,
    pub x0: f64,
    pub horizon: f64,
}

impl Default for OuParams {
    fn default() -> Self {
        OuParams { theta1: 0.5, theta2: 1.0, sigma: 0.5, x0: 0.0, horizon: 1.0 }
    }
}

impl OuParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.theta1, self.theta2, self.sigma, self.x0, self.horizon]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::RejectedInput("OU parameters must be finite".into()));
        }
        if self.sigma <= 0.0 {
            return Err(Error::RejectedInput("sigma must be positive".into()));
        }
        if self.horizon <= 0.0 {
            return Err(Error::RejectedInput("horizon must be positive".into()));
        }
        Ok(())
    }

    pub fn theta(&self) -> Vec<f64> {
        vec![self.theta1, self.theta2]
    }

    pub fn initial_state(&self) -> Vec<f64> {
        vec![self.x0]
    }
}

pub fn ou_model(params: &OuParams) -> Result<ModelSpec> {
    params.validate()?;
    let sigma = params.sigma;
    let inv_s2 = 1.0 / (sigma * sigma);
    Ok(ModelSpec::new(
        "ou",
        1,
        2,
        |x, th| vec![th[0] - th[1] * x[0]],
        move |_x| Mat::from_rows(&[&[sigma]]),
    )
    .with_drift_jac_theta(|x, _th| Mat::from_rows(&[&[1.0, -x[0]]]))
    .with_drift_hess_theta(|_x, _th, _i, _j| vec![0.0])
    .with_grad_g(move |_x, _th, j| {
        // g_1 = 1/sigma^2 is constant; g_2 = -x/sigma^2.
        if j == 1 {
            Mat::from_rows(&[&[-inv_s2]])
        } else {
            Mat::zeros(1, 1)
        }
    })
    .with_affine_drift())
}
