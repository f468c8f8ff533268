//! Self-contained numerical kernels: small dense linear algebra, symmetric
//! eigendecomposition, gamma-family special functions and reproducible
//! Gaussian noise.

pub mod eigen;
pub mod matrix;
pub mod rng;
pub mod special;

pub use eigen::{
    numerical_rank, pinv_sqrt, pinv_sqrt_with_rank, sqrt_psd, sym_eigen, SymmetricEigen,
    DEFAULT_RANK_TOL,
};
pub use matrix::{dot, fd_jacobian, kron, solve_linear, Mat};
pub use rng::{standard_normals, GaussianStream, NoiseSource};
pub use special::{chi2_cdf, chi2_quantile, ln_gamma, normal_cdf, reg_lower_gamma};
