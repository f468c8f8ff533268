use thiserror::Error;

/// Errors shared by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated a documented precondition.
    #[error("rejected input: {0}")]
    RejectedInput(String),

    /// A state vector lies outside the model's state space.
    #[error("state outside model domain at component {component} (value {value})")]
    OutsideDomain { component: usize, value: f64 },

    /// The diffusion matrix S(x) is numerically singular at a single point.
    #[error("diffusion matrix not positive definite (min eigenvalue {min_eigenvalue:.6e})")]
    SingularDiffusion { min_eigenvalue: f64 },

    /// The diffusion matrix is singular at a specific grid index of a path.
    #[error("diffusion matrix not positive definite at grid index {index}")]
    SingularDiffusionAt { index: usize },

    /// A matrix required to be positive semidefinite has a too-negative eigenvalue.
    #[error("matrix is not positive semidefinite (eigenvalue {eigenvalue:.6e})")]
    NotPositiveSemidefinite { eigenvalue: f64 },

    /// Pivoted elimination found no usable pivot.
    #[error("linear system is numerically singular (pivot {pivot:.6e})")]
    SingularSystem { pivot: f64 },

    /// The estimating equations have no unique solution on this path.
    #[error("estimator not identified: {0}")]
    NonIdentified(String),

    /// The Euler scheme produced a non-finite state.
    #[error("simulation diverged at step {step}")]
    SimulationDiverged { step: usize },

    /// A path file or config file failed to parse.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
