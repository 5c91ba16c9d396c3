use thiserror::Error;

use crate::field::ScalarField;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid domain mask: {0}")]
    InvalidMask(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("field has {count} non-finite value(s)")]
    NonFinite { count: usize },

    #[error("field is nonzero outside the domain (max |u| = {max_outside:e})")]
    NonzeroOutsideDomain { max_outside: f64 },

    #[error("threshold lower bound violated: min g = {min_g}, nu = {nu}")]
    ThresholdBelowFloor { min_g: f64, nu: f64 },

    #[error("coefficient field violates ellipticity bounds: {0}")]
    Ellipticity(String),

    #[error("coefficient field is not symmetric")]
    NotSymmetric,

    #[error("grid with {nodes} nodes exceeds the limit of {limit} for this operation")]
    GridTooLarge { nodes: usize, limit: usize },

    #[error("penalized solve diverged at eps = {eps} after {iterations} iterations (last residual {last_residual:e})")]
    Divergence { eps: f64, iterations: usize, last_residual: f64, residual_history: Vec<f64>, last_iterate: Box<ScalarField> },

    #[error("splitting oracle stopped after {iterations} iterations (primal {primal:e}, dual {dual:e})")]
    OracleMaxIter { iterations: usize, primal: f64, dual: f64 },

    #[error("fixed-point iteration stopped after {iterations} outer iterations (last residual {last_residual:e})")]
    OuterMaxIter { iterations: usize, last_residual: f64, residual_history: Vec<f64> },

    #[error("constraint is active (violation {violation:e}); use the variational inequality path")]
    ConstraintActive { violation: f64 },

    #[error("threshold operator produced min g = {min_g} below its floor {nu}")]
    OperatorBelowFloor { min_g: f64, nu: f64 },

    #[error("no feasible sample could be constructed: {0}")]
    InfeasibleSample(String),

    #[error("threshold functional does not declare its moduli")]
    ModuliNotDeclared,

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("malformed field file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short machine-readable tag, stable across releases.
    pub fn reason(&self) -> &'static str {
        match self {
            Error::InvalidGrid(_) => "invalid_grid",
            Error::InvalidMask(_) => "invalid_mask",
            Error::GridMismatch => "grid_mismatch",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::NonFinite { .. } => "non_finite",
            Error::NonzeroOutsideDomain { .. } => "nonzero_outside_domain",
            Error::ThresholdBelowFloor { .. } => "threshold_lower_bound_violated",
            Error::Ellipticity(_) => "ellipticity_violated",
            Error::NotSymmetric => "not_symmetric",
            Error::GridTooLarge { .. } => "grid_too_large",
            Error::Divergence { .. } => "solver_divergence",
            Error::OracleMaxIter { .. } => "oracle_max_iter",
            Error::OuterMaxIter { .. } => "outer_max_iter",
            Error::ConstraintActive { .. } => "constraint_active",
            Error::OperatorBelowFloor { .. } => "operator_below_floor",
            Error::InfeasibleSample(_) => "infeasible_sample",
            Error::ModuliNotDeclared => "moduli_not_declared",
            Error::LinearSolve(_) => "linear_solve_failed",
            Error::Format(_) => "format",
            Error::Io(_) => "io",
        }
    }
}
