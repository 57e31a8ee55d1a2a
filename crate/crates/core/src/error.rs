use thiserror::Error;

/// Errors produced by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("field has {len} values but grid has {cells} cells")]
    ShapeMismatch { len: usize, cells: usize },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("grid spec invalid: {0}")]
    InvalidGrid(String),

    #[error("parameter invalid: {0}")]
    InvalidParameter(String),

    #[error("non-finite value detected in {context}")]
    NonFinite { context: &'static str },

    #[error("cg did not converge in {max_iter} iterations (relative residual {residual:.3e})")]
    CgMaxIter { max_iter: usize, residual: f64 },

    #[error("cg hit non-positive curvature at iteration {iteration}: operator is not positive definite")]
    CgIndefinite { iteration: usize },

    #[error("newton did not converge in {max_iter} iterations (max-norm residual {residual:.3e})")]
    NewtonMaxIter { max_iter: usize, residual: f64 },

    #[error("newton line search stalled (max-norm residual {residual:.3e})")]
    NewtonStall { residual: f64 },

    #[error("initial state infeasible: max|u| = {max_abs} exceeds bound {bound}")]
    Infeasible { max_abs: f64, bound: f64 },

    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("snapshot {path}: {msg}")]
    Snapshot { path: String, msg: String },
}

impl Error {
    /// Process exit status for the CLI: 1 check/scheme failure, 2 config, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } => 2,
            Error::Io { .. } | Error::Snapshot { .. } => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
