use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("expected a square matrix, got {rows}x{cols}")]
    NonSquare { rows: usize, cols: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite entry in {what}")]
    NonFinite { what: String },

    #[error("{what} is not Hermitian (residual {residual:.3e})")]
    NotHermitian { what: String, residual: f64 },

    #[error("{what} has a negative eigenvalue {eigenvalue:.3e} beyond the PSD slack")]
    NotPositive { what: String, eigenvalue: f64 },

    #[error("negative power of a matrix with a nontrivial kernel (smallest eigenvalue {smallest:.3e})")]
    SingularPower { smallest: f64 },

    #[error("tolerance field `{field}` must be strictly positive")]
    InvalidTolerance { field: &'static str },

    #[error("model violates unitality: ||Y + Y* + sum L*L|| = {residual:.3e}")]
    NotUnital { residual: f64 },

    #[error("invalid time {time}: {reason}")]
    InvalidTime { time: f64, reason: &'static str },

    #[error("{what} is not a projection (residual {residual:.3e})")]
    NotProjection { what: String, residual: f64 },

    #[error("state is not faithful (smallest eigenvalue {smallest:.3e})")]
    NotFaithful { smallest: f64 },

    #[error("state is not invariant (residual {residual:.3e})")]
    NotInvariant { residual: f64 },

    #[error("projection is not sub-harmonic (algebraic residual {algebraic:.3e}, dynamic residual {dynamic:.3e})")]
    NotSubharmonic { algebraic: f64, dynamic: f64 },

    #[error("subalgebra is not invariant under the modular group (residual {residual:.3e})")]
    ModularInvariance { residual: f64 },

    #[error("adjoint mismatch: KMS relation residual {residual:.3e}")]
    AdjointMismatch { residual: f64 },

    #[error("operation requires a {expected} semigroup")]
    WrongKind { expected: &'static str },

    #[error("eigenvalue {eigenvalue} is not semisimple; spectral projection is undefined")]
    NotSemisimple { eigenvalue: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("grid error: {0}")]
    Grid(String),

    #[error("dilation space of {tuples} spanning tuples exceeds the cap {cap}")]
    CapExceeded { tuples: usize, cap: usize },

    #[error("invalid stochastic matrix: {0}")]
    NotStochastic(String),

    #[error("unknown builtin model `{0}`")]
    UnknownModel(String),

    #[error("model file error: {0}")]
    ModelFile(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
