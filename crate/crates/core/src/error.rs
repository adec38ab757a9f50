use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid anisotropy vector {0:?}: entries must be >= 1")]
    InvalidAnisotropy([u32; 3]),
    #[error("anisotropy vector {0:?} must satisfy l1 == l2 in global-manifold mode")]
    NotGlobalAnisotropy([u32; 3]),
    #[error("covariable tau must be >= 0, got {0}")]
    NegativeTau(f64),
    #[error("anisotropy mismatch: {0:?} vs {1:?}")]
    AnisotropyMismatch([u32; 3], [u32; 3]),
    #[error("x must be positive, got {0}")]
    NonPositiveX(f64),
    #[error("empty symbol has no order")]
    EmptySymbol,
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("symbol is not fully elliptic (min |sym_e| = {min_modulus:e})")]
    NotFullyElliptic { min_modulus: f64 },
    #[error("principal inverse is singular at a sampled point")]
    SingularPrincipalInverse,
    #[error("cut-off support [-{support}, {support}] exceeds the t-window half-width {half_width}")]
    CutoffSupport { support: f64, half_width: f64 },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("malformed data: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
