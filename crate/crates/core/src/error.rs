use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix size {required} exceeds budget {budget} (raise the budget to at least {required})")]
    Budget { required: usize, budget: usize },

    #[error("quadrature failure: {0}")]
    Quadrature(String),

    #[error("support leaks outside the torus fundamental domain: {0}")]
    SupportLeak(String),

    #[error("eigensolver failed for matrix `{label}`: {reason}")]
    Eigensolver { label: String, reason: String },

    #[error("residue undefined via Res_W for a non-classical symbol; use residue_series")]
    NotClassical,

    #[error("not a modulated symbol: {0}")]
    NotModulated(String),

    #[error("matrix `{0}` is not Hermitian")]
    NotHermitian(String),

    #[error("insufficient grid: {0}")]
    InsufficientGrid(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("cache format error: {0}")]
    Cache(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
