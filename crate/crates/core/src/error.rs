use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("operator of dimension {found} cannot act on site {site} of dimension {expected}")]
    DimensionMismatch {
        site: usize,
        expected: usize,
        found: usize,
    },

    #[error("site {site} out of range for a space with {n_sites} factors")]
    SiteOutOfRange { site: usize, n_sites: usize },

    #[error("{tensors} hyperfine tensors supplied for {nuclei} nuclei")]
    TensorCount { tensors: usize, nuclei: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("no level anticrossing inside the {lo_mt}-{hi_mt} mT window")]
    LacNotFound { lo_mt: f64, hi_mt: f64 },

    #[error("frequency grid [{grid_lo}, {grid_hi}] MHz does not cover lines out to [{need_lo}, {need_hi}] MHz")]
    GridCoverage {
        grid_lo: f64,
        grid_hi: f64,
        need_lo: f64,
        need_hi: f64,
    },

    #[error("rate system has no unique steady state (null space dimension {null_dim})")]
    NoUniqueSteadyState { null_dim: usize },

    #[error("degenerate steady state: smallest/largest pivot ratio {pivot_ratio:.3e}")]
    DegenerateSteadyState { pivot_ratio: f64 },

    #[error("steady-state residual {residual:.3e} exceeds tolerance {tolerance:.1e}")]
    Residual { residual: f64, tolerance: f64 },

    #[error("steady state is not positive: smallest eigenvalue {min_eigenvalue:.3e}")]
    NotPositive { min_eigenvalue: f64 },

    #[error("fit did not converge after {iterations} iterations (best rss {rss:.6e})")]
    NotConverged {
        iterations: usize,
        rss: f64,
        best: Vec<f64>,
    },

    #[error("degenerate fit initialization: {0}")]
    DegenerateInit(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
