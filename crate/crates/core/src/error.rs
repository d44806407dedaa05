use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("degenerate density: mass is zero or not finite")]
    DegenerateDensity,
    #[error("singular diffusion: D({w}) = {value} at a face quadrature point")]
    SingularDiffusion { w: f64, value: f64 },
    #[error("entropic flux requires positivity: f[{cell}] = {value}")]
    NonPositive { cell: usize, value: f64 },
    #[error("reference density is not positive where f > 0: ref[{cell}] = {value}")]
    ReferenceNonPositive { cell: usize, value: f64 },
    #[error("size mismatch: expected {expected}, got {actual}")]
    SizeMismatch { expected: usize, actual: usize },
    #[error("grid mismatch between operands")]
    GridMismatch,
    #[error("singular tridiagonal system at row {row}")]
    SingularSystem { row: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("fixed point did not converge after {iterations} iterations; last iterates {trace:?}")]
    FixedPoint { iterations: usize, trace: Vec<f64> },
    #[error("sample variance grew from zero; sample count cannot increase")]
    VarianceFromZero,
    #[error("node {node}: {source}")]
    AtNode {
        node: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn at_node(self, node: usize) -> Self {
        Error::AtNode { node, source: Box::new(self) }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
