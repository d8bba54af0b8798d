use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value violates a documented invariant.
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("affine map is singular (det = {0:e})")]
    SingularMap(f64),

    #[error(
        "support ball B({radius:e}) around ({x:.6}, {y:.6}) leaves the chart of radius {chart:e}"
    )]
    SupportOutsideChart {
        x: f64,
        y: f64,
        radius: f64,
        chart: f64,
    },

    #[error("quadrature too coarse: unit-mass self check is off by {0:e}")]
    QuadratureTooCoarse(f64),

    #[error("sample point violates {0}")]
    SamplePoint(String),

    #[error("metric jet is degenerate on the curve (det = {0:e})")]
    DegenerateMetric(f64),

    #[error("{file}: {message}")]
    Schema { file: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
