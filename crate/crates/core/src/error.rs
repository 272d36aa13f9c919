use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid surface parameters: {0}")]
    InvalidSurface(String),

    #[error("point at distance {distance:.3e} lies outside the tube of half-width {bound:.3e}")]
    OutsideTube { distance: f64, bound: f64 },

    #[error("closest-point Newton iteration did not converge after {iterations} steps")]
    NewtonDivergence { iterations: usize },

    #[error("radial ray does not cross the surface")]
    RayMiss,

    #[error("discrete normal points away from the surface normal (cosine {cosine:.3e})")]
    NormalFlip { cosine: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("bulk box half-width {half_width} does not contain the tube (needs > {required})")]
    BoxTooSmall { half_width: f64, required: f64 },

    #[error("degenerate simplex (measure {measure:.3e})")]
    DegenerateSimplex { measure: f64 },

    #[error("vertex {vertex} has valence {valence}, above the supported bound")]
    ValenceExceeded { vertex: usize, valence: usize },

    #[error("the level set does not cut the bulk mesh")]
    EmptyCut,

    #[error("narrow band is empty")]
    EmptyBand,

    #[error("band width {delta:.4e} outside the admissible window [{lower:.4e}, {upper:.4e}]")]
    BandWidth { delta: f64, lower: f64, upper: f64 },

    #[error("conjugate gradient stalled after {iterations} iterations (relative residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("bad error series: {0}")]
    BadSeries(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{stage} failed at level {level}: {source}")]
    Stage {
        level: usize,
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Wraps an error with the convergence level and pipeline stage it came from.
    pub fn at(self, level: usize, stage: &'static str) -> Self {
        Error::Stage {
            level,
            stage,
            source: Box::new(self),
        }
    }

    /// True for errors caused by bad user input rather than numerics.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Config(_)
            | Error::InvalidSurface(_)
            | Error::Unsupported(_)
            | Error::BoxTooSmall { .. }
            | Error::BandWidth { .. }
            | Error::Json(_) => true,
            Error::Stage { source, .. } => source.is_config(),
            _ => false,
        }
    }
}
