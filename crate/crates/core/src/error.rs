use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("outline self-intersects between segments {first} and {second}")]
    SelfIntersectingOutline { first: usize, second: usize },

    #[error("thickness field is not positive (minimum {min_mm:.4} mm)")]
    NonPositiveThickness { min_mm: f64 },

    #[error("perturbation of component {component} infeasible after {attempts} redraws")]
    PerturbationInfeasible { component: usize, attempts: usize },

    #[error("resolution too coarse: {nodes:.1} nodes across the plate, need at least {required}")]
    ResolutionTooCoarse { nodes: f64, required: usize },

    #[error("plate mask splits into {components} disconnected components")]
    DegenerateMask { components: usize },

    #[error("mass matrix is not positive definite")]
    MassNotPositive,

    #[error("eigensolver failure: {0}")]
    EigenSolveFailure(String),

    #[error("expected {expected} rigid-body modes, found {found}")]
    RigidModeMismatch { expected: usize, found: usize },

    #[error("oracle failed on {failed} of {total} samples")]
    OracleFailureRate { failed: usize, total: usize },

    #[error("dataset too small: {0}")]
    DatasetTooSmall(String),

    #[error("normal equations stayed singular up to damping {damping:e}")]
    SingularNormalEquations { damping: f64 },

    #[error("surrogate model has not been trained")]
    NotTrained,

    #[error("output {output} has zero variance on the partition")]
    DegenerateVariance { output: usize },

    #[error("surrogate gate failed: test R² = {r2:.4} (must exceed {threshold})")]
    GateFailed { r2: f64, threshold: f64 },

    #[error("objective returned NaN at evaluation {evaluation}")]
    ObjectiveNaN { evaluation: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParams(_) => "InvalidParams",
            Error::SelfIntersectingOutline { .. } => "SelfIntersectingOutline",
            Error::NonPositiveThickness { .. } => "NonPositiveThickness",
            Error::PerturbationInfeasible { .. } => "PerturbationInfeasible",
            Error::ResolutionTooCoarse { .. } => "ResolutionTooCoarse",
            Error::DegenerateMask { .. } => "DegenerateMask",
            Error::MassNotPositive => "MassNotPositive",
            Error::EigenSolveFailure(_) => "EigenSolveFailure",
            Error::RigidModeMismatch { .. } => "RigidModeMismatch",
            Error::OracleFailureRate { .. } => "OracleFailureRate",
            Error::DatasetTooSmall(_) => "DatasetTooSmall",
            Error::SingularNormalEquations { .. } => "SingularNormalEquations",
            Error::NotTrained => "NotTrained",
            Error::DegenerateVariance { .. } => "DegenerateVariance",
            Error::GateFailed { .. } => "GateFailed",
            Error::ObjectiveNaN { .. } => "ObjectiveNaN",
            Error::Io(_) => "Io",
            Error::Json(_) => "Json",
            Error::Csv(_) => "Csv",
        }
    }

    /// True for errors caused by an unrealizable design rather than by the
    /// numerics.
    pub fn is_geometry(&self) -> bool {
        matches!(
            self,
            Error::SelfIntersectingOutline { .. } | Error::NonPositiveThickness { .. } | Error::DegenerateMask { .. }
        )
    }
}
