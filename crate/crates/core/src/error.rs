use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectralError {
    #[error("invalid collocation grid: {0}")]
    InvalidGrid(String),
    #[error("expected {expected} nodal samples, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("parity violation: rejected-part energy ratio {ratio:e} exceeds {tol:e}")]
    ParityViolation { ratio: f64, tol: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KernelError {
    #[error("kernel evaluated at distance {distance:e} from its singularity")]
    SingularEvaluation { distance: f64 },
    #[error("interface passes within {distance:e} of a vortex center (guard {guard:e})")]
    VortexTooClose { distance: f64, guard: f64 },
    #[error("invalid vortex pair: {0}")]
    InvalidPair(String),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LayerError {
    #[error("layer strip degenerates: minimum thickness {gap:e} below floor {floor:e}")]
    DegenerateStrip { gap: f64, floor: f64 },
    #[error("layer collocation solve failed: {0}")]
    LinearSolveFailure(String),
    #[error("point ({x}, {y}) is not inside the layer with clearance {guard:e}")]
    PointOutsideLayer { x: f64, y: f64, guard: f64 },
    #[error("invalid layer resolution: {0}")]
    InvalidResolution(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SystemError {
    #[error("invalid physical parameters: {0}")]
    InvalidParameters(String),
    #[error("state is incompatible with the discretization: {0}")]
    ShapeMismatch(String),
    #[error("non-finite entry produced while assembling {0}")]
    NonFiniteEntry(&'static str),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Layer(#[from] LayerError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ContinuationError {
    #[error("Newton iteration failed after {iterations} iterations (residual {residual:e})")]
    NewtonFailure { iterations: usize, residual: f64 },
    #[error("bordered tangent system is singular")]
    SingularBorderedSystem,
    #[error("invalid continuation settings: {0}")]
    InvalidSettings(String),
    #[error(transparent)]
    System(#[from] SystemError),
}

impl SystemError {
    /// True when the error comes from one of the geometric admissibility guards.
    pub fn is_guard(&self) -> bool {
        matches!(
            self,
            SystemError::Kernel(KernelError::VortexTooClose { .. })
                | SystemError::Layer(LayerError::DegenerateStrip { .. })
        )
    }
}
