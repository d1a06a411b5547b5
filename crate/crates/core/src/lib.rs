//! Spectral solver for steady periodic two-layer capillary-gravity
//! interfacial waves carrying a point-vortex pair.

pub mod chebyshev;
pub mod continuation;
pub mod error;
pub mod krylov;
pub mod layer;
pub mod spectral;
pub mod system;
pub mod vortex;

pub use error::{ContinuationError, KernelError, LayerError, SpectralError, SystemError};
pub use spectral::{to_coeffs, CollocationGrid, EvenField, OddField, Parity, SpectralField};
pub use vortex::{Kernel, KernelChoice, Point, VortexPair};
pub use system::{
    Discretization, JacobianMode, PhysicalParameters, Residual, WaveState, WaveSystem,
};
pub use continuation::{
    continue_branch, newton_correct, parity_monitor, tangent, Alternative, Branch, BranchPoint,
    ContinuationSettings, Direction,
};
