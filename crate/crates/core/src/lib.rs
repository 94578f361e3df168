//! Wave trains of FitzHugh-Nagumo type reaction-diffusion systems: singular-limit
//! geometry, Airy-based dispersion relations, Floquet-Bloch spectra and direct
//! simulation.

pub mod airy;
pub mod bloch;
pub mod dispersion;
pub mod dns;
pub mod error;
pub mod model;
pub mod quad;
pub mod spectral;
pub mod wavetrain;

pub use error::{Error, Result};
pub use model::{ModelKind, ModelParams, ReactionModel, SingularLimit};
pub use bloch::{BlochCurve, CriticalCoefficients};
pub use dispersion::DispersionPrediction;
pub use dns::{DeffFit, SimGrid, WidthSeries};
pub use wavetrain::{ContinuationRecord, WaveTrain};
