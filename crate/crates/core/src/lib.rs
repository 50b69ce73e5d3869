//! Time-discrete solver for the Navier–Stokes/Mullins–Sekerka two-phase
//! flow model on the periodic square, together with a diffuse-interface
//! Model H solver used to cross-check the sharp-interface limit.
//!
//! One time step of the sharp scheme is a minimizing movement for the phase
//! (perimeter plus an `H⁻¹` displacement penalty, see [`ms_step`]) followed
//! by a linearized implicit momentum step driven by the capillary force
//! `−χ∇μ` (see [`ns_step`]). Every step is checked against the discrete
//! energy inequalities the construction guarantees.

pub mod driver;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod hneg;
pub mod model_h;
pub mod ms_step;
pub mod ns_step;
pub mod rng;
pub mod spectral;

pub use driver::{run_coupled, EnergyLedger, RunConfig};
pub use error::{Error, Result};
pub use geometry::{BinaryPhase, GeometryReport};
pub use grid::{Grid, ScalarField, VectorField};
pub use hneg::HNegWorkspace;
pub use model_h::{DiffuseState, DoubleWell, ViscosityLaw};
pub use ms_step::{AnnealConfig, MsStepConfig, MsStepResult};
pub use ns_step::{NsStepConfig, NsStepResult};
