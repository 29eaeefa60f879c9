//! Renormalized Cahn–Hilliard energy on the two-torus: pseudo-spectral
//! fields, descent to droplet minimizers, a simplified String Method for the
//! critical nucleus, sharp-interface nucleation constants and level-set
//! geometry of the computed states.

pub mod diagnostics;
pub mod energy;
pub mod error;
pub mod io;
pub mod levelset;
pub mod minimize;
pub mod nucleation;
mod spectral;
pub mod string;
pub mod torus;

pub use diagnostics::{interfacial_measure, observables_row, rate_table, Kind, ObservablesRow};
pub use energy::{energy, grad_l2, Model};
pub use error::{Error, Result};
pub use nucleation::{critical_volumes, nucleation_constants, NucleationConstants};
pub use string::{StringConfig, StringState};
pub use torus::{make_grid, Field, Grid};
