//! Pair creation in a Sauter-type potential well: split-operator evolution
//! of the reduced Dirac equation, Bogoliubov observables, and analytic
//! resonance/bound-state matching.

pub mod dirac;
pub mod error;
pub mod evolution;
pub mod observables;
pub mod resonance;
pub mod snapshot_io;
pub mod stats;

pub use dirac::{
    free_eigenstate, sauter_well_potential, BasisLabel, Branch, GridSpec, SpinorField, WellParams,
    SPEED_OF_LIGHT,
};
pub use error::{Error, Result};
pub use evolution::{
    bogoliubov_evolution, bogoliubov_evolution_with, evolve_populations, propagate,
    BogoliubovMatrix, BranchSelection, Populations, PropagatorConfig,
};
