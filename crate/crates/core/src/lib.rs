//! Nonreciprocal bundle emission from a driven atom in a spinning
//! optomagnonic resonator.
//!
//! [`model`] holds parameters, the Hamiltonian and resonance conditions;
//! [`liouvillian`] the master equation; [`correlations`], [`trajectories`]
//! and [`entanglement`] the observables built on top.

pub mod correlations;
pub mod entanglement;
pub mod error;
pub mod hilbert;
pub mod liouvillian;
pub mod linalg;
pub mod model;
pub mod sparse;
pub mod trajectories;

pub use error::{Error, Result};

pub type C64 = num_complex::Complex64;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

// Book chapters run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/resonances.md")]
    mod resonances {}
    #[doc = include_str!("../../../book/src/dynamics.md")]
    mod dynamics {}
    #[doc = include_str!("../../../book/src/correlations.md")]
    mod correlations {}
    #[doc = include_str!("../../../book/src/trajectories.md")]
    mod trajectories {}
    #[doc = include_str!("../../../book/src/entanglement.md")]
    mod entanglement {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
