//! Spectra of the distance-modulated edge Hamiltonian `Σ_x x·H_x` for
//! range-1 periodic free-fermion models on the square lattice.
//!
//! Three independent routes to the spectrum at fixed `k_y`:
//! the monodromy of the Fourier-side ODE ([`monodromy`]), the asymptotic
//! Bohr–Sommerfeld-type formula ([`monodromy::asymptotic_spectrum`]) and
//! real-space truncations ([`discrete`]). Branches are tracked across `k_y`
//! ([`tracking`]) and their spectral flow compared with the Hall conductance
//! ([`flow`]). [`current`] evaluates the low-temperature edge energy current.

pub mod bands;
pub mod current;
pub mod discrete;
pub mod edgeclass;
pub mod error;
pub mod flow;
pub mod io;
pub mod linalg;
pub mod model;
pub mod monodromy;
pub mod tracking;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;

pub const TAU: f64 = std::f64::consts::TAU;
