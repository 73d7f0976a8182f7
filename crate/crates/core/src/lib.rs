//! Variational toolkit for the Newtonian N-body problem at positive energy.
//!
//! The crate computes the objects that organize hyperbolic (scattering)
//! dynamics: fixed-time and free-time action potentials, directed
//! horofunctions (Busemann functions) and their calibrating motions,
//! synthesis of hyperbolic motions with prescribed limit shape, energy and
//! initial configuration, Chazy-style asymptotic fits and classification of
//! expansive motions, and Jacobi-Maupertuis geometry (lengths, arclength
//! reparametrization, Kepler comparison bounds).
//!
//! Everything is plain `f64` numerics over immutable inputs; all operations
//! are pure and safe to run concurrently.

pub mod action;
pub mod asymptotics;
mod coords;
mod error;
pub mod horofn;
pub mod integrate;
pub mod jm;
pub mod opt;
pub mod oracles;
pub mod quad;
pub mod system;

pub use coords::{Configuration, Coords, Velocity};
pub use error::{Error, Result};
pub use system::{ConfigStats, MassSystem};
