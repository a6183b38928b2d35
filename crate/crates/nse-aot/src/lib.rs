//! Pseudo-spectral solver for the 3D incompressible Navier–Stokes equations
//! on a periodic box, with continuous data assimilation by nudging.
//!
//! The solver advances du/dt + νAu + B(u,u) = f with A the Stokes operator
//! and B the Leray-projected advection term, using an integrating-factor
//! Runge–Kutta scheme on a 2/3-dealiased Fourier grid. On top of it sits a
//! nudging layer: a second copy of the dynamics driven toward sparse
//! observations I_h(u) of a reference solution through a feedback term
//! −μ P_σ(I_h(w) − I_h(u)), together with the machinery to decide when that
//! coupling provably synchronizes — interpolant-constant estimation,
//! feasibility windows for μ, observed-data resolution criteria, and an
//! adaptive per-interval gain schedule.
//!
//! Everything is deterministic: seeded RNG, serial loops in fixed order, and
//! byte-stable record/replay of observation streams.

pub mod adaptive;
pub mod assimilation;
pub mod cli;
pub mod dynamics;
pub mod error;
pub mod fft;
pub mod field;
pub mod grid;
pub mod interpolant;
pub mod io;
pub mod operators;

pub use error::{Error, Result};
pub use field::{beltrami_field, random_div_free_field, SpectralField};
pub use grid::{Dealias, GridSpec};
