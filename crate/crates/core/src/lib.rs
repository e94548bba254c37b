//! Simulation, verification, analysis and synthesis of almost-resonant
//! modulated-driving (ARMD) Rydberg blockade entangling gates.
//!
//! The crate is organized bottom-up:
//!
//! - [`model`]: basis enumeration and Hamiltonian assembly for each gate scheme.
//! - [`pulse`]: truncated cosine-series Rabi waveforms, presets and the pulse
//!   file format.
//! - [`dynamics`]: Schrödinger propagation (midpoint exponential integrator)
//!   and trajectory recording.
//! - [`gates`]: CZ fidelity with single-qubit phase compensation, conditional
//!   phase, phase-jump detection, dynamical/geometric phase split and the
//!   adiabatic spectrum.
//! - [`optimize`]: derivative-free search over Fourier coefficients.
//! - [`cli`]: the `armd` command-line front end.
//!
//! Units: ħ = 1, time in μs, angular frequencies in rad/μs. User-facing
//! frequencies are quoted in "2π×MHz", i.e. a value `v` means `2π·v` rad/μs.

pub mod cli;
pub mod dynamics;
pub mod error;
pub mod gates;
pub mod model;
pub mod optimize;
pub mod pulse;

pub use error::{Error, Result};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;
