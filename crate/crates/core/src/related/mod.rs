//! Steady-state solvers for the shot-noise and waiting-time dependent models.

mod shotnoise;
mod waitdep;

pub use shotnoise::{solve_shotnoise, ShotNoiseKernel};
pub use waitdep::{solve_waitdep, spectrum, Spectrum, WaitDepKernel};
