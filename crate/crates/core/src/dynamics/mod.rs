//! Particle dynamics, the mean-field PDE and the modulated-energy sweep.

pub mod pde;
pub mod sde;
pub mod sweep;

pub use pde::{mv_solve, PdeParams, PdeState, PdeTrajectory};
pub use sde::{sde_run, SdeIntegrator, SdeParams, SdeState, SdeTrajectory};
pub use sweep::{modulated_energy_sweep, ModulatedSweep, SweepParams, SweepRow};
