//! Numerical laboratory for repulsive logarithmic mean-field particle
//! systems: regularized log kernels on the torus and in free space,
//! fluctuation energies, partition functions, moment combinatorics,
//! interacting-particle SDEs, the mean-field PDE and Gibbs measures.

pub mod config;
pub mod domain;
pub mod dynamics;
pub mod energy;
pub mod error;
pub mod fft;
pub mod gibbs;
pub mod kernel;
pub mod measure;
pub mod moments;
pub mod partition;
pub mod potential;
pub mod quadrature;
pub mod report;
pub mod rng;
pub mod runner;
pub mod special;
pub mod spectral;
pub mod stats;
pub mod trig;

pub use domain::{Configuration, Domain, DomainKind};
pub use error::{Error, Result};
pub use kernel::Kernel;
pub use measure::BaseMeasure;
pub use rng::Seed;
