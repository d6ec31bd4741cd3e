//! External potentials `V`.

use serde::{Deserialize, Serialize};

use crate::domain::Domain;
use crate::error::{config_err, Result};
use crate::trig::TrigPoly;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub enum Potential {
    #[default]
    Zero,
    /// `V(x) = (s/2)|x|²`, free space only.
    Quadratic { strength: f64 },
    /// A real trigonometric polynomial on the torus.
    Fourier(TrigPoly),
}

impl Potential {
    /// `a·cos(2π x_1)`.
    pub fn single_mode(dim: usize, a: f64) -> Potential {
        Potential::Fourier(TrigPoly::cosine(dim, 0.0, a))
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Potential::Zero)
    }

    pub fn check(&self, domain: &Domain) -> Result<()> {
        match self {
            Potential::Zero => Ok(()),
            Potential::Quadratic { strength } => {
                if domain.is_torus() {
                    return config_err("a quadratic potential is not periodic; use it in free space");
                }
                if !strength.is_finite() {
                    return config_err("quadratic strength must be finite");
                }
                Ok(())
            }
            Potential::Fourier(p) => {
                if !domain.is_torus() || p.dim != domain.dim {
                    return config_err("a Fourier potential needs a torus of matching dimension");
                }
                Ok(())
            }
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            Potential::Zero => 0.0,
            Potential::Quadratic { strength } => 0.5 * strength * x.iter().map(|v| v * v).sum::<f64>(),
            Potential::Fourier(p) => p.eval(x),
        }
    }

    pub fn gradient(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Potential::Zero => out.iter_mut().for_each(|g| *g = 0.0),
            Potential::Quadratic { strength } => {
                for (g, v) in out.iter_mut().zip(x) {
                    *g = strength * v;
                }
            }
            Potential::Fourier(p) => p.gradient(x, out),
        }
    }
}
