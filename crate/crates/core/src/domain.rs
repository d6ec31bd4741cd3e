//! Spatial domains and particle configurations.
//!
//! The torus always has period one, so Fourier modes are `exp(2πi k·x)` with
//! integer `k`. Free space carries a support radius that bounds the box on
//! which base measures and displacement grids live.

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DomainKind {
    Torus,
    FreeSpace,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub kind: DomainKind,
    pub dim: usize,
    /// Half-width of the bounding box in free space; unused on the torus.
    pub radius: f64,
}

impl Domain {
    pub fn torus(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Ok(Domain {
            kind: DomainKind::Torus,
            dim,
            radius: 0.5,
        })
    }

    pub fn free_space(dim: usize, radius: f64) -> Result<Self> {
        check_dim(dim)?;
        if !(radius > 0.0 && radius.is_finite()) {
            return config_err(format!("free-space radius must be positive, got {radius}"));
        }
        Ok(Domain {
            kind: DomainKind::FreeSpace,
            dim,
            radius,
        })
    }

    pub fn is_torus(&self) -> bool {
        self.kind == DomainKind::Torus
    }

    pub fn period(&self) -> f64 {
        1.0
    }

    /// Reduces a point into the fundamental cell `[0,1)^d` (torus only).
    pub fn wrap(&self, x: &mut [f64]) {
        if self.is_torus() {
            for c in x.iter_mut() {
                *c = wrap_unit(*c);
            }
        }
    }

    /// Writes `x - y` into `out`, using the minimum image on the torus.
    pub fn displacement(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        for a in 0..x.len() {
            let mut d = x[a] - y[a];
            if self.is_torus() {
                d -= d.round();
            }
            out[a] = d;
        }
    }

    pub fn distance(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut s = 0.0;
        for a in 0..x.len() {
            let mut d = x[a] - y[a];
            if self.is_torus() {
                d -= d.round();
            }
            s += d * d;
        }
        s.sqrt()
    }

    /// Lebesgue volume of the domain (torus) or of the bounding box.
    pub fn volume(&self) -> f64 {
        match self.kind {
            DomainKind::Torus => 1.0,
            DomainKind::FreeSpace => (2.0 * self.radius).powi(self.dim as i32),
        }
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if !(1..=3).contains(&dim) {
        return config_err(format!("dimension must be 1, 2 or 3, got {dim}"));
    }
    Ok(())
}

#[inline]
pub(crate) fn wrap_unit(x: f64) -> f64 {
    let r = x.rem_euclid(1.0);
    // rem_euclid can return exactly 1.0 for tiny negative inputs
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// An ordered list of `n` particle positions, stored flat as `n * dim` reals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    pub dim: usize,
    pub coords: Vec<f64>,
}

impl Configuration {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 || coords.is_empty() || coords.len() % dim != 0 {
            return config_err(format!(
                "configuration needs a positive multiple of {dim} coordinates, got {}",
                coords.len()
            ));
        }
        Ok(Configuration { dim, coords })
    }

    pub fn from_points(points: &[Vec<f64>]) -> Result<Self> {
        let dim = points.first().map(|p| p.len()).unwrap_or(0);
        if points.iter().any(|p| p.len() != dim) {
            return config_err("points of mixed dimension");
        }
        Self::new(dim, points.iter().flatten().copied().collect())
    }

    pub fn n(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn point_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn wrap(&mut self, domain: &Domain) {
        domain.wrap(&mut self.coords);
    }

    /// Smallest pairwise distance, with the index pair attaining it.
    pub fn closest_pair(&self, domain: &Domain) -> Option<(usize, usize, f64)> {
        let n = self.n();
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..n {
            for j in (i + 1)..n {
                let r = domain.distance(self.point(i), self.point(j));
                if best.map_or(true, |b| r < b.2) {
                    best = Some((i, j, r));
                }
            }
        }
        best
    }

    pub fn permuted(&self, perm: &[usize]) -> Configuration {
        let mut coords = Vec::with_capacity(self.coords.len());
        for &p in perm {
            coords.extend_from_slice(self.point(p));
        }
        Configuration {
            dim: self.dim,
            coords,
        }
    }
}
