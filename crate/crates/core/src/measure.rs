//! Base measures: uniform, piecewise-constant grid densities, atomic
//! measures and band-limited smooth densities.
//!
//! Grid densities are constant on each of the `M^d` cells, so their Fourier
//! coefficients are the grid DFT times a per-axis sinc and half-cell phase.
//! Every representation exposes the exact spectrum of the law its sampler
//! draws from.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{weighted::WeightedAliasIndex, Distribution};
use std::f64::consts::PI;

use crate::domain::{Configuration, Domain};
use crate::error::{config_err, Error, Result};
use crate::fft;
use crate::kernel::{Kernel, KernelFamily};
use crate::rng::Stream;
use crate::special::sinc;
use crate::spectral::ModeTable;
use crate::trig::TrigPoly;

const MASS_TOL: f64 = 1e-12;

#[derive(Clone, Debug)]
pub enum Representation {
    Uniform,
    /// Density values per cell, last axis fastest.
    Grid { cells: usize, values: Vec<f64> },
    /// Flat point coordinates and weights.
    Atomic { points: Vec<f64>, weights: Vec<f64> },
    Smooth(TrigPoly),
}

#[derive(Clone, Debug)]
pub struct BaseMeasure {
    pub domain: Domain,
    pub repr: Representation,
    pub linf_density: f64,
    alias: Option<WeightedAliasIndex<f64>>,
    grid_dft: Option<Vec<Complex64>>,
    envelope: f64,
}

/// A field sampled at the nodes of an `M^d` grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    pub dim: usize,
    pub cells: usize,
    /// Lower corner and spacing of the node lattice.
    pub origin: f64,
    pub spacing: f64,
    pub values: Vec<f64>,
}

impl GridField {
    pub fn node(&self, idx: usize) -> Vec<f64> {
        let mut pos = [0usize; 3];
        fft::unflatten(idx, self.cells, self.dim, &mut pos[..self.dim]);
        (0..self.dim)
            .map(|a| self.origin + self.spacing * pos[a] as f64)
            .collect()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

impl BaseMeasure {
    pub fn uniform(domain: Domain) -> BaseMeasure {
        BaseMeasure {
            domain,
            repr: Representation::Uniform,
            linf_density: 1.0 / domain.volume(),
            alias: None,
            grid_dft: None,
            envelope: 1.0,
        }
    }

    /// Piecewise-constant density from per-cell values; the values are used
    /// as given and must integrate to one.
    pub fn grid(domain: Domain, cells: usize, values: Vec<f64>) -> Result<BaseMeasure> {
        let d = domain.dim;
        if cells == 0 || values.len() != cells.pow(d as u32) {
            return config_err(format!(
                "grid density needs {cells}^{d} values, got {}",
                values.len()
            ));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return config_err("grid density values must be finite and nonnegative");
        }
        let cell_vol = domain.volume() / values.len() as f64;
        let mass: f64 = values.iter().sum::<f64>() * cell_vol;
        if (mass - 1.0).abs() > MASS_TOL {
            return config_err(format!("grid density has mass {mass}, expected 1"));
        }
        let alias = WeightedAliasIndex::new(values.clone())
            .map_err(|e| Error::Config(format!("grid density: {e}")))?;
        let grid_dft = if domain.is_torus() {
            Some(fft::forward_real(&values, cells, d))
        } else {
            None
        };
        let linf = values.iter().copied().fold(0.0, f64::max);
        Ok(BaseMeasure {
            domain,
            repr: Representation::Grid { cells, values },
            linf_density: linf,
            alias: Some(alias),
            grid_dft,
            envelope: 1.0,
        })
    }

    /// Grid density from a function evaluated at cell centres, rescaled to
    /// unit mass.
    pub fn grid_from_fn<F: Fn(&[f64]) -> f64>(
        domain: Domain,
        cells: usize,
        f: F,
    ) -> Result<BaseMeasure> {
        let d = domain.dim;
        let (lo, h) = box_geometry(&domain, cells);
        let total = cells.pow(d as u32);
        let mut pos = [0usize; 3];
        let mut x = vec![0.0; d];
        let mut values: Vec<f64> = (0..total)
            .map(|idx| {
                fft::unflatten(idx, cells, d, &mut pos[..d]);
                for a in 0..d {
                    x[a] = lo + h * (pos[a] as f64 + 0.5);
                }
                f(&x)
            })
            .collect();
        let cell_vol = domain.volume() / total as f64;
        let mass: f64 = values.iter().sum::<f64>() * cell_vol;
        if !(mass > 0.0 && mass.is_finite()) {
            return config_err("density function has no positive mass");
        }
        for v in values.iter_mut() {
            *v /= mass;
        }
        // exact renormalization against rounding
        let mass: f64 = values.iter().sum::<f64>() * cell_vol;
        values.iter_mut().for_each(|v| *v /= mass);
        Self::grid(domain, cells, values)
    }

    pub fn atomic(domain: Domain, points: Vec<f64>, weights: Vec<f64>) -> Result<BaseMeasure> {
        let d = domain.dim;
        if weights.is_empty() || points.len() != weights.len() * d {
            return config_err("atomic measure needs one point per weight");
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return config_err("atomic weights must be nonnegative");
        }
        let mass: f64 = weights.iter().sum();
        if (mass - 1.0).abs() > MASS_TOL {
            return config_err(format!("atomic weights sum to {mass}, expected 1"));
        }
        let mut points = points;
        domain.wrap(&mut points);
        let alias = WeightedAliasIndex::new(weights.clone())
            .map_err(|e| Error::Config(format!("atomic measure: {e}")))?;
        Ok(BaseMeasure {
            domain,
            repr: Representation::Atomic { points, weights },
            linf_density: f64::INFINITY,
            alias: Some(alias),
            grid_dft: None,
            envelope: 1.0,
        })
    }

    /// Equal-weight atoms.
    pub fn atoms(domain: Domain, points: &[Vec<f64>]) -> Result<BaseMeasure> {
        let m = points.len();
        let flat = points.iter().flatten().copied().collect();
        Self::atomic(domain, flat, vec![1.0 / m as f64; m])
    }

    /// Band-limited density on the torus given by its Fourier coefficients.
    pub fn smooth(domain: Domain, density: TrigPoly) -> Result<BaseMeasure> {
        if !domain.is_torus() || density.dim != domain.dim {
            return config_err("smooth densities live on the torus of matching dimension");
        }
        let zero = [0i64; 3];
        let c0 = density.coefficient(&zero[..domain.dim]);
        if (c0.re - 1.0).abs() > 1e-10 || c0.im.abs() > 1e-10 {
            return config_err(format!("smooth density has mass {}, expected 1", c0.re));
        }
        let probe = (4 * density.band + 8).min(match domain.dim {
            1 => 4096,
            2 => 256,
            _ => 48,
        });
        let nodes = density.to_grid(probe);
        let min = nodes.iter().copied().fold(f64::INFINITY, f64::min);
        if min < -1e-10 {
            return config_err(format!("smooth density is negative (min {min:e})"));
        }
        let max = nodes.iter().copied().fold(0.0, f64::max);
        let envelope = density.abs_coefficient_sum();
        Ok(BaseMeasure {
            domain,
            repr: Representation::Smooth(density),
            linf_density: max,
            alias: None,
            grid_dft: None,
            envelope,
        })
    }

    /// `1 + a·cos(2π x_1)` on the torus, `|a| < 1`.
    pub fn single_mode(dim: usize, a: f64) -> Result<BaseMeasure> {
        if a.abs() >= 1.0 {
            return config_err(format!("single-mode amplitude must satisfy |a| < 1, got {a}"));
        }
        Self::smooth(Domain::torus(dim)?, TrigPoly::cosine(dim, 1.0, a))
    }

    /// Equal mixture of two wrapped Gaussian bumps, discretized on a grid.
    pub fn two_bump(dim: usize, cells: usize, centers: [f64; 2], width: f64) -> Result<BaseMeasure> {
        let domain = Domain::torus(dim)?;
        Self::grid_from_fn(domain, cells, |x| {
            centers
                .iter()
                .map(|&c| {
                    let r2: f64 = x
                        .iter()
                        .map(|&v| {
                            let mut t = v - c;
                            t -= t.round();
                            t * t
                        })
                        .sum();
                    (-0.5 * r2 / (width * width)).exp()
                })
                .sum()
        })
    }

    pub fn dim(&self) -> usize {
        self.domain.dim
    }

    pub fn is_uniform(&self) -> bool {
        matches!(self.repr, Representation::Uniform)
    }

    pub fn is_atomic(&self) -> bool {
        matches!(self.repr, Representation::Atomic { .. })
    }

    pub fn atom_points(&self) -> Option<(&[f64], &[f64])> {
        match &self.repr {
            Representation::Atomic { points, weights } => Some((points, weights)),
            _ => None,
        }
    }

    /// Draws `n` i.i.d. points.
    pub fn sample(&self, n: usize, rng: &mut Stream) -> Result<Configuration> {
        if n == 0 {
            return config_err("sample size must be at least 1");
        }
        let d = self.dim();
        let mut coords = vec![0.0; n * d];
        for i in 0..n {
            self.sample_point(rng, &mut coords[i * d..(i + 1) * d]);
        }
        Configuration::new(d, coords)
    }

    pub fn sample_point(&self, rng: &mut Stream, out: &mut [f64]) {
        let d = self.dim();
        match &self.repr {
            Representation::Uniform => {
                let (lo, width) = box_geometry(&self.domain, 1);
                for v in out.iter_mut() {
                    *v = lo + width * rng.random::<f64>();
                }
            }
            Representation::Grid { cells, .. } => {
                let cell = self.alias.as_ref().expect("grid sampler").sample(rng);
                let (lo, h) = box_geometry(&self.domain, *cells);
                let mut pos = [0usize; 3];
                fft::unflatten(cell, *cells, d, &mut pos[..d]);
                for a in 0..d {
                    out[a] = lo + h * (pos[a] as f64 + rng.random::<f64>());
                }
                self.domain.wrap(out);
            }
            Representation::Atomic { points, .. } => {
                let j = self.alias.as_ref().expect("atomic sampler").sample(rng);
                out.copy_from_slice(&points[j * d..(j + 1) * d]);
            }
            Representation::Smooth(p) => loop {
                for v in out.iter_mut() {
                    *v = rng.random::<f64>();
                }
                if rng.random::<f64>() * self.envelope <= p.eval(out) {
                    break;
                }
            },
        }
    }

    /// Index of the atom drawn, for atomic measures (used by table-based
    /// energy paths).
    pub fn sample_atom(&self, rng: &mut Stream) -> Option<usize> {
        match &self.repr {
            Representation::Atomic { .. } => Some(self.alias.as_ref()?.sample(rng)),
            _ => None,
        }
    }

    /// Fourier coefficient `ρ̂_k = ∫ e^{-2πik·x} dρ̄(x)` on the torus.
    pub fn fourier_coefficient(&self, k: &[i64]) -> Result<Complex64> {
        if !self.domain.is_torus() {
            return Err(Error::Unsupported(
                "Fourier coefficients need a torus domain".into(),
            ));
        }
        Ok(match &self.repr {
            Representation::Uniform => {
                if k.iter().all(|&c| c == 0) {
                    Complex64::new(1.0, 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            }
            Representation::Grid { cells, .. } => {
                let m = *cells;
                let dft = self.grid_dft.as_ref().expect("torus grid DFT")[fft::fold_index(k, m)];
                let mut f = Complex64::new(1.0, 0.0);
                for &ka in k {
                    let u = ka as f64 / m as f64;
                    f *= Complex64::from_polar(sinc(u), -PI * u);
                }
                dft * f
            }
            Representation::Atomic { points, weights } => {
                let d = self.dim();
                let mut s = Complex64::new(0.0, 0.0);
                for (j, w) in weights.iter().enumerate() {
                    let ph: f64 = (0..d).map(|a| k[a] as f64 * points[j * d + a]).sum();
                    s += *w * Complex64::from_polar(1.0, -2.0 * PI * ph);
                }
                s
            }
            Representation::Smooth(p) => p.coefficient(k),
        })
    }

    /// `ρ̂_k` at every dense position of a mode table, as (re, im) arrays.
    pub fn spectrum_on(&self, table: &ModeTable) -> Result<(Vec<f64>, Vec<f64>)> {
        let d = self.dim();
        let mut re = vec![0.0; table.len()];
        let mut im = vec![0.0; table.len()];
        if self.is_uniform() {
            return Ok((re, im));
        }
        for &i in &table.active {
            let c = self.fourier_coefficient(&table.modes[i][..d])?;
            re[i] = c.re;
            im[i] = c.im;
        }
        Ok((re, im))
    }

    /// Density at a point (not defined for atomic measures).
    pub fn density(&self, x: &[f64]) -> Result<f64> {
        match &self.repr {
            Representation::Uniform => Ok(self.linf_density),
            Representation::Grid { cells, values } => {
                let d = self.dim();
                let (lo, h) = box_geometry(&self.domain, *cells);
                let mut idx = 0usize;
                for a in 0..d {
                    let c = ((x[a] - lo) / h).floor();
                    if c < 0.0 || c >= *cells as f64 {
                        return Ok(0.0);
                    }
                    idx = idx * cells + c as usize;
                }
                Ok(values[idx])
            }
            Representation::Atomic { .. } => Err(Error::Unsupported(
                "atomic measures have no density".into(),
            )),
            Representation::Smooth(p) => Ok(p.eval(x)),
        }
    }
}

/// Lower corner and cell width of an `M`-cell axis of the sampling box.
fn box_geometry(domain: &Domain, cells: usize) -> (f64, f64) {
    if domain.is_torus() {
        (0.0, 1.0 / cells as f64)
    } else {
        (-domain.radius, 2.0 * domain.radius / cells as f64)
    }
}

/// `W_ε ⋆ ρ̄` at the nodes of an `M^d` grid.
///
/// On the torus the nodes are `c/M` and the field is the exact truncated
/// series, obtained by folding `ĉ_k m_k ρ̂_k` modulo `M` and transforming.
/// In free space only atomic measures are supported, by direct summation on
/// the nodes of the box `[-R, R)^d`.
pub fn convolve(kernel: &Kernel, eps: f64, measure: &BaseMeasure, cells: usize) -> Result<GridField> {
    crate::kernel::check_eps(eps)?;
    let d = kernel.dim();
    if cells == 0 {
        return config_err("convolution grid needs at least one cell");
    }
    if measure.dim() != d {
        return config_err("kernel and measure dimensions differ");
    }
    let total = cells.pow(d as u32);
    if kernel.family == KernelFamily::Zero {
        let (origin, spacing) = box_geometry(&kernel.domain, cells);
        return Ok(GridField {
            dim: d,
            cells,
            origin,
            spacing,
            values: vec![0.0; total],
        });
    }
    if !kernel.domain.is_torus() {
        if !measure.is_atomic() {
            return Err(Error::Unsupported(
                "free-space convolution is only available for atomic measures".into(),
            ));
        }
        let (origin, spacing) = box_geometry(&kernel.domain, cells);
        let mut field = GridField {
            dim: d,
            cells,
            origin,
            spacing,
            values: vec![0.0; total],
        };
        for idx in 0..total {
            let x = field.node(idx);
            field.values[idx] = convolve_direct(kernel, eps, measure, &x)?;
        }
        return Ok(field);
    }
    let table = kernel.mode_table(eps)?;
    let mut data = vec![Complex64::new(0.0, 0.0); total];
    for &i in &table.active {
        let k = &table.modes[i][..d];
        let rho = measure.fourier_coefficient(k)?;
        let w = 0.5 * table.weights[i];
        let kneg: Vec<i64> = k.iter().map(|c| -c).collect();
        data[fft::fold_index(k, cells)] += w * rho;
        data[fft::fold_index(&kneg, cells)] += w * rho.conj();
    }
    fft::inverse(&mut data, cells, d);
    Ok(GridField {
        dim: d,
        cells,
        origin: 0.0,
        spacing: 1.0 / cells as f64,
        values: data.iter().map(|z| z.re).collect(),
    })
}

/// `(W_ε ⋆ ρ̄)(x)` by direct summation over atoms.
pub fn convolve_direct(kernel: &Kernel, eps: f64, measure: &BaseMeasure, x: &[f64]) -> Result<f64> {
    let (points, weights) = measure.atom_points().ok_or_else(|| {
        Error::Unsupported("direct convolution needs an atomic measure".into())
    })?;
    let d = measure.dim();
    let mut s = 0.0;
    for (j, w) in weights.iter().enumerate() {
        s += w * kernel.eval_eps(eps, x, &points[j * d..(j + 1) * d])?;
    }
    Ok(s)
}

/// `(W_ε ⋆ ρ̄)(x)` at a single point from the spectrum (torus kernels).
pub fn convolve_at(kernel: &Kernel, eps: f64, measure: &BaseMeasure, x: &[f64]) -> Result<f64> {
    if kernel.family == KernelFamily::Zero {
        return Ok(0.0);
    }
    if !kernel.domain.is_torus() {
        return convolve_direct(kernel, eps, measure, x);
    }
    let table = kernel.mode_table(eps)?;
    let (re, im) = measure.spectrum_on(&table)?;
    let mut ph = Vec::new();
    table.phases(x, &mut ph);
    let mut s = 0.0;
    for &i in &table.active {
        // Re(ρ̂_k e^{2πik·x}) with ph = e^{-2πik·x}
        s += table.weights[i] * (re[i] * ph[i].re + im[i] * ph[i].im);
    }
    Ok(s)
}
