//! Pseudospectral solver for `∂_t ρ = Δρ + ∇·(ρ(∇W_ε ⋆ ρ + ∇V))` on the
//! torus, `d ∈ {1, 2}`.
//!
//! Diffusion is integrated exactly with the factor `e^{-|2πk|² h}`; the
//! transport term is advanced by second-order Runge–Kutta in integrating-
//! factor form, with products formed on a 3/2-padded grid.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{config_err, Error, Result};
use crate::fft;
use crate::kernel::{Kernel, KernelFamily};
use crate::measure::{BaseMeasure, Representation};
use crate::potential::Potential;
use crate::trig::TrigPoly;

const TWO_PI: f64 = 2.0 * PI;
const MAX_HALVINGS: u32 = 10;
const NEGATIVITY_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PdeParams {
    /// Grid points per axis (even).
    pub cells: usize,
    pub dt: f64,
    /// Regularization of the kernel in the transport term.
    pub eps_reg: f64,
    /// Keep a snapshot every this many steps (the final state is always kept).
    pub save_every: usize,
}

impl PdeParams {
    pub fn new(cells: usize, dt: f64) -> PdeParams {
        PdeParams {
            cells,
            dt,
            eps_reg: super::sde::DEFAULT_EPS_REG,
            save_every: 1,
        }
    }
}

/// Current density on the grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PdeState {
    pub dim: usize,
    pub cells: usize,
    pub time: f64,
    pub dt: f64,
    /// Node values `ρ(c/M)`.
    pub density: Vec<f64>,
}

impl PdeState {
    /// Node values of a torus base measure (atomic measures have no density).
    pub fn from_measure(measure: &BaseMeasure, cells: usize) -> Result<PdeState> {
        let d = measure.dim();
        if !measure.domain.is_torus() {
            return config_err("the PDE solver works on the torus");
        }
        if cells < 4 || cells % 2 != 0 {
            return config_err(format!("PDE grid needs an even number ≥ 4 of cells, got {cells}"));
        }
        let density = match &measure.repr {
            Representation::Uniform => vec![1.0; cells.pow(d as u32)],
            Representation::Smooth(p) => p.to_grid(cells),
            Representation::Atomic { .. } => {
                return Err(Error::Unsupported("atomic initial data has no density".into()))
            }
            Representation::Grid { .. } => {
                let total = cells.pow(d as u32);
                let mut out = Vec::with_capacity(total);
                let mut pos = [0usize; 3];
                let mut x = [0.0; 3];
                for idx in 0..total {
                    fft::unflatten(idx, cells, d, &mut pos[..d]);
                    for a in 0..d {
                        x[a] = pos[a] as f64 / cells as f64;
                    }
                    out.push(measure.density(&x[..d])?);
                }
                out
            }
        };
        Ok(PdeState {
            dim: d,
            cells,
            time: 0.0,
            dt: 0.0,
            density,
        })
    }

    pub fn mass(&self) -> f64 {
        self.density.iter().sum::<f64>() / self.density.len() as f64
    }

    /// The band-limited interpolant of the node values as a base measure
    /// (the uniform measure when every nonzero mode vanishes).
    pub fn to_measure(&self) -> Result<BaseMeasure> {
        density_to_measure(&self.density, self.cells, self.dim)
    }
}

pub fn density_to_measure(values: &[f64], cells: usize, dim: usize) -> Result<BaseMeasure> {
    let domain = crate::domain::Domain::torus(dim)?;
    let mut p = TrigPoly::from_grid(values, cells, dim)?;
    let zero = [0i64; 3];
    let c0 = p.coefficient(&zero[..dim]);
    let rest = p.abs_coefficient_sum() - c0.norm();
    if rest < 1e-14 {
        return Ok(BaseMeasure::uniform(domain));
    }
    // node sums carry rounding at the 1e-16 level
    p.set(&zero[..dim], Complex64::new(1.0, 0.0));
    BaseMeasure::smooth(domain, p)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PdeTrajectory {
    pub dim: usize,
    pub cells: usize,
    pub times: Vec<f64>,
    pub snapshots: Vec<Vec<f64>>,
    /// Free energy `∫ρ log ρ + ∫Vρ + ½∬W_ε ρρ` after every step (index 0 is
    /// the initial state).
    pub free_energy: Vec<f64>,
    pub free_energy_times: Vec<f64>,
    /// Largest mass correction applied in a step.
    pub max_mass_correction: f64,
    /// Smallest node value seen.
    pub min_density: f64,
    /// Steps whose negative part was clipped.
    pub clip_events: u64,
    pub dt_halvings: u32,
    pub steps: u64,
    pub final_dt: f64,
}

impl PdeTrajectory {
    /// Node values at time `t` by cubic Lagrange interpolation over the four
    /// nearest snapshots.
    pub fn density_at(&self, t: f64) -> Result<Vec<f64>> {
        let n = self.times.len();
        let (t0, t1) = (self.times[0], self.times[n - 1]);
        if t < t0 - 1e-12 || t > t1 + 1e-12 {
            return config_err(format!("time {t} outside the solved range [{t0}, {t1}]"));
        }
        if let Some(i) = self.times.iter().position(|&s| (s - t).abs() <= 1e-14) {
            return Ok(self.snapshots[i].clone());
        }
        if n < 4 {
            // linear between neighbours
            let i = self.times.iter().rposition(|&s| s <= t).unwrap_or(0).min(n - 2);
            let w = (t - self.times[i]) / (self.times[i + 1] - self.times[i]);
            return Ok(self.snapshots[i]
                .iter()
                .zip(&self.snapshots[i + 1])
                .map(|(a, b)| (1.0 - w) * a + w * b)
                .collect());
        }
        let i = self.times.iter().rposition(|&s| s <= t).unwrap_or(0);
        let start = i.saturating_sub(1).min(n - 4);
        let ts = &self.times[start..start + 4];
        let mut out = vec![0.0; self.snapshots[0].len()];
        for j in 0..4 {
            let mut l = 1.0;
            for m in 0..4 {
                if m != j {
                    l *= (t - ts[m]) / (ts[j] - ts[m]);
                }
            }
            for (o, v) in out.iter_mut().zip(&self.snapshots[start + j]) {
                *o += l * v;
            }
        }
        Ok(out)
    }

    pub fn measure_at(&self, t: f64) -> Result<BaseMeasure> {
        density_to_measure(&self.density_at(t)?, self.cells, self.dim)
    }

    /// Largest step-to-step increase of the free energy (≤ 0 when the
    /// monitor is non-increasing).
    pub fn max_free_energy_increase(&self) -> f64 {
        self.free_energy
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

struct Solver {
    dim: usize,
    m: usize,
    pad: usize,
    /// Wavenumbers of each grid index.
    kvec: Vec<[i64; 3]>,
    /// `ĉ_k m_k` on the grid.
    kern: Vec<f64>,
    vhat: Vec<Complex64>,
    vgrid: Vec<f64>,
    lap: Vec<f64>,
}

impl Solver {
    fn new(kernel: &Kernel, potential: &Potential, m: usize, eps: f64) -> Result<Solver> {
        let d = kernel.dim();
        let total = m.pow(d as u32);
        let mut kvec = Vec::with_capacity(total);
        let mut pos = [0usize; 3];
        for idx in 0..total {
            fft::unflatten(idx, m, d, &mut pos[..d]);
            let mut k = [0i64; 3];
            for a in 0..d {
                k[a] = fft::wavenumber(pos[a], m);
            }
            kvec.push(k);
        }
        let kern = kvec
            .iter()
            .map(|k| match kernel.family {
                KernelFamily::TorusLog => kernel.fourier_weight(&k[..d], eps),
                _ => 0.0,
            })
            .collect();
        let mut vhat = vec![Complex64::new(0.0, 0.0); total];
        if let Potential::Fourier(p) = potential {
            for (k, c) in p.modes() {
                if k[..d].iter().all(|c| (c.unsigned_abs() as usize) < m / 2) {
                    vhat[fft::fold_index(&k[..d], m)] += c;
                }
            }
        }
        let mut vg = vhat.clone();
        fft::inverse(&mut vg, m, d);
        let lap = kvec
            .iter()
            .map(|k| -(TWO_PI * TWO_PI) * k[..d].iter().map(|c| (c * c) as f64).sum::<f64>())
            .collect();
        Ok(Solver {
            dim: d,
            m,
            pad: 3 * m / 2,
            kvec,
            kern,
            vhat,
            vgrid: vg.iter().map(|z| z.re).collect(),
            lap,
        })
    }

    fn is_nyquist(&self, k: &[i64]) -> bool {
        k.iter().any(|c| c.unsigned_abs() as usize == self.m / 2)
    }

    /// Copies `M`-grid coefficients into the padded grid (Nyquist dropped).
    fn pad_up(&self, hat: &[Complex64]) -> Vec<Complex64> {
        let d = self.dim;
        let mut out = vec![Complex64::new(0.0, 0.0); self.pad.pow(d as u32)];
        for (idx, k) in self.kvec.iter().enumerate() {
            if !self.is_nyquist(&k[..d]) {
                out[fft::fold_index(&k[..d], self.pad)] = hat[idx];
            }
        }
        out
    }

    fn truncate(&self, padded: &[Complex64]) -> Vec<Complex64> {
        let d = self.dim;
        self.kvec
            .iter()
            .map(|k| {
                if self.is_nyquist(&k[..d]) {
                    Complex64::new(0.0, 0.0)
                } else {
                    padded[fft::fold_index(&k[..d], self.pad)]
                }
            })
            .collect()
    }

    /// `F(ρ̂) = ∇·(ρ ∇(W ⋆ ρ + V))` in Fourier space, and `max |∇φ|`.
    fn transport(&self, rho: &[Complex64]) -> (Vec<Complex64>, f64) {
        let d = self.dim;
        let p = self.pad;
        let mut rho_p = self.pad_up(rho);
        fft::inverse(&mut rho_p, p, d);
        let mut out = vec![Complex64::new(0.0, 0.0); rho.len()];
        let mut speed2 = vec![0.0; rho_p.len()];
        for a in 0..d {
            let u: Vec<Complex64> = self
                .kvec
                .iter()
                .enumerate()
                .map(|(idx, k)| {
                    let phi = self.kern[idx] * rho[idx] + self.vhat[idx];
                    Complex64::new(0.0, TWO_PI * k[a] as f64) * phi
                })
                .collect();
            let mut u_p = self.pad_up(&u);
            fft::inverse(&mut u_p, p, d);
            let mut flux: Vec<Complex64> = u_p
                .iter()
                .zip(&rho_p)
                .zip(speed2.iter_mut())
                .map(|((uv, rv), s)| {
                    *s += uv.re * uv.re;
                    Complex64::new(uv.re * rv.re, 0.0)
                })
                .collect();
            fft::forward(&mut flux, p, d);
            let fl = self.truncate(&flux);
            for (idx, k) in self.kvec.iter().enumerate() {
                out[idx] += Complex64::new(0.0, TWO_PI * k[a] as f64) * fl[idx];
            }
        }
        let vmax = speed2.iter().copied().fold(0.0, f64::max).sqrt();
        (out, vmax)
    }

    fn free_energy(&self, rho_hat: &[Complex64], rho: &[f64]) -> f64 {
        let total = rho.len() as f64;
        let entropy: f64 = rho
            .iter()
            .map(|&r| if r > 0.0 { r * r.ln() } else { 0.0 })
            .sum::<f64>()
            / total;
        let potential: f64 = rho.iter().zip(&self.vgrid).map(|(r, v)| r * v).sum::<f64>() / total;
        let interaction: f64 = 0.5
            * rho_hat
                .iter()
                .zip(&self.kern)
                .map(|(c, w)| w * c.norm_sqr())
                .sum::<f64>();
        entropy + potential + interaction
    }
}

fn to_physical(hat: &[Complex64], m: usize, d: usize) -> Vec<f64> {
    let mut g = hat.to_vec();
    fft::inverse(&mut g, m, d);
    g.iter().map(|z| z.re).collect()
}

/// Solves from `initial` to `t_end`.
pub fn mv_solve(
    initial: &PdeState,
    kernel: &Kernel,
    potential: &Potential,
    params: PdeParams,
    t_end: f64,
) -> Result<PdeTrajectory> {
    let d = initial.dim;
    let m = initial.cells;
    if !kernel.domain.is_torus() || !(1..=2).contains(&d) || kernel.dim() != d {
        return config_err("the PDE solver needs a torus kernel in dimension 1 or 2");
    }
    if params.cells != m {
        return config_err("initial state and parameters disagree on the grid size");
    }
    if !(params.dt > 0.0) || !(t_end >= 0.0) || params.save_every == 0 {
        return config_err("need dt > 0, t_end ≥ 0 and save_every ≥ 1");
    }
    potential.check(&kernel.domain)?;
    let solver = Solver::new(kernel, potential, m, params.eps_reg)?;
    let mut hat = fft::forward_real(&initial.density, m, d);
    let zero = 0usize;
    let mut rho = initial.density.clone();
    let mut traj = PdeTrajectory {
        dim: d,
        cells: m,
        times: vec![initial.time],
        snapshots: vec![rho.clone()],
        free_energy: vec![solver.free_energy(&hat, &rho)],
        free_energy_times: vec![initial.time],
        max_mass_correction: (hat[zero].re - 1.0).abs(),
        min_density: rho.iter().copied().fold(f64::INFINITY, f64::min),
        clip_events: 0,
        dt_halvings: 0,
        steps: 0,
        final_dt: params.dt,
    };
    hat[zero] = Complex64::new(1.0, 0.0);
    let mut t = initial.time;
    let mut dt = params.dt;
    let cell = 1.0 / m as f64;
    while t < t_end - 1e-14 {
        let h0 = dt.min(t_end - t);
        let (n0, vmax) = solver.transport(&hat);
        let mut h = h0;
        let mut halvings = 0;
        while vmax * h > cell {
            if halvings == MAX_HALVINGS {
                return Err(Error::Integration(format!(
                    "CFL condition still violated after {MAX_HALVINGS} halvings at t = {t} (max speed {vmax:e})"
                )));
            }
            h *= 0.5;
            halvings += 1;
        }
        if halvings > 0 {
            traj.dt_halvings += halvings;
            dt = h;
        }
        let e: Vec<f64> = solver.lap.iter().map(|l| (l * h).exp()).collect();
        let a: Vec<Complex64> = hat
            .iter()
            .zip(&n0)
            .zip(&e)
            .map(|((y, f), ek)| (y + f * h) * ek)
            .collect();
        let (n1, _) = solver.transport(&a);
        for idx in 0..hat.len() {
            hat[idx] = (hat[idx] + n0[idx] * (0.5 * h)) * e[idx] + n1[idx] * (0.5 * h);
        }
        traj.max_mass_correction = traj.max_mass_correction.max((hat[zero] - 1.0).norm());
        hat[zero] = Complex64::new(1.0, 0.0);
        rho = to_physical(&hat, m, d);
        let min = rho.iter().copied().fold(f64::INFINITY, f64::min);
        traj.min_density = traj.min_density.min(min);
        if min < -NEGATIVITY_TOL {
            traj.clip_events += 1;
            rho.iter_mut().for_each(|r| *r = r.max(0.0));
            let s = rho.iter().sum::<f64>() / rho.len() as f64;
            rho.iter_mut().for_each(|r| *r /= s);
            hat = fft::forward_real(&rho, m, d);
            hat[zero] = Complex64::new(1.0, 0.0);
        }
        t += h;
        traj.steps += 1;
        traj.free_energy.push(solver.free_energy(&hat, &rho));
        traj.free_energy_times.push(t);
        if traj.steps % params.save_every as u64 == 0 || t >= t_end - 1e-14 {
            traj.times.push(t);
            traj.snapshots.push(rho.clone());
        }
    }
    traj.final_dt = dt;
    Ok(traj)
}
