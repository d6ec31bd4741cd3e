//! Damped fixed-point iteration for the mean-field Euler–Lagrange equation
//! `μ̄ = Z_μ̄^{-1} exp(-W⋆μ̄ - V)` on a periodic grid.
//!
//! The density lives at the nodes `c/M`. `W⋆μ` is evaluated spectrally from
//! the trigonometric interpolant of the node values, so the result is exact
//! for the truncated kernel up to the grid band (the Nyquist mode is
//! dropped).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::pde::density_to_measure;
use crate::error::{config_err, Error, Result};
use crate::fft;
use crate::kernel::{Kernel, KernelFamily};
use crate::measure::BaseMeasure;
use crate::potential::Potential;

/// Deviation from the constant density below which `μ̄` is treated as
/// exactly uniform.
pub const UNIFORM_SNAP: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinimizerParams {
    pub cells: usize,
    /// `θ ∈ (0, 1]`.
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub eps: f64,
}

impl MinimizerParams {
    pub fn new(cells: usize) -> MinimizerParams {
        MinimizerParams {
            cells,
            damping: 1.0,
            tol: 1e-12,
            max_iter: 10_000,
            eps: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldMinimizer {
    pub dim: usize,
    pub cells: usize,
    /// Node values of `μ̄`, mean 1.
    pub density: Vec<f64>,
    /// `∫ exp(-W⋆μ̄ - V)`.
    pub z_mu: f64,
    /// `‖μ̄ - normalize(exp(-W⋆μ̄ - V))‖_∞` at the returned density.
    pub residual: f64,
    pub iterations: usize,
    pub history: Vec<f64>,
}

impl MeanFieldMinimizer {
    /// `μ̄` as a base measure: uniform when every node is within
    /// `UNIFORM_SNAP` of 1, otherwise its trigonometric interpolant.
    pub fn measure(&self) -> Result<BaseMeasure> {
        if self.distance_to_uniform() < UNIFORM_SNAP {
            return Ok(BaseMeasure::uniform(crate::domain::Domain::torus(self.dim)?));
        }
        density_to_measure(&self.density, self.cells, self.dim)
    }

    /// Sup-norm distance to the uniform density.
    pub fn distance_to_uniform(&self) -> f64 {
        self.density.iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max)
    }
}

/// Convolution with `W_ε` on an `M^d` node grid.
struct GridConvolver {
    dim: usize,
    cells: usize,
    /// `ĉ_k m_k` at each FFT position, 0 at the Nyquist modes.
    multiplier: Vec<f64>,
}

impl GridConvolver {
    fn new(kernel: &Kernel, eps: f64, cells: usize) -> GridConvolver {
        let d = kernel.dim();
        let total = cells.pow(d as u32);
        let mut multiplier = vec![0.0; total];
        if kernel.family == KernelFamily::TorusLog {
            let mut pos = [0usize; 3];
            let mut k = [0i64; 3];
            for (idx, m) in multiplier.iter_mut().enumerate() {
                fft::unflatten(idx, cells, d, &mut pos[..d]);
                let mut nyquist = false;
                for a in 0..d {
                    k[a] = fft::wavenumber(pos[a], cells);
                    nyquist |= cells % 2 == 0 && pos[a] == cells / 2;
                }
                if !nyquist {
                    *m = kernel.fourier_weight(&k[..d], eps);
                }
            }
        }
        GridConvolver {
            dim: d,
            cells,
            multiplier,
        }
    }

    fn apply(&self, values: &[f64], out: &mut [f64]) {
        let mut hat = fft::forward_real(values, self.cells, self.dim);
        for (h, m) in hat.iter_mut().zip(&self.multiplier) {
            *h *= *m;
        }
        fft::inverse(&mut hat, self.cells, self.dim);
        for (o, h) in out.iter_mut().zip(&hat) {
            *o = h.re;
        }
    }
}

/// Solves from the uniform density.
pub fn solve_minimizer(kernel: &Kernel, potential: &Potential, params: MinimizerParams) -> Result<MeanFieldMinimizer> {
    let total = params.cells.pow(kernel.dim() as u32);
    solve_minimizer_from(kernel, potential, &vec![1.0; total], params)
}

/// Solves from the node values `initial` (normalized to mean 1 first).
pub fn solve_minimizer_from(
    kernel: &Kernel,
    potential: &Potential,
    initial: &[f64],
    params: MinimizerParams,
) -> Result<MeanFieldMinimizer> {
    let d = kernel.dim();
    if !kernel.domain.is_torus() || !(1..=2).contains(&d) {
        return config_err("the minimizer is implemented on the torus in d = 1, 2");
    }
    potential.check(&kernel.domain)?;
    let m = params.cells;
    if m < 4 {
        return config_err("minimizer grid needs at least 4 cells per axis");
    }
    if !(params.damping > 0.0 && params.damping <= 1.0) {
        return config_err(format!("damping must lie in (0, 1], got {}", params.damping));
    }
    if !(params.tol > 0.0) {
        return config_err("tolerance must be positive");
    }
    let total = m.pow(d as u32);
    if initial.len() != total || initial.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return config_err("initial density must be positive with cells^dim node values");
    }
    let conv = GridConvolver::new(kernel, params.eps, m);
    let v_nodes: Vec<f64> = (0..total)
        .map(|idx| {
            let mut pos = [0usize; 3];
            fft::unflatten(idx, m, d, &mut pos[..d]);
            let x: Vec<f64> = pos[..d].iter().map(|&p| p as f64 / m as f64).collect();
            potential.value(&x)
        })
        .collect();

    let mass = initial.iter().sum::<f64>() / total as f64;
    let mut mu: Vec<f64> = initial.iter().map(|v| v / mass).collect();
    let mut phi = vec![0.0; total];
    let mut next = vec![0.0; total];
    let mut history = Vec::new();
    let theta = params.damping;
    for it in 0..=params.max_iter {
        conv.apply(&mu, &mut phi);
        for (p, v) in phi.iter_mut().zip(&v_nodes) {
            *p += v;
        }
        // shift by the minimum before exponentiating
        let shift = phi.iter().copied().fold(f64::INFINITY, f64::min);
        let mut z = 0.0;
        for (n, p) in next.iter_mut().zip(&phi) {
            *n = (shift - p).exp();
            z += *n;
        }
        z /= total as f64;
        for n in next.iter_mut() {
            *n /= z;
        }
        let residual = mu
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        history.push(residual);
        if !residual.is_finite() {
            return Err(Error::Convergence {
                iterations: it,
                residual,
                history,
            });
        }
        if residual < params.tol {
            return Ok(MeanFieldMinimizer {
                dim: d,
                cells: m,
                density: mu,
                z_mu: z * (-shift).exp(),
                residual,
                iterations: it,
                history,
            });
        }
        if it == params.max_iter {
            return Err(Error::Convergence {
                iterations: it,
                residual,
                history,
            });
        }
        for (a, b) in mu.iter_mut().zip(&next) {
            *a = (1.0 - theta) * *a + theta * b;
        }
    }
    unreachable!("loop returns on the last iteration")
}

/// `∬ W_ε² dμ dμ` on the torus, from the spectrum of `W_ε²` on a grid fine
/// enough to hold it without aliasing.
pub fn kernel_square_integral(kernel: &Kernel, eps: f64, measure: &BaseMeasure) -> Result<f64> {
    if kernel.family != KernelFamily::TorusLog {
        return Ok(0.0);
    }
    let d = kernel.dim();
    let band = 2 * kernel.cutoff;
    let cells = (2 * band + 2).next_power_of_two();
    let total = cells.pow(d as u32);
    let mut w = vec![Complex64::new(0.0, 0.0); total];
    let mut pos = [0usize; 3];
    let mut k = [0i64; 3];
    for (idx, v) in w.iter_mut().enumerate() {
        fft::unflatten(idx, cells, d, &mut pos[..d]);
        for a in 0..d {
            k[a] = fft::wavenumber(pos[a], cells);
        }
        *v = Complex64::new(kernel.fourier_weight(&k[..d], eps), 0.0);
    }
    fft::inverse(&mut w, cells, d);
    let sq: Vec<f64> = w.iter().map(|z| z.re * z.re).collect();
    let hat = fft::forward_real(&sq, cells, d);
    if measure.is_uniform() {
        return Ok(hat[0].re);
    }
    let mut s = 0.0;
    for (idx, h) in hat.iter().enumerate() {
        fft::unflatten(idx, cells, d, &mut pos[..d]);
        for a in 0..d {
            k[a] = fft::wavenumber(pos[a], cells);
        }
        if k[..d].iter().any(|c| c.unsigned_abs() as usize > band) {
            continue;
        }
        s += h.re * measure.fourier_coefficient(&k[..d])?.norm_sqr();
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Domain;

    #[test]
    fn decoupled_case_is_one_step() {
        let k = Kernel::zero(Domain::torus(1).unwrap());
        let v = Potential::single_mode(1, 0.7);
        let r = solve_minimizer(&k, &v, MinimizerParams::new(64)).unwrap();
        assert_eq!(r.iterations, 1);
        for (c, m) in r.density.iter().enumerate() {
            let x = c as f64 / 64.0;
            let want = (-0.7 * (2.0 * std::f64::consts::PI * x).cos()).exp() / r.z_mu;
            assert!((m - want).abs() < 1e-13);
        }
    }

    #[test]
    fn square_integral_uniform_matches_parseval() {
        let k = Kernel::torus_log_with_cutoff(1, 16).unwrap();
        let u = BaseMeasure::uniform(Domain::torus(1).unwrap());
        let got = kernel_square_integral(&k, 0.0, &u).unwrap();
        let want: f64 = (1..=16).map(|j| 2.0 * (2.0 * std::f64::consts::PI * j as f64).powi(-2)).sum();
        assert!((got - want).abs() < 1e-14);
    }
}
