//! Real trigonometric polynomials on the unit torus, `f(x) = Σ_{|k|_∞≤B} f̂_k e^{2πik·x}`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{config_err, Result};
use crate::fft;

const TWO_PI: f64 = 2.0 * PI;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrigPoly {
    pub dim: usize,
    pub band: usize,
    /// Coefficients on the `(2B+1)^d` block, axis offset by `B`, last axis fastest.
    pub coeffs: Vec<Complex64>,
}

impl TrigPoly {
    pub fn zeros(dim: usize, band: usize) -> TrigPoly {
        TrigPoly {
            dim,
            band,
            coeffs: vec![Complex64::new(0.0, 0.0); (2 * band + 1).pow(dim as u32)],
        }
    }

    pub fn constant(dim: usize, value: f64) -> TrigPoly {
        let mut p = Self::zeros(dim, 0);
        p.coeffs[0] = Complex64::new(value, 0.0);
        p
    }

    /// `value + amp·cos(2π x_1)`.
    pub fn cosine(dim: usize, value: f64, amp: f64) -> TrigPoly {
        let mut p = Self::zeros(dim, 1);
        let mut k = [0i64; 3];
        p.set(&k[..dim], Complex64::new(value, 0.0));
        k[0] = 1;
        p.set(&k[..dim], Complex64::new(0.5 * amp, 0.0));
        k[0] = -1;
        p.set(&k[..dim], Complex64::new(0.5 * amp, 0.0));
        p
    }

    /// Trigonometric interpolant of node values `f(c/M)` on an `M^d` grid.
    /// For even `M` the Nyquist coefficient is split evenly between `±M/2`.
    pub fn from_grid(values: &[f64], m: usize, dim: usize) -> Result<TrigPoly> {
        if values.len() != m.pow(dim as u32) || m == 0 {
            return config_err("grid size does not match cells^dim");
        }
        let hat = fft::forward_real(values, m, dim);
        let band = m / 2;
        let mut p = Self::zeros(dim, band);
        let side = 2 * band + 1;
        let mut k = [0i64; 3];
        let mut pos = [0usize; 3];
        for idx in 0..p.coeffs.len() {
            fft::unflatten(idx, side, dim, &mut pos[..dim]);
            let mut nyq = 0;
            for a in 0..dim {
                k[a] = pos[a] as i64 - band as i64;
                if m % 2 == 0 && k[a].unsigned_abs() as usize == band {
                    nyq += 1;
                }
            }
            let c = hat[fft::fold_index(&k[..dim], m)];
            p.coeffs[idx] = c / f64::powi(2.0, nyq);
        }
        Ok(p)
    }

    fn index(&self, k: &[i64]) -> Option<usize> {
        let b = self.band as i64;
        let side = 2 * self.band + 1;
        let mut idx = 0usize;
        for &c in k {
            if c.abs() > b {
                return None;
            }
            idx = idx * side + (c + b) as usize;
        }
        Some(idx)
    }

    pub fn coefficient(&self, k: &[i64]) -> Complex64 {
        self.index(k)
            .map(|i| self.coeffs[i])
            .unwrap_or(Complex64::new(0.0, 0.0))
    }

    pub fn set(&mut self, k: &[i64], v: Complex64) {
        let i = self.index(k).expect("mode inside band");
        self.coeffs[i] = v;
    }

    pub fn modes(&self) -> impl Iterator<Item = ([i64; 3], Complex64)> + '_ {
        let side = 2 * self.band + 1;
        let b = self.band as i64;
        let dim = self.dim;
        self.coeffs.iter().enumerate().map(move |(idx, &c)| {
            let mut pos = [0usize; 3];
            fft::unflatten(idx, side, dim, &mut pos[..dim]);
            let mut k = [0i64; 3];
            for a in 0..dim {
                k[a] = pos[a] as i64 - b;
            }
            (k, c)
        })
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.modes()
            .filter(|(_, c)| c.norm_sqr() > 0.0)
            .map(|(k, c)| {
                let ph: f64 = (0..self.dim).map(|a| k[a] as f64 * x[a]).sum();
                (c * Complex64::from_polar(1.0, TWO_PI * ph)).re
            })
            .sum()
    }

    pub fn gradient(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|g| *g = 0.0);
        for (k, c) in self.modes() {
            if c.norm_sqr() == 0.0 {
                continue;
            }
            let ph: f64 = (0..self.dim).map(|a| k[a] as f64 * x[a]).sum();
            // d/dx e^{2πik·x} = 2πik e^{2πik·x}
            let z = c * Complex64::from_polar(1.0, TWO_PI * ph);
            for a in 0..self.dim {
                out[a] -= TWO_PI * k[a] as f64 * z.im;
            }
        }
    }

    /// Node values on an `M^d` grid (modes folded modulo `M`).
    pub fn to_grid(&self, m: usize) -> Vec<f64> {
        let mut data = vec![Complex64::new(0.0, 0.0); m.pow(self.dim as u32)];
        for (k, c) in self.modes() {
            data[fft::fold_index(&k[..self.dim], m)] += c;
        }
        fft::inverse(&mut data, m, self.dim);
        data.iter().map(|z| z.re).collect()
    }

    pub fn abs_coefficient_sum(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).sum()
    }
}
