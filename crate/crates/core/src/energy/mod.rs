//! The fluctuation field `η = N^{-1/2}(Σ_i δ_{x_i} - Nρ̄)` and its
//! diagonal-removed interaction energy
//!
//! `I̊ = (1/2N) Σ_{i≠j} W_ε(x_i, x_j) - Σ_i (W_ε ⋆ ρ̄)(x_i) + (N/2) ∬ W_ε dρ̄ dρ̄`.
//!
//! For torus kernels all three terms are computed from the structure factor
//! `S_k = Σ_i e^{-2πik·x_i}`: with `T_k = S_k - Nρ̂_k`,
//! `I̊ = (1/2N) Σ_{k≠0} ĉ_k m_k (|T_k|² - N)`. The diagonal is removed by
//! index, so coincident particles are allowed. Free-space kernels use
//! direct summation and atomic base measures.

pub mod probe;

use serde::{Deserialize, Serialize};

use crate::domain::Configuration;
use crate::error::{config_err, Error, Result};
use crate::kernel::{check_eps, Kernel, KernelFamily};
use crate::measure::BaseMeasure;
use crate::spectral::{ModeTable, Workspace};

pub use probe::{probe_lower_bound, probe_lower_bound_eps, ProbeRow};


#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub pair_term: f64,
    pub cross_term: f64,
    pub mean_term: f64,
    pub total: f64,
    pub eps: f64,
}

/// Normalization of the fluctuation field.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// `N^{-1/2}(Σ δ_{x_i} - Nρ̄)`, a zero-mass field.
    #[default]
    Centered,
    /// `N^{-1/2}(Σ δ_{x_i} - ρ̄)`, the field with mass `(N-1)/√N`.
    Literal,
}

/// Precomputed spectral data for repeated energy evaluations against a
/// fixed kernel, regularization and base measure.
#[derive(Clone, Debug)]
pub struct EnergyEvaluator {
    kernel: Kernel,
    eps: f64,
    measure: BaseMeasure,
    table: Option<ModeTable>,
    rho_re: Vec<f64>,
    rho_im: Vec<f64>,
    /// `∬ W_ε dρ̄ dρ̄`.
    self_energy: f64,
    ws: Workspace,
}

impl EnergyEvaluator {
    pub fn new(kernel: &Kernel, eps: f64, measure: &BaseMeasure) -> Result<Self> {
        check_eps(eps)?;
        if kernel.dim() != measure.dim() || kernel.domain.kind != measure.domain.kind {
            return config_err("kernel and measure live on different domains");
        }
        let mut ev = EnergyEvaluator {
            kernel: *kernel,
            eps,
            measure: measure.clone(),
            table: None,
            rho_re: Vec::new(),
            rho_im: Vec::new(),
            self_energy: 0.0,
            ws: Workspace::default(),
        };
        match kernel.family {
            KernelFamily::Zero => {}
            KernelFamily::TorusLog => {
                let table = kernel.mode_table(eps)?;
                let (re, im) = measure.spectrum_on(&table)?;
                ev.self_energy = table
                    .active
                    .iter()
                    .map(|&i| table.weights[i] * (re[i] * re[i] + im[i] * im[i]))
                    .sum();
                ev.rho_re = re;
                ev.rho_im = im;
                ev.table = Some(table);
            }
            KernelFamily::FreeLog => {
                let (pts, w) = measure.atom_points().ok_or_else(|| {
                    Error::Unsupported(
                        "free-space energies need an atomic base measure".into(),
                    )
                })?;
                let d = kernel.dim();
                let mut s = 0.0;
                for j in 0..w.len() {
                    for l in 0..w.len() {
                        s += w[j]
                            * w[l]
                            * kernel.eval_eps(eps, &pts[j * d..(j + 1) * d], &pts[l * d..(l + 1) * d])?;
                    }
                }
                ev.self_energy = s;
            }
        }
        Ok(ev)
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn measure(&self) -> &BaseMeasure {
        &self.measure
    }

    pub fn mode_table(&self) -> Option<&ModeTable> {
        self.table.as_ref()
    }

    /// `ρ̂` on the mode table, as (re, im).
    pub fn spectrum(&self) -> (&[f64], &[f64]) {
        (&self.rho_re, &self.rho_im)
    }

    /// `∬ W_ε dρ̄ dρ̄`.
    pub fn self_energy(&self) -> f64 {
        self.self_energy
    }

    pub fn evaluate(&mut self, coords: &[f64]) -> Result<EnergyBreakdown> {
        self.evaluate_with(coords, Normalization::Centered)
    }

    pub fn evaluate_with(&mut self, coords: &[f64], norm: Normalization) -> Result<EnergyBreakdown> {
        let d = self.kernel.dim();
        let n = coords.len() / d;
        if n == 0 {
            return config_err("empty configuration");
        }
        let nf = n as f64;
        let (pair, cross) = match self.kernel.family {
            KernelFamily::Zero => (0.0, 0.0),
            KernelFamily::TorusLog => {
                let table = self.table.as_ref().expect("torus table");
                table.structure_factor(coords, &mut self.ws);
                let (sre, sim) = (&self.ws.s_re, &self.ws.s_im);
                let mut pair = 0.0;
                let mut cross = 0.0;
                let uniform = self.measure.is_uniform();
                for &i in &table.active {
                    let w = table.weights[i];
                    // the pair sum is empty for one particle
                    if n > 1 {
                        pair += w * (sre[i] * sre[i] + sim[i] * sim[i] - nf);
                    }
                    if !uniform {
                        cross += w * (self.rho_re[i] * sre[i] + self.rho_im[i] * sim[i]);
                    }
                }
                (pair / (2.0 * nf), cross)
            }
            KernelFamily::FreeLog => {
                let mut pair = 0.0;
                for i in 0..n {
                    let xi = &coords[i * d..(i + 1) * d];
                    let mut row = 0.0;
                    for j in (i + 1)..n {
                        row += self.kernel.eval_eps(self.eps, xi, &coords[j * d..(j + 1) * d])?;
                    }
                    pair += row;
                }
                let (pts, w) = self.measure.atom_points().expect("atomic");
                let mut cross = 0.0;
                for i in 0..n {
                    let xi = &coords[i * d..(i + 1) * d];
                    for (j, wj) in w.iter().enumerate() {
                        cross += wj * self.kernel.eval_eps(self.eps, xi, &pts[j * d..(j + 1) * d])?;
                    }
                }
                (pair / nf, cross)
            }
        };
        let (cross, mean) = match norm {
            Normalization::Centered => (cross, 0.5 * nf * self.self_energy),
            Normalization::Literal => (cross / nf, 0.5 * self.self_energy / nf),
        };
        let total = pair - cross + mean;
        if !total.is_finite() {
            return Err(Error::Domain("non-finite interaction energy".into()));
        }
        Ok(EnergyBreakdown {
            pair_term: pair,
            cross_term: cross,
            mean_term: mean,
            total,
            eps: self.eps,
        })
    }

    /// Gradient of `I̊` with respect to every particle position, written to
    /// `out` (flat, `n·d`). With `with_measure = false` the base measure is
    /// dropped, leaving the gradient of the pair term `(1/2N)Σ_{i≠j} W_ε`.
    pub fn gradient(&mut self, coords: &[f64], with_measure: bool, out: &mut [f64]) -> Result<()> {
        self.gradient_inner(coords, with_measure, out, false)
    }

    /// `I̊` together with the gradient of the pair term and, optionally, of
    /// `I̊` itself; torus kernels compute the structure factor once.
    pub fn evaluate_with_gradients(
        &mut self,
        coords: &[f64],
        pair_grad: &mut [f64],
        full_grad: Option<&mut [f64]>,
    ) -> Result<EnergyBreakdown> {
        let e = self.evaluate(coords)?;
        let ready = self.kernel.family == KernelFamily::TorusLog;
        self.gradient_inner(coords, false, pair_grad, ready)?;
        if let Some(g) = full_grad {
            self.gradient_inner(coords, true, g, ready)?;
        }
        Ok(e)
    }

    fn gradient_inner(&mut self, coords: &[f64], with_measure: bool, out: &mut [f64], sf_ready: bool) -> Result<()> {
        let d = self.kernel.dim();
        let n = coords.len() / d;
        let nf = n as f64;
        out.iter_mut().for_each(|g| *g = 0.0);
        match self.kernel.family {
            KernelFamily::Zero => {}
            KernelFamily::TorusLog => {
                let table = self.table.as_ref().expect("torus table");
                if !sf_ready {
                    table.structure_factor(coords, &mut self.ws);
                }
                let use_rho = with_measure && !self.measure.is_uniform();
                // c_k = w_k · conj(T_k)
                let mut cre = vec![0.0; table.len()];
                let mut cim = vec![0.0; table.len()];
                for &k in &table.active {
                    let (mut tr, mut ti) = (self.ws.s_re[k], self.ws.s_im[k]);
                    if use_rho {
                        tr -= nf * self.rho_re[k];
                        ti -= nf * self.rho_im[k];
                    }
                    cre[k] = table.weights[k] * tr;
                    cim[k] = -table.weights[k] * ti;
                }
                table.phase_gradient(&cre, &cim, &mut self.ws, out);
                for g in out.iter_mut() {
                    *g /= nf;
                }
            }
            KernelFamily::FreeLog => {
                for i in 0..n {
                    let xi = &coords[i * d..(i + 1) * d];
                    for j in 0..n {
                        if j == i {
                            continue;
                        }
                        let g = self.kernel.eval_gradient(self.eps, xi, &coords[j * d..(j + 1) * d])?;
                        for a in 0..d {
                            out[i * d + a] += g[a] / nf;
                        }
                    }
                    if with_measure {
                        let (pts, w) = self.measure.atom_points().expect("atomic");
                        for (j, wj) in w.iter().enumerate() {
                            let g = self.kernel.eval_gradient(self.eps, xi, &pts[j * d..(j + 1) * d])?;
                            for a in 0..d {
                                out[i * d + a] -= wj * g[a];
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Three-term breakdown of `I̊_{W_ε}[η]` for one configuration.
pub fn interaction_energy(
    kernel: &Kernel,
    eps: f64,
    measure: &BaseMeasure,
    config: &Configuration,
) -> Result<EnergyBreakdown> {
    interaction_energy_with(kernel, eps, measure, config, Normalization::Centered)
}

pub fn interaction_energy_with(
    kernel: &Kernel,
    eps: f64,
    measure: &BaseMeasure,
    config: &Configuration,
    norm: Normalization,
) -> Result<EnergyBreakdown> {
    if config.dim != kernel.dim() {
        return config_err("configuration dimension differs from the kernel's");
    }
    EnergyEvaluator::new(kernel, eps, measure)?.evaluate_with(&config.coords, norm)
}

/// `E_{ρ̄^{⊗n}}[I̊_{W_ε}] = -(1/2) ∬ W_ε dρ̄ dρ̄`, independent of `n`.
pub fn mean_energy(kernel: &Kernel, eps: f64, measure: &BaseMeasure, n: usize) -> Result<f64> {
    if n == 0 {
        return config_err("n must be at least 1");
    }
    Ok(-0.5 * EnergyEvaluator::new(kernel, eps, measure)?.self_energy())
}

/// `(1/2N) Σ_{i≠j} W_ε(x_i, x_j)` by direct pair summation.
pub fn pair_energy_direct(kernel: &Kernel, eps: f64, config: &Configuration) -> Result<f64> {
    let n = config.n();
    let mut s = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            s += kernel.eval_eps(eps, config.point(i), config.point(j))?;
        }
    }
    Ok(s / n as f64)
}

/// Energy with the self-interaction restored,
/// `I̊ + (1/2N) Σ_i W_ε(x_i, x_i) = (1/2N) Σ_k ĉ_k m_k |T_k|² ≥ 0`.
pub fn restored_energy(kernel: &Kernel, eps: f64, measure: &BaseMeasure, config: &Configuration) -> Result<f64> {
    let e = interaction_energy(kernel, eps, measure, config)?;
    Ok(e.total + 0.5 * kernel.diagonal(eps)?)
}
