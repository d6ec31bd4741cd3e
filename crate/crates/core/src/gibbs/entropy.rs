//! Gibbs measures `M_N ∝ exp(-H_N)`, `H_N = (1/2N)Σ_{i≠j} W(x_i, x_j) + Σ_i V(x_i)`,
//! and their relative entropies to `μ̄^{⊗N}`.
//!
//! When `μ̄` solves the Euler–Lagrange equation, `M_N = Z_N^{-1} e^{-I̊} μ̄^{⊗N}`
//! with `Z_N = E_{μ̄^{⊗N}}[e^{-I̊}]`, so
//!
//! `H[μ̄^{⊗N} | M_N] = E_{μ̄^{⊗N}}[I̊] + log Z_N` and
//! `H[M_N | μ̄^{⊗N}] = -E_{M_N}[I̊] - log Z_N`.
//!
//! `E_{μ̄^{⊗N}}[I̊] = -(1/2)∬W dμ̄ dμ̄` is used exactly; it vanishes for the
//! uniform measure. `log Z_N` is estimated by importance sampling from
//! `μ̄^{⊗N}` and by thermodynamic integration along `M_{N,β} ∝ e^{-βI̊} μ̄^{⊗N}`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mala::{mala, Evaluation, MalaParams, MalaRun, Target};
use super::minimizer::kernel_square_integral;
use crate::domain::Domain;
use crate::energy::{mean_energy, EnergyEvaluator};
use crate::error::{config_err, Result};
use crate::kernel::{Kernel, KernelFamily};
use crate::measure::BaseMeasure;
use crate::partition::estimate_partition;
use crate::potential::Potential;
use crate::quadrature::gauss_legendre_unit;
use crate::rng::Seed;
use crate::stats;

pub const TI_NODES: usize = 8;
const BATCHES: usize = 50;

/// `log π_β(x) = -β·(pair term) + (β - 1)·Σ_i W⋆μ̄(x_i) - Σ_i V(x_i)`.
///
/// At `β = 1` this is `-H_N`; at `β = 0` it is `Σ_i log μ̄(x_i)` up to a
/// constant when `μ̄` solves the Euler–Lagrange equation. The recorded
/// observable is `I̊` relative to `μ̄`.
pub struct GibbsTarget {
    evaluator: EnergyEvaluator,
    potential: Potential,
    domain: Domain,
    beta: f64,
    n: usize,
    uniform: bool,
    pair_grad: Vec<f64>,
    full_grad: Vec<f64>,
}

impl GibbsTarget {
    pub fn new(
        kernel: &Kernel,
        eps: f64,
        mu_bar: &BaseMeasure,
        potential: &Potential,
        beta: f64,
        n: usize,
    ) -> Result<GibbsTarget> {
        if kernel.family == KernelFamily::FreeLog {
            return config_err("Gibbs sampling supports torus kernels or W = 0");
        }
        if !(beta >= 0.0 && beta.is_finite()) {
            return config_err(format!("beta must be finite and ≥ 0, got {beta}"));
        }
        if n == 0 {
            return config_err("n must be at least 1");
        }
        potential.check(&kernel.domain)?;
        let len = n * kernel.dim();
        Ok(GibbsTarget {
            evaluator: EnergyEvaluator::new(kernel, eps, mu_bar)?,
            potential: potential.clone(),
            domain: kernel.domain,
            beta,
            n,
            uniform: mu_bar.is_uniform() || kernel.is_zero(),
            pair_grad: vec![0.0; len],
            full_grad: vec![0.0; len],
        })
    }
}

impl Target for GibbsTarget {
    fn dimension(&self) -> usize {
        self.n * self.domain.dim
    }

    fn period(&self) -> Option<f64> {
        self.domain.is_torus().then_some(1.0)
    }

    fn evaluate(&mut self, x: &[f64], grad: &mut [f64]) -> Result<Evaluation> {
        let d = self.domain.dim;
        let full = (!self.uniform).then_some(&mut self.full_grad[..]);
        let e = self.evaluator.evaluate_with_gradients(x, &mut self.pair_grad, full)?;
        if self.uniform {
            for (g, p) in grad.iter_mut().zip(&self.pair_grad) {
                *g = -self.beta * p;
            }
        } else {
            // ∇cross = ∇pair - ∇I̊
            for i in 0..grad.len() {
                grad[i] = -self.pair_grad[i] + (1.0 - self.beta) * self.full_grad[i];
            }
        }
        let mut v = 0.0;
        let mut gv = [0.0; 3];
        for i in 0..self.n {
            let xi = &x[i * d..(i + 1) * d];
            v += self.potential.value(xi);
            self.potential.gradient(xi, &mut gv[..d]);
            for a in 0..d {
                grad[i * d + a] -= gv[a];
            }
        }
        Ok(Evaluation {
            log_density: -self.beta * e.pair_term + (self.beta - 1.0) * e.cross_term - v,
            observable: e.total,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GibbsRun {
    pub n: usize,
    pub beta: f64,
    pub step: f64,
    pub acceptance: f64,
    pub step_capped: bool,
    /// Acceptance outside (0.2, 0.9) with the step not at its cap.
    pub flagged: bool,
    /// Chain average of `I̊` and its batch-means standard error.
    pub mean_energy: f64,
    pub mean_energy_se: f64,
    pub chain: MalaRun,
}

/// MALA chain for `M_{N,β}`, started from a draw of `μ̄^{⊗N}` (`seed.child(0)`)
/// and driven by `seed.child(1)`.
#[allow(clippy::too_many_arguments)]
pub fn sample_gibbs_beta(
    kernel: &Kernel,
    eps: f64,
    mu_bar: &BaseMeasure,
    potential: &Potential,
    n: usize,
    beta: f64,
    params: MalaParams,
    seed: Seed,
) -> Result<GibbsRun> {
    let mut target = GibbsTarget::new(kernel, eps, mu_bar, potential, beta, n)?;
    let x0 = mu_bar.sample(n, &mut seed.child(0).rng())?;
    let chain = mala(&mut target, &x0.coords, params, &mut seed.child(1).rng())?;
    let flagged = !(chain.acceptance > 0.2 && chain.acceptance < 0.9) && !chain.step_capped;
    Ok(GibbsRun {
        n,
        beta,
        step: chain.step,
        acceptance: chain.acceptance,
        step_capped: chain.step_capped,
        flagged,
        mean_energy: stats::mean(&chain.observables),
        mean_energy_se: stats::batch_means_se(&chain.observables, BATCHES),
        chain,
    })
}

/// MALA chain for the Gibbs measure `M_N ∝ exp(-H_N)`.
pub fn sample_gibbs(
    kernel: &Kernel,
    eps: f64,
    mu_bar: &BaseMeasure,
    potential: &Potential,
    n: usize,
    params: MalaParams,
    seed: Seed,
) -> Result<GibbsRun> {
    sample_gibbs_beta(kernel, eps, mu_bar, potential, n, 1.0, params, seed)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyParams {
    pub eps: f64,
    pub chain: MalaParams,
    /// Importance-sampling draws per `N`.
    pub is_samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyRow {
    pub n: usize,
    pub log_z_is: f64,
    pub log_z_is_se: f64,
    pub log_z_ti: f64,
    pub log_z_ti_se: f64,
    /// Precision-weighted combination when the two agree, otherwise the
    /// importance-sampling value.
    pub log_z: f64,
    pub log_z_se: f64,
    /// Within 3 combined standard errors.
    pub estimators_agree: bool,
    /// `E_{μ̄^{⊗N}}[I̊]`, exact.
    pub product_mean_energy: f64,
    pub gibbs_mean_energy: f64,
    pub gibbs_mean_energy_se: f64,
    pub h_forward: f64,
    pub h_forward_se: f64,
    pub h_backward: f64,
    pub h_backward_se: f64,
    /// Per-particle entropies (÷N).
    pub h_forward_bar: f64,
    pub h_backward_bar: f64,
    /// `∬W² dμ̄dμ̄`, `Z_N`, `Z_{N,2}` and the resulting upper bound on the
    /// forward entropy.
    pub w_square: f64,
    pub z: f64,
    pub z2: f64,
    pub z2_se: f64,
    pub entropy_bound: f64,
    pub bound_holds: bool,
    pub min_acceptance: f64,
    pub flagged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub slope_se: f64,
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyTable {
    pub rows: Vec<EntropyRow>,
    pub backward_rate: Option<RateFit>,
    pub forward_rate: Option<RateFit>,
}

fn combine(a: f64, sa: f64, b: f64, sb: f64) -> (f64, f64) {
    if sa == 0.0 && sb == 0.0 {
        return (0.5 * (a + b), 0.0);
    }
    if sa == 0.0 {
        return (a, 0.0);
    }
    if sb == 0.0 {
        return (b, 0.0);
    }
    let (wa, wb) = (1.0 / (sa * sa), 1.0 / (sb * sb));
    ((wa * a + wb * b) / (wa + wb), (1.0 / (wa + wb)).sqrt())
}

/// Entropy rates across `n_values` at the base measure `μ̄` (normally the
/// minimizer's output). Per `N` with `s = seed.child(N)`: importance
/// sampling uses `s.child(0)`, `Z_{N,2}` uses `s.child(1)`, the `β = 1`
/// chain `s.child(2)` and the integration node `j` the chain `s.path([3, j])`.
pub fn entropy_rates(
    kernel: &Kernel,
    mu_bar: &BaseMeasure,
    potential: &Potential,
    n_values: &[usize],
    params: &EntropyParams,
    seed: Seed,
) -> Result<EntropyTable> {
    if !kernel.domain.is_torus() {
        return config_err("entropy rates are computed on the torus");
    }
    if n_values.is_empty() || n_values.iter().any(|&n| n == 0 || n > 256) {
        return config_err("n_values must lie in 1..=256");
    }
    let eps = params.eps;
    let w_square = kernel_square_integral(kernel, eps, mu_bar)?;
    let (nodes, weights) = gauss_legendre_unit(TI_NODES);
    let mut rows = Vec::with_capacity(n_values.len());
    for &n in n_values {
        let s = seed.child(n as u64);
        let is = estimate_partition(kernel, mu_bar, n, 1.0, eps, params.is_samples, s.child(0))?;
        let is2 = estimate_partition(kernel, mu_bar, n, 2.0, eps, params.is_samples, s.child(1))?;
        // β = 1 chain first, then the integration nodes
        let betas: Vec<(f64, Seed)> = std::iter::once((1.0, s.child(2)))
            .chain(nodes.iter().enumerate().map(|(j, &b)| (b, s.path(&[3, j as u64]))))
            .collect();
        let runs: Vec<Result<GibbsRun>> = betas
            .par_iter()
            .map(|&(b, sd)| sample_gibbs_beta(kernel, eps, mu_bar, potential, n, b, params.chain, sd))
            .collect();
        let runs: Vec<GibbsRun> = runs.into_iter().collect::<Result<_>>()?;
        let gibbs = &runs[0];
        let mut ti = 0.0;
        let mut ti_var = 0.0;
        for (r, w) in runs[1..].iter().zip(&weights) {
            ti -= w * r.mean_energy;
            ti_var += w * w * r.mean_energy_se * r.mean_energy_se;
        }
        let ti_se = ti_var.sqrt();
        let is_log = is.log_mean;
        let is_se = is.std_error / is.mean;
        let agree = (is_log - ti).abs() <= 3.0 * (is_se * is_se + ti_var).sqrt();
        let (log_z, log_z_se) = if agree {
            combine(is_log, is_se, ti, ti_se)
        } else {
            (is_log, is_se)
        };
        let product = mean_energy(kernel, eps, mu_bar, n)?;
        let h_bwd = product + log_z + 0.0;
        let h_fwd = -gibbs.mean_energy - log_z + 0.0;
        let h_fwd_se = (gibbs.mean_energy_se.powi(2) + log_z_se * log_z_se).sqrt();
        let z = log_z.exp();
        let bound = w_square / z + is2.mean / z - log_z;
        let bound_se = (is2.std_error / z).hypot(log_z_se * (1.0 + (w_square + is2.mean) / z));
        let min_acceptance = runs.iter().map(|r| r.acceptance).fold(1.0, f64::min);
        rows.push(EntropyRow {
            n,
            log_z_is: is_log,
            log_z_is_se: is_se,
            log_z_ti: ti,
            log_z_ti_se: ti_se,
            log_z,
            log_z_se,
            estimators_agree: agree,
            product_mean_energy: product,
            gibbs_mean_energy: gibbs.mean_energy,
            gibbs_mean_energy_se: gibbs.mean_energy_se,
            h_forward: h_fwd,
            h_forward_se: h_fwd_se,
            h_backward: h_bwd,
            h_backward_se: log_z_se,
            h_forward_bar: h_fwd / n as f64,
            h_backward_bar: h_bwd / n as f64,
            w_square,
            z,
            z2: is2.mean,
            z2_se: is2.std_error,
            entropy_bound: bound,
            bound_holds: h_fwd <= bound + 3.0 * h_fwd_se.hypot(bound_se),
            min_acceptance,
            flagged: !agree || runs.iter().any(|r| r.flagged),
        });
    }
    let backward_rate = fit_rate(&rows, |r| (r.h_backward_bar, r.h_backward_se / r.n as f64));
    let forward_rate = fit_rate(&rows, |r| (r.h_forward_bar, r.h_forward_se / r.n as f64));
    Ok(EntropyTable {
        rows,
        backward_rate,
        forward_rate,
    })
}

/// Weighted fit of `log h̄` against `log N` over the rows with `h̄ > 0`.
pub fn fit_rate<F: Fn(&EntropyRow) -> (f64, f64)>(rows: &[EntropyRow], value: F) -> Option<RateFit> {
    let pts: Vec<(f64, f64, f64)> = rows
        .iter()
        .filter_map(|r| {
            let (h, se) = value(r);
            (h > 0.0).then(|| ((r.n as f64).ln(), h.ln(), (se / h).max(1e-12)))
        })
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let x: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let s: Vec<f64> = pts.iter().map(|p| p.2).collect();
    let f = stats::weighted_linear_fit(&x, &y, &s);
    Some(RateFit {
        slope: f.slope,
        slope_se: f.slope_se,
        points: pts.len(),
    })
}
