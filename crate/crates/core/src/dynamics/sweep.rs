//! The averaged modulated interaction energy `E[(1/N) I̊_{W_ε}[η^N_{X_t}]]`,
//! measured against the PDE solution `ρ̄_t`, across `N`.
//!
//! Each replica is paired with a free twin: the same initial positions and
//! the same noise, but `W = 0`. The twin's particles stay independent with
//! law `ν_t`, so every mode of its energy has a closed-form mean:
//! with `y_k = |S_k - Nρ̂_k|² - N`, `E[y_k] = N²|ν̂_k - ρ̂_k|² - N|ν̂_k|²`.
//! Each mode of the interacting system is then estimated with the twin's
//! mode as a control variate, the coefficient fitted across replicas.
//! Low modes stay strongly correlated between the two systems; high modes
//! decorrelate and get coefficients near zero.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::pde::{mv_solve, PdeParams, PdeState};
use super::sde::{SdeIntegrator, SdeParams};
use crate::error::{config_err, Result};
use crate::kernel::Kernel;
use crate::measure::BaseMeasure;
use crate::potential::Potential;
use crate::rng::Seed;
use crate::spectral::Workspace;
use crate::stats;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepParams {
    pub n_values: Vec<usize>,
    /// Measurement times, increasing.
    pub times: Vec<f64>,
    pub replicas: usize,
    pub dt: f64,
    pub eps_reg: f64,
    pub pde_cells: usize,
    pub pde_dt: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub t: f64,
    /// Control-variate estimate of `E[(1/N) I̊]`.
    pub modulated: f64,
    pub se: f64,
    /// Plain replica average of `(1/N) I̊`.
    pub raw: f64,
    pub raw_se: f64,
    /// Closed-form `(1/N) E[I̊]` of the free twin.
    pub control_mean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub t: f64,
    /// Fitted exponent of `|E[(1/N) I̊]| ∝ N^slope`.
    pub slope: f64,
    pub slope_se: f64,
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModulatedSweep {
    pub eps_reg: f64,
    pub rows: Vec<SweepRow>,
    pub slopes: Vec<SlopeFit>,
    pub cap_activations: u64,
}

pub fn modulated_energy_sweep(
    kernel: &Kernel,
    potential: &Potential,
    rho0: &BaseMeasure,
    params: &SweepParams,
    seed: Seed,
) -> Result<ModulatedSweep> {
    let p = params;
    if p.replicas < 2 {
        return config_err("need at least 2 replicas");
    }
    if p.times.is_empty() || p.times.windows(2).any(|w| w[1] <= w[0]) || p.times[0] < 0.0 {
        return config_err("times must be nonnegative and increasing");
    }
    if p.n_values.is_empty() || p.n_values.iter().any(|&n| n < 2) {
        return config_err("n_values must be at least 2");
    }
    let t_max = *p.times.last().expect("nonempty");
    let mut pde = PdeParams::new(p.pde_cells, p.pde_dt);
    pde.eps_reg = p.eps_reg;
    let init = PdeState::from_measure(rho0, p.pde_cells)?;
    let zero = Kernel::zero(kernel.domain);
    let rho_traj = mv_solve(&init, kernel, potential, pde, t_max)?;
    let nu_traj = mv_solve(&init, &zero, potential, pde, t_max)?;

    // per time: ρ̂_t, and E[y_k] of the free twin split as N²·a_k - N·b_k
    let table = kernel.mode_table(p.eps_reg)?;
    let mut rho_hat = Vec::with_capacity(p.times.len());
    let mut control = Vec::with_capacity(p.times.len());
    for &t in &p.times {
        let (rre, rim) = rho_traj.measure_at(t)?.spectrum_on(&table)?;
        let (nre, nim) = nu_traj.measure_at(t)?.spectrum_on(&table)?;
        let ab: Vec<(f64, f64)> = table
            .active
            .iter()
            .map(|&k| {
                (
                    (nre[k] - rre[k]).powi(2) + (nim[k] - rim[k]).powi(2),
                    nre[k] * nre[k] + nim[k] * nim[k],
                )
            })
            .collect();
        control.push(ab);
        rho_hat.push((rre, rim));
    }

    let sde = SdeParams {
        dt: p.dt,
        eps_reg: p.eps_reg,
        force_cap: None,
    };
    let nt = p.times.len();
    let mut rows = Vec::new();
    let mut caps = 0;
    for &n in &p.n_values {
        let nf = n as f64;
        // y_k = |S_k - Nρ̂_k|² - N on the active modes, per time
        let mode_values = |coords: &[f64], j: usize, ws: &mut Workspace| -> Vec<f64> {
            table.structure_factor(coords, ws);
            let (rre, rim) = &rho_hat[j];
            table
                .active
                .iter()
                .map(|&k| {
                    let tr = ws.s_re[k] - nf * rre[k];
                    let ti = ws.s_im[k] - nf * rim[k];
                    tr * tr + ti * ti - nf
                })
                .collect()
        };
        type Run = (Vec<Vec<f64>>, Vec<Vec<f64>>, u64);
        let runs: Vec<Result<Run>> = (0..p.replicas)
            .into_par_iter()
            .map(|r| {
                let s = seed.path(&[n as u64, r as u64]);
                let x0 = rho0.sample(n, &mut s.child(0).rng())?;
                let streams: Vec<_> = (0..n).map(|i| s.path(&[1, i as u64]).rng()).collect();
                let mut inter = SdeIntegrator::with_streams(kernel, potential, x0.clone(), sde, streams.clone())?;
                let mut free = SdeIntegrator::with_streams(&zero, potential, x0, sde, streams)?;
                let mut ws = Workspace::default();
                let mut yi = Vec::with_capacity(nt);
                let mut yf = Vec::with_capacity(nt);
                for (j, &t) in p.times.iter().enumerate() {
                    inter.run_until(t)?;
                    free.run_until(t)?;
                    yi.push(mode_values(&inter.state.config.coords, j, &mut ws));
                    yf.push(mode_values(&free.state.config.coords, j, &mut ws));
                }
                Ok((yi, yf, inter.state.cap_activations))
            })
            .collect();
        let mut yi = Vec::with_capacity(p.replicas);
        let mut yf = Vec::with_capacity(p.replicas);
        for run in runs {
            let (a, b, c) = run?;
            caps += c;
            yi.push(a);
            yf.push(b);
        }
        for (j, &t) in p.times.iter().enumerate() {
            let modes = table.active.len();
            let mut z = vec![0.0; p.replicas];
            let mut raw = vec![0.0; p.replicas];
            let mut cm = 0.0;
            for m in 0..modes {
                let w = table.weights[table.active[m]] / (2.0 * nf * nf);
                let (a, b) = control[j][m];
                let ey = nf * nf * a - nf * b;
                cm += w * ey;
                let xi: Vec<f64> = (0..p.replicas).map(|r| yi[r][j][m]).collect();
                let xf: Vec<f64> = (0..p.replicas).map(|r| yf[r][j][m]).collect();
                let beta = regression_coefficient(&xi, &xf);
                for r in 0..p.replicas {
                    raw[r] += w * xi[r];
                    z[r] += w * (xi[r] - beta * (xf[r] - ey));
                }
            }
            rows.push(SweepRow {
                n,
                t,
                modulated: stats::mean(&z),
                se: stats::std_error(&z),
                raw: stats::mean(&raw),
                raw_se: stats::std_error(&raw),
                control_mean: cm,
            });
        }
    }
    let slopes = p
        .times
        .iter()
        .filter_map(|&t| fit_slope(&rows, t))
        .collect();
    Ok(ModulatedSweep {
        eps_reg: p.eps_reg,
        rows,
        slopes,
        cap_activations: caps,
    })
}

/// `cov(x, y) / var(y)`, or 0 when `y` is constant.
fn regression_coefficient(x: &[f64], y: &[f64]) -> f64 {
    let mx = stats::mean(x);
    let my = stats::mean(y);
    let (mut sxy, mut syy) = (0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        syy += (b - my) * (b - my);
    }
    if syy > 0.0 {
        sxy / syy
    } else {
        0.0
    }
}

/// Weighted fit of `log|E|` against `log N` at time `t`, over the rows
/// whose estimate is nonzero.
pub fn fit_slope(rows: &[SweepRow], t: f64) -> Option<SlopeFit> {
    let pts: Vec<&SweepRow> = rows
        .iter()
        .filter(|r| r.t == t && r.modulated != 0.0)
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let x: Vec<f64> = pts.iter().map(|r| (r.n as f64).ln()).collect();
    let y: Vec<f64> = pts.iter().map(|r| r.modulated.abs().ln()).collect();
    let s: Vec<f64> = pts
        .iter()
        .map(|r| (r.se / r.modulated.abs()).max(1e-12))
        .collect();
    let f = stats::weighted_linear_fit(&x, &y, &s);
    Some(SlopeFit {
        t,
        slope: f.slope,
        slope_se: f.slope_se,
        points: pts.len(),
    })
}
