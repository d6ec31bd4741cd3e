//! Euler–Maruyama integration of
//! `dX^i = -∇V(X^i) dt - (1/N) Σ_{j≠i} ∇₁W_ε(X^i, X^j) dt + √2 dB^i`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::domain::{Configuration, Domain};
use crate::energy::EnergyEvaluator;
use crate::error::{config_err, Error, Result};
use crate::kernel::{Kernel, KernelFamily};
use crate::measure::BaseMeasure;
use crate::potential::Potential;
use crate::rng::{Seed, Stream};

pub const DEFAULT_EPS_REG: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SdeParams {
    pub dt: f64,
    pub eps_reg: f64,
    /// Per-particle drift cap; `None` means `10/√dt`.
    pub force_cap: Option<f64>,
}

impl SdeParams {
    pub fn new(dt: f64) -> SdeParams {
        SdeParams {
            dt,
            eps_reg: DEFAULT_EPS_REG,
            force_cap: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SdeState {
    pub config: Configuration,
    pub time: f64,
    pub dt: f64,
    pub eps_reg: f64,
    pub force_cap: f64,
    pub steps: u64,
    /// Particle-steps at which the drift was capped.
    pub cap_activations: u64,
}

/// Integrator state plus one noise stream per particle. Particle `i` draws
/// its noise from `seed.child(i)`, so relabelling particles together with
/// their streams relabels the trajectory.
#[derive(Clone)]
pub struct SdeIntegrator {
    pub state: SdeState,
    domain: Domain,
    kernel: Kernel,
    potential: Potential,
    evaluator: Option<EnergyEvaluator>,
    streams: Vec<Stream>,
    drift: Vec<f64>,
    noise: Vec<f64>,
}

impl SdeIntegrator {
    pub fn new(
        kernel: &Kernel,
        potential: &Potential,
        config: Configuration,
        params: SdeParams,
        seed: Seed,
    ) -> Result<SdeIntegrator> {
        let streams = (0..config.n()).map(|i| seed.child(i as u64).rng()).collect();
        Self::with_streams(kernel, potential, config, params, streams)
    }

    pub fn with_streams(
        kernel: &Kernel,
        potential: &Potential,
        mut config: Configuration,
        params: SdeParams,
        streams: Vec<Stream>,
    ) -> Result<SdeIntegrator> {
        if !(params.dt > 0.0 && params.dt.is_finite()) {
            return config_err(format!("dt must be positive, got {}", params.dt));
        }
        if !(params.eps_reg >= 0.0) {
            return config_err(format!("eps_reg must be ≥ 0, got {}", params.eps_reg));
        }
        if config.dim != kernel.dim() {
            return config_err("configuration dimension differs from the kernel's");
        }
        if streams.len() != config.n() {
            return config_err("need one noise stream per particle");
        }
        potential.check(&kernel.domain)?;
        let force_cap = params.force_cap.unwrap_or(10.0 / params.dt.sqrt());
        if !(force_cap > 0.0) {
            return config_err("force cap must be positive");
        }
        let evaluator = match kernel.family {
            KernelFamily::TorusLog => Some(EnergyEvaluator::new(
                kernel,
                params.eps_reg,
                &BaseMeasure::uniform(kernel.domain),
            )?),
            _ => None,
        };
        config.wrap(&kernel.domain);
        let len = config.coords.len();
        Ok(SdeIntegrator {
            state: SdeState {
                config,
                time: 0.0,
                dt: params.dt,
                eps_reg: params.eps_reg,
                force_cap,
                steps: 0,
                cap_activations: 0,
            },
            domain: kernel.domain,
            kernel: *kernel,
            potential: potential.clone(),
            evaluator,
            streams,
            drift: vec![0.0; len],
            noise: vec![0.0; len],
        })
    }

    /// Drift `-∇V(x_i) - (1/N) Σ_{j≠i} ∇₁W_ε(x_i, x_j)` for every particle,
    /// before capping.
    pub fn drift(&mut self, out: &mut [f64]) -> Result<()> {
        let d = self.state.config.dim;
        let n = self.state.config.n();
        let coords = &self.state.config.coords;
        match self.kernel.family {
            KernelFamily::Zero => out.iter_mut().for_each(|v| *v = 0.0),
            KernelFamily::TorusLog => {
                self.evaluator
                    .as_mut()
                    .expect("torus evaluator")
                    .gradient(coords, false, out)?;
            }
            KernelFamily::FreeLog => {
                out.iter_mut().for_each(|v| *v = 0.0);
                for i in 0..n {
                    for j in (i + 1)..n {
                        let g = self.kernel.eval_gradient(
                            self.state.eps_reg,
                            &coords[i * d..(i + 1) * d],
                            &coords[j * d..(j + 1) * d],
                        )?;
                        // ∇₁W(x_j, x_i) = -∇₁W(x_i, x_j) for a radial kernel
                        for a in 0..d {
                            out[i * d + a] += g[a] / n as f64;
                            out[j * d + a] -= g[a] / n as f64;
                        }
                    }
                }
            }
        }
        let mut gv = [0.0; 3];
        for i in 0..n {
            self.potential.gradient(&coords[i * d..(i + 1) * d], &mut gv[..d]);
            for a in 0..d {
                out[i * d + a] = -out[i * d + a] - gv[a];
            }
        }
        Ok(())
    }

    /// One step with standard-normal increments drawn from the particle
    /// streams.
    pub fn step(&mut self) -> Result<()> {
        for (i, rng) in self.streams.iter_mut().enumerate() {
            let d = self.state.config.dim;
            for a in 0..d {
                self.noise[i * d + a] = rng.sample(StandardNormal);
            }
        }
        let noise = std::mem::take(&mut self.noise);
        let r = self.step_with_noise(&noise);
        self.noise = noise;
        r
    }

    /// One step with the given standard-normal increments `ξ`:
    /// `x ← x + dt·drift + √(2dt)·ξ`.
    pub fn step_with_noise(&mut self, xi: &[f64]) -> Result<()> {
        let d = self.state.config.dim;
        let n = self.state.config.n();
        if xi.len() != n * d {
            return config_err("noise vector has the wrong length");
        }
        let mut drift = std::mem::take(&mut self.drift);
        let res = self.drift(&mut drift);
        if let Err(e) = res {
            self.drift = drift;
            return Err(e);
        }
        let dt = self.state.dt;
        let sigma = (2.0 * dt).sqrt();
        let cap = self.state.force_cap;
        for i in 0..n {
            let g = &mut drift[i * d..(i + 1) * d];
            let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > cap {
                self.state.cap_activations += 1;
                g.iter_mut().for_each(|v| *v *= cap / norm);
            }
        }
        let coords = &mut self.state.config.coords;
        for idx in 0..n * d {
            coords[idx] += dt * drift[idx] + sigma * xi[idx];
        }
        self.drift = drift;
        if let Some(bad) = (0..n).find(|&i| coords[i * d..(i + 1) * d].iter().any(|v| !v.is_finite())) {
            let closest = self
                .state
                .config
                .closest_pair(&self.domain)
                .map_or(f64::NAN, |(_, _, r)| r);
            return Err(Error::Integration(format!(
                "particle {bad} left the finite range at t = {}; closest pair distance {closest:e}",
                self.state.time
            )));
        }
        self.state.config.wrap(&self.domain);
        self.state.time += dt;
        self.state.steps += 1;
        Ok(())
    }

    /// Steps until the time reaches `t` (to within half a step).
    pub fn run_until(&mut self, t: f64) -> Result<()> {
        while self.state.time + 0.5 * self.state.dt < t {
            self.step()?;
        }
        Ok(())
    }

    pub fn config(&self) -> &Configuration {
        &self.state.config
    }
}

/// Snapshots of one SDE run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SdeTrajectory {
    pub times: Vec<f64>,
    pub snapshots: Vec<Configuration>,
    pub cap_activations: u64,
    pub steps: u64,
}

impl SdeTrajectory {
    /// `t,particle,x0[,x1[,x2]]` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        if let Some(c) = self.snapshots.first() {
            out.push_str("t,particle");
            for a in 0..c.dim {
                out.push_str(&format!(",x{a}"));
            }
            out.push('\n');
        }
        for (t, c) in self.times.iter().zip(&self.snapshots) {
            for (i, p) in c.points().enumerate() {
                out.push_str(&format!("{t},{i}"));
                for v in p {
                    out.push_str(&format!(",{v}"));
                }
                out.push('\n');
            }
        }
        out
    }
}

/// Runs from `initial` and records the configuration at each of `times`
/// (nondecreasing, ≥ 0).
pub fn sde_run(
    kernel: &Kernel,
    potential: &Potential,
    initial: Configuration,
    params: SdeParams,
    times: &[f64],
    seed: Seed,
) -> Result<SdeTrajectory> {
    if times.windows(2).any(|w| w[1] < w[0]) || times.iter().any(|t| !(*t >= 0.0)) {
        return config_err("snapshot times must be nonnegative and nondecreasing");
    }
    let mut integ = SdeIntegrator::new(kernel, potential, initial, params, seed)?;
    let mut snapshots = Vec::with_capacity(times.len());
    for &t in times {
        integ.run_until(t)?;
        snapshots.push(integ.state.config.clone());
    }
    Ok(SdeTrajectory {
        times: times.to_vec(),
        snapshots,
        cap_activations: integ.state.cap_activations,
        steps: integ.state.steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_particle_free_log_one_step() {
        // drift on particle 1 is (1/N)(x1 - x2)/r², so r ↦ r + dt/r
        let dom = Domain::free_space(2, 10.0).unwrap();
        let k = Kernel::free_log(dom).unwrap();
        let c = Configuration::new(2, vec![0.5, 0.0, -0.5, 0.0]).unwrap();
        let mut p = SdeParams::new(0.01);
        p.eps_reg = 0.0;
        let mut integ = SdeIntegrator::new(&k, &Potential::Zero, c, p, Seed(0)).unwrap();
        integ.step_with_noise(&[0.0; 4]).unwrap();
        let x = &integ.state.config.coords;
        assert!((x[0] - x[2] - (1.0 + 0.01)).abs() < 1e-15);
        assert!((x[0] + x[2]).abs() < 1e-15);
        assert_eq!(x[1], 0.0);
    }

    #[test]
    fn torus_pair_forces_are_antisymmetric() {
        let k = Kernel::torus_log_with_cutoff(1, 32).unwrap();
        let c = Configuration::new(1, vec![0.2, 0.8]).unwrap();
        let mut integ = SdeIntegrator::new(&k, &Potential::Zero, c, SdeParams::new(1e-3), Seed(0)).unwrap();
        let mut f = vec![0.0; 2];
        integ.drift(&mut f).unwrap();
        assert!((f[0] + f[1]).abs() < 1e-14);
        let g = k.eval_gradient(1e-3, &[0.2], &[0.8]).unwrap();
        assert!((f[0] + 0.5 * g[0]).abs() < 1e-13);
    }
}
