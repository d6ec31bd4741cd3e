//! Metropolis-adjusted Langevin sampling of a density known up to a
//! constant.
//!
//! Proposal `y = x + h∇log π(x) + √(2h)ξ`. On a periodic target the
//! proposal is wrapped and its density is the wrapped Gaussian, summed over
//! enough images to be exact in double precision. During burn-in the step
//! `h` is adapted by a Robbins–Monro rule toward the target acceptance; it
//! is frozen afterwards.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};
use crate::rng::Stream;

pub const TARGET_ACCEPTANCE: f64 = 0.57;

/// Log-density evaluation: `log π(x)` up to a constant, and a scalar
/// observable recorded along the chain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub log_density: f64,
    pub observable: f64,
}

pub trait Target {
    /// Number of coordinates.
    fn dimension(&self) -> usize;

    /// Writes `∇log π(x)` into `grad`.
    fn evaluate(&mut self, x: &[f64], grad: &mut [f64]) -> Result<Evaluation>;

    /// Period of every coordinate, or `None` on `ℝ^n`.
    fn period(&self) -> Option<f64> {
        None
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MalaParams {
    pub burn_in: usize,
    pub samples: usize,
    pub initial_step: f64,
    /// Upper limit for `h`; on a torus of period 1 the default keeps the
    /// proposal spread at 0.5.
    pub max_step: f64,
    pub target_acceptance: f64,
    /// Keep every `thin`-th state after burn-in (0 keeps none).
    pub thin: usize,
}

impl MalaParams {
    pub fn new(burn_in: usize, samples: usize) -> MalaParams {
        MalaParams {
            burn_in,
            samples,
            initial_step: 1e-3,
            max_step: 0.125,
            target_acceptance: TARGET_ACCEPTANCE,
            thin: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MalaRun {
    pub step: f64,
    /// Mean acceptance probability after burn-in.
    pub acceptance: f64,
    /// The tuned step sits at `max_step`.
    pub step_capped: bool,
    /// Observable after each post-burn-in step.
    pub observables: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub final_state: Vec<f64>,
}

fn wrap(v: f64, period: f64) -> f64 {
    let w = v.rem_euclid(period);
    if w >= period {
        0.0
    } else {
        w
    }
}

/// `log q(y | x)` up to a constant, given `y - x - h∇log π(x)` per
/// coordinate.
fn log_proposal(delta: &[f64], h: f64, period: Option<f64>) -> f64 {
    let s = 4.0 * h;
    match period {
        None => -delta.iter().map(|d| d * d).sum::<f64>() / s,
        Some(p) => {
            let images = ((2.0 * h).sqrt() * 8.0 / p).ceil() as i64 + 1;
            delta
                .iter()
                .map(|&d| {
                    let r = d - p * (d / p).round();
                    // log Σ_m exp(-(r + mp)²/4h), largest term first
                    let lead = -r * r / s;
                    let mut acc = 0.0;
                    for m in -images..=images {
                        if m != 0 {
                            let t = r + m as f64 * p;
                            acc += (-t * t / s - lead).exp();
                        }
                    }
                    lead + acc.ln_1p()
                })
                .sum()
        }
    }
}

/// Runs a chain from `x0`.
pub fn mala<T: Target>(target: &mut T, x0: &[f64], params: MalaParams, rng: &mut Stream) -> Result<MalaRun> {
    let n = target.dimension();
    if x0.len() != n {
        return config_err("initial state has the wrong dimension");
    }
    if !(params.initial_step > 0.0 && params.max_step >= params.initial_step) {
        return config_err("need 0 < initial_step ≤ max_step");
    }
    if !(params.target_acceptance > 0.0 && params.target_acceptance < 1.0) {
        return config_err("target acceptance must lie in (0, 1)");
    }
    if params.samples == 0 {
        return config_err("need at least one sample");
    }
    let period = target.period();
    let mut x = x0.to_vec();
    if let Some(p) = period {
        x.iter_mut().for_each(|v| *v = wrap(*v, p));
    }
    let mut gx = vec![0.0; n];
    let mut ex = target.evaluate(&x, &mut gx)?;
    if !ex.log_density.is_finite() {
        return Err(Error::Domain("initial state has zero target density".into()));
    }
    let mut y = vec![0.0; n];
    let mut gy = vec![0.0; n];
    let mut fwd = vec![0.0; n];
    let mut bwd = vec![0.0; n];
    let mut log_h = params.initial_step.ln();
    let log_h_max = params.max_step.ln();
    let mut accepted = 0.0;
    let mut observables = Vec::with_capacity(params.samples);
    let mut states = Vec::new();

    for it in 0..params.burn_in + params.samples {
        let h = log_h.exp();
        let sigma = (2.0 * h).sqrt();
        for i in 0..n {
            let xi: f64 = rng.sample(StandardNormal);
            let step = h * gx[i] + sigma * xi;
            fwd[i] = sigma * xi;
            y[i] = x[i] + step;
            if let Some(p) = period {
                y[i] = wrap(y[i], p);
            }
        }
        let ey = target.evaluate(&y, &mut gy);
        let alpha = match ey {
            Ok(ey) if ey.log_density.is_finite() => {
                for i in 0..n {
                    // x - y - h∇log π(y), using the unwrapped displacement
                    bwd[i] = -(h * gx[i] + fwd[i]) - h * gy[i];
                }
                let log_ratio = ey.log_density - ex.log_density + log_proposal(&bwd, h, period)
                    - log_proposal(&fwd, h, period);
                let a = if log_ratio >= 0.0 { 1.0 } else { log_ratio.exp() };
                let u: f64 = rng.random();
                if u < a {
                    std::mem::swap(&mut x, &mut y);
                    std::mem::swap(&mut gx, &mut gy);
                    ex = ey;
                }
                a
            }
            // proposals outside the support are rejected
            Ok(_) | Err(Error::Domain(_)) => {
                let _: f64 = rng.random();
                0.0
            }
            Err(e) => return Err(e),
        };
        if it < params.burn_in {
            let gain = 1.0 / (1.0 + it as f64 / 10.0).powf(0.6);
            log_h = (log_h + gain * (alpha - params.target_acceptance)).min(log_h_max);
        } else {
            accepted += alpha;
            observables.push(ex.observable);
            if params.thin > 0 && (it - params.burn_in) % params.thin == 0 {
                states.push(x.clone());
            }
        }
    }
    let acceptance = accepted / params.samples as f64;
    let step = log_h.exp();
    let step_capped = log_h >= log_h_max - 1e-12;
    let tuned = acceptance > 0.05 && (acceptance < 0.95 || step_capped);
    if !tuned {
        return Err(Error::Tuning(format!(
            "acceptance {acceptance:.3} after tuning (step {step:e})"
        )));
    }
    Ok(MalaRun {
        step,
        acceptance,
        step_capped,
        observables,
        states,
        final_state: x,
    })
}
