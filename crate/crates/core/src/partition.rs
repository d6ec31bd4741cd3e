//! Monte Carlo estimation of `Z_{N,β} = E_{ρ̄^{⊗N}}[exp(-β I̊_W)]`.
//!
//! Draws are generated in chunks of 1000 samples; chunk `c` for size `N`
//! uses the stream `seed.child(c)`, where the caller derives `seed` per `N`.
//! Results therefore depend only on the seed, not on how chunks are spread
//! over worker threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::{mean_energy, EnergyEvaluator};
use crate::error::{config_err, Error, Result};
use crate::kernel::Kernel;
use crate::measure::BaseMeasure;
use crate::rng::Seed;
use crate::stats;

pub const CHUNK: usize = 1000;
pub const BOOTSTRAP_RESAMPLES: usize = 400;
const MAX_DISCARD_FRACTION: f64 = 1e-3;
const ENUMERATION_BUDGET: u64 = 1_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionEstimate {
    pub n: usize,
    pub beta: f64,
    pub eps: f64,
    pub samples: usize,
    pub mean: f64,
    pub log_mean: f64,
    /// Half-width of the 95% percentile-bootstrap interval.
    pub ci_halfwidth: f64,
    pub std_error: f64,
    pub ess: f64,
    pub discarded: usize,
}

/// Energies of i.i.d. configurations, with the count of discarded
/// (non-finite) draws.
#[derive(Clone, Debug)]
pub struct EnergySamples {
    pub n: usize,
    pub eps: f64,
    pub energies: Vec<f64>,
    pub discarded: usize,
}

pub fn energy_samples(
    kernel: &Kernel,
    measure: &BaseMeasure,
    n: usize,
    eps: f64,
    samples: usize,
    seed: Seed,
) -> Result<EnergySamples> {
    if n == 0 {
        return config_err("n must be at least 1");
    }
    let ev = EnergyEvaluator::new(kernel, eps, measure)?;
    let chunks = samples.div_ceil(CHUNK);
    let results: Vec<Result<(Vec<f64>, usize)>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut ev = ev.clone();
            let mut rng = seed.child(c as u64).rng();
            let len = CHUNK.min(samples - c * CHUNK);
            let mut out = Vec::with_capacity(len);
            let mut discarded = 0;
            let d = measure.dim();
            let mut coords = vec![0.0; n * d];
            for _ in 0..len {
                for i in 0..n {
                    measure.sample_point(&mut rng, &mut coords[i * d..(i + 1) * d]);
                }
                match ev.evaluate(&coords) {
                    Ok(e) => out.push(e.total),
                    Err(Error::Domain(_)) => discarded += 1,
                    Err(e) => return Err(e),
                }
            }
            Ok((out, discarded))
        })
        .collect();
    let mut energies = Vec::with_capacity(samples);
    let mut discarded = 0;
    for r in results {
        let (e, d) = r?;
        energies.extend(e);
        discarded += d;
    }
    if discarded as f64 > MAX_DISCARD_FRACTION * samples as f64 {
        return Err(Error::Estimation(format!(
            "{discarded} of {samples} draws had non-finite energy"
        )));
    }
    Ok(EnergySamples {
        n,
        eps,
        energies,
        discarded,
    })
}

/// Turns energy draws into an estimate of `E[exp(-β E)]`.
pub fn estimate_from_energies(draws: &EnergySamples, beta: f64, seed: Seed) -> PartitionEstimate {
    let log_w: Vec<f64> = draws.energies.iter().map(|e| -beta * e).collect();
    let count = log_w.len() as f64;
    let log_mean = stats::log_sum_exp(&log_w) - count.ln();
    let shift = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_w.iter().map(|l| (l - shift).exp()).collect();
    let scale = shift.exp();
    let ci = stats::bootstrap_mean_halfwidth(&w, BOOTSTRAP_RESAMPLES, seed) * scale;
    PartitionEstimate {
        n: draws.n,
        beta,
        eps: draws.eps,
        samples: draws.energies.len(),
        mean: log_mean.exp(),
        log_mean,
        ci_halfwidth: ci,
        std_error: stats::std_error(&w) * scale,
        ess: stats::effective_sample_size(&log_w),
        discarded: draws.discarded,
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta >= 0.0 && beta.is_finite()) {
        return config_err(format!("beta must be finite and ≥ 0, got {beta}"));
    }
    Ok(())
}

pub fn estimate_partition(
    kernel: &Kernel,
    measure: &BaseMeasure,
    n: usize,
    beta: f64,
    eps: f64,
    samples: usize,
    seed: Seed,
) -> Result<PartitionEstimate> {
    Ok(estimate_partition_multi(kernel, measure, n, &[beta], eps, samples, seed)?.remove(0))
}

/// Estimates for several β from one set of draws.
pub fn estimate_partition_multi(
    kernel: &Kernel,
    measure: &BaseMeasure,
    n: usize,
    betas: &[f64],
    eps: f64,
    samples: usize,
    seed: Seed,
) -> Result<Vec<PartitionEstimate>> {
    if samples < 1000 {
        return config_err(format!("at least 1000 samples are required, got {samples}"));
    }
    for &b in betas {
        check_beta(b)?;
    }
    let draws = energy_samples(kernel, measure, n, eps, samples, seed.child(0))?;
    Ok(betas
        .iter()
        .enumerate()
        .map(|(j, &b)| estimate_from_energies(&draws, b, seed.path(&[1, j as u64])))
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub beta: f64,
    pub estimates: Vec<PartitionEstimate>,
    pub running_max: Vec<f64>,
    pub first_quarter_mean: f64,
    pub last_quarter_mean: f64,
    /// Largest CI half-width among the estimates in the two quarters.
    pub quarter_ci: f64,
    /// `last-quarter mean ≤ first-quarter mean + 2·CI`.
    pub trend_flat: bool,
    /// Lower bound `exp(-β E[I̊])` from Jensen's inequality.
    pub jensen_bound: f64,
}

/// One estimate per `N` (seed `seed.child(N)`), for each β in `betas`,
/// sharing draws across β.
pub fn sweep_partition_multi(
    kernel: &Kernel,
    measure: &BaseMeasure,
    n_values: &[usize],
    betas: &[f64],
    eps: f64,
    samples: usize,
    seed: Seed,
) -> Result<Vec<SweepReport>> {
    if n_values.is_empty() || n_values.windows(2).any(|w| w[1] <= w[0]) {
        return config_err("n_values must be non-empty and increasing");
    }
    let mut per_n = Vec::with_capacity(n_values.len());
    for &n in n_values {
        per_n.push(estimate_partition_multi(
            kernel,
            measure,
            n,
            betas,
            eps,
            samples,
            seed.child(n as u64),
        )?);
    }
    let e_mean = mean_energy(kernel, eps, measure, n_values[0])?;
    Ok(betas
        .iter()
        .enumerate()
        .map(|(j, &beta)| {
            let estimates: Vec<PartitionEstimate> = per_n.iter().map(|v| v[j].clone()).collect();
            summarize(beta, estimates, (-beta * e_mean).exp())
        })
        .collect())
}

pub fn sweep_partition(
    kernel: &Kernel,
    measure: &BaseMeasure,
    n_values: &[usize],
    beta: f64,
    eps: f64,
    samples: usize,
    seed: Seed,
) -> Result<SweepReport> {
    Ok(sweep_partition_multi(kernel, measure, n_values, &[beta], eps, samples, seed)?.remove(0))
}

fn summarize(beta: f64, estimates: Vec<PartitionEstimate>, jensen_bound: f64) -> SweepReport {
    let mut running_max = Vec::with_capacity(estimates.len());
    let mut m = f64::NEG_INFINITY;
    for e in &estimates {
        m = m.max(e.mean);
        running_max.push(m);
    }
    let q = (estimates.len() / 4).max(1);
    let first = &estimates[..q];
    let last = &estimates[estimates.len() - q..];
    let avg = |s: &[PartitionEstimate]| s.iter().map(|e| e.mean).sum::<f64>() / s.len() as f64;
    let first_quarter_mean = avg(first);
    let last_quarter_mean = avg(last);
    let quarter_ci = first
        .iter()
        .chain(last)
        .map(|e| e.ci_halfwidth)
        .fold(0.0, f64::max);
    SweepReport {
        beta,
        running_max,
        first_quarter_mean,
        last_quarter_mean,
        quarter_ci,
        trend_flat: last_quarter_mean <= first_quarter_mean + 2.0 * quarter_ci,
        jensen_bound,
        estimates,
    }
}

/// Table `W_ε(y_j, y_l)` over the atoms of an atomic measure, diagonal
/// included.
pub fn atom_table(kernel: &Kernel, eps: f64, measure: &BaseMeasure) -> Result<Vec<Vec<f64>>> {
    let (pts, w) = measure
        .atom_points()
        .ok_or_else(|| Error::Unsupported("atom table needs an atomic measure".into()))?;
    let d = measure.dim();
    let m = w.len();
    let mut t = vec![vec![0.0; m]; m];
    for j in 0..m {
        for l in 0..m {
            t[j][l] = kernel.eval_eps(eps, &pts[j * d..(j + 1) * d], &pts[l * d..(l + 1) * d])?;
        }
    }
    Ok(t)
}

/// `I̊` of the configuration placing particle `i` on atom `idx[i]`,
/// evaluated from an atom table.
pub fn table_energy(table: &[Vec<f64>], weights: &[f64], idx: &[usize]) -> f64 {
    let n = idx.len() as f64;
    let mut pair = 0.0;
    for (i, &a) in idx.iter().enumerate() {
        for (j, &b) in idx.iter().enumerate() {
            if i != j {
                pair += table[a][b];
            }
        }
    }
    let mut cross = 0.0;
    for &a in idx {
        for (l, wl) in weights.iter().enumerate() {
            cross += wl * table[a][l];
        }
    }
    let mut mean = 0.0;
    for (j, wj) in weights.iter().enumerate() {
        for (l, wl) in weights.iter().enumerate() {
            mean += wj * wl * table[j][l];
        }
    }
    pair / (2.0 * n) - cross + 0.5 * n * mean
}

/// Calls `f(indices, probability)` for every one of the `m^n` assignments of
/// particles to atoms.
pub fn for_each_assignment<F: FnMut(&[usize], f64)>(weights: &[f64], n: usize, mut f: F) -> Result<()> {
    let m = weights.len();
    let count = (m as u64).checked_pow(n as u32).unwrap_or(u64::MAX);
    if count > ENUMERATION_BUDGET {
        return config_err(format!(
            "enumeration of {m}^{n} configurations exceeds the budget of {ENUMERATION_BUDGET}"
        ));
    }
    let mut idx = vec![0usize; n];
    loop {
        let p: f64 = idx.iter().map(|&a| weights[a]).product();
        f(&idx, p);
        let mut pos = n;
        loop {
            if pos == 0 {
                return Ok(());
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < m {
                break;
            }
            idx[pos] = 0;
        }
    }
}

/// Exact `Z_{N,β}` for an atomic base measure by enumerating all `m^N`
/// configurations.
pub fn enumerate_partition(
    kernel: &Kernel,
    eps: f64,
    measure: &BaseMeasure,
    n: usize,
    beta: f64,
) -> Result<f64> {
    let table = atom_table(kernel, eps, measure)?;
    let (_, w) = measure.atom_points().expect("atomic");
    let mut z = 0.0;
    for_each_assignment(w, n, |idx, p| {
        z += p * (-beta * table_energy(&table, w, idx)).exp();
    })?;
    Ok(z)
}

/// Convexity defect of `β ↦ log Z` at the middle of three points; a
/// cumulant generating function has a nonpositive value here.
pub fn convexity_gap(points: [(f64, f64); 3]) -> f64 {
    let [(b1, l1), (b2, l2), (b3, l3)] = points;
    let chord = ((b3 - b2) * l1 + (b2 - b1) * l3) / (b3 - b1);
    l2 - chord
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Domain;

    #[test]
    fn trivial_cases_are_exact() {
        let k = Kernel::torus_log_with_cutoff(2, 8).unwrap();
        let u = BaseMeasure::uniform(Domain::torus(2).unwrap());
        let e = estimate_partition(&k, &u, 1, 3.0, 0.0, 1000, Seed(1)).unwrap();
        assert!((e.mean - 1.0).abs() < 1e-12);
        let e = estimate_partition(&k, &u, 5, 0.0, 0.0, 1000, Seed(1)).unwrap();
        assert_eq!(e.mean, 1.0);
        assert!(estimate_partition(&k, &u, 5, 1.0, 0.0, 999, Seed(1)).is_err());
    }

    #[test]
    fn two_atom_enumeration_matches_hand_sum() {
        let dom = Domain::torus(1).unwrap();
        let k = Kernel::torus_log_with_cutoff(1, 16).unwrap();
        let m = BaseMeasure::atoms(dom, &[vec![0.1], vec![0.6]]).unwrap();
        let t = atom_table(&k, 0.0, &m).unwrap();
        let w = [0.5, 0.5];
        let mut z = 0.0;
        for a in 0..2 {
            for b in 0..2 {
                z += 0.25 * (-table_energy(&t, &w, &[a, b])).exp();
            }
        }
        let e = enumerate_partition(&k, 0.0, &m, 2, 1.0).unwrap();
        assert!((z - e).abs() < 1e-14);
    }

    #[test]
    fn enumeration_budget_is_enforced() {
        assert!(for_each_assignment(&[0.25; 4], 11, |_, _| {}).is_err());
        let mut total = 0.0;
        for_each_assignment(&[0.2, 0.3, 0.5], 4, |_, p| total += p).unwrap();
        assert!((total - 1.0).abs() < 1e-14);
    }

    #[test]
    fn convexity_gap_sign() {
        assert!(convexity_gap([(0.0, 0.0), (1.0, 1.0), (2.0, 4.0)]) < 0.0);
    }
}
