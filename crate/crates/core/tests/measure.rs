use std::f64::consts::PI;

use loggas::measure::{convolve, convolve_at, convolve_direct};
use loggas::{BaseMeasure, Domain, Kernel, Seed};
use proptest::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

#[test]
fn uniform_sample_mean_is_central() {
    let mu = BaseMeasure::uniform(Domain::torus(2).unwrap());
    let c = mu.sample(100_000, &mut Seed(1).rng()).unwrap();
    for a in 0..2 {
        let xs: Vec<f64> = c.points().map(|p| p[a]).collect();
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        let se = (1.0 / 12.0 / xs.len() as f64).sqrt();
        assert!((m - 0.5).abs() < 5.0 * se, "axis {a}: {m}");
    }
}

#[test]
fn point_mass_samples_are_the_atom() {
    let mu = BaseMeasure::atomic(Domain::torus(2).unwrap(), vec![0.25, 0.75], vec![1.0]).unwrap();
    let c = mu.sample(1000, &mut Seed(2).rng()).unwrap();
    assert!(c.points().all(|p| p == [0.25, 0.75]));
}

#[test]
fn half_supported_grid_stays_in_support() {
    let mu = BaseMeasure::grid(Domain::torus(1).unwrap(), 2, vec![2.0, 0.0]).unwrap();
    let c = mu.sample(100_000, &mut Seed(3).rng()).unwrap();
    assert!(c.points().all(|p| (0.0..0.5).contains(&p[0])));
}

#[test]
fn grid_sampler_passes_chi_square() {
    let cells = 16;
    let raw: Vec<f64> = (0..cells).map(|i| 1.0 + (i % 5) as f64).collect();
    let total: f64 = raw.iter().sum();
    let values: Vec<f64> = raw.iter().map(|v| v * cells as f64 / total).collect();
    let mu = BaseMeasure::grid(Domain::torus(1).unwrap(), cells, values.clone()).unwrap();
    let n = 100_000;
    let c = mu.sample(n, &mut Seed(4).rng()).unwrap();
    let mut counts = vec![0u64; cells];
    for p in c.points() {
        counts[((p[0] * cells as f64) as usize).min(cells - 1)] += 1;
    }
    let stat: f64 = counts
        .iter()
        .zip(&values)
        .map(|(&o, &v)| {
            let e = n as f64 * v / cells as f64;
            (o as f64 - e).powi(2) / e
        })
        .sum();
    let p = 1.0 - ChiSquared::new((cells - 1) as f64).unwrap().cdf(stat);
    assert!(p > 1e-3, "chi2 = {stat}, p = {p}");
}

#[test]
fn uniform_convolution_vanishes() {
    for d in 1..=2 {
        let k = Kernel::torus_log_with_cutoff(d, 16).unwrap();
        let mu = BaseMeasure::uniform(Domain::torus(d).unwrap());
        for eps in [0.0, 0.01] {
            let f = convolve(&k, eps, &mu, 32).unwrap();
            assert!(f.values.iter().all(|v| v.abs() < 1e-15));
        }
    }
}

#[test]
fn single_mode_convolution_closed_form() {
    // ρ = 1 + cos(2πx): only k = ±1 survive, each with ĉ = 1/(2π) and ρ̂ = 1/2
    let k = Kernel::torus_log(1).unwrap();
    let mu = BaseMeasure::single_mode(1, 0.999).unwrap();
    let a = 0.999;
    for eps in [0.0, 0.05] {
        let f = convolve(&k, eps, &mu, 64).unwrap();
        let damp = (-2.0 * PI * eps).exp();
        for (i, v) in f.values.iter().enumerate() {
            let x = i as f64 / 64.0;
            let want = a * damp * (2.0 * PI * x).cos() / (2.0 * PI);
            assert!((v - want).abs() < 1e-14, "x={x}: {v} vs {want}");
        }
    }
}

#[test]
fn atomic_spectral_and_direct_paths_agree() {
    let k = Kernel::torus_log_with_cutoff(2, 4).unwrap();
    let mu = BaseMeasure::atomic(
        Domain::torus(2).unwrap(),
        vec![0.1, 0.2, 0.6, 0.3, 0.85, 0.9],
        vec![0.2, 0.5, 0.3],
    )
    .unwrap();
    for x in [[0.0, 0.0], [0.33, 0.71], [0.6, 0.3]] {
        for eps in [0.0, 0.01] {
            let a = convolve_at(&k, eps, &mu, &x).unwrap();
            let b = convolve_direct(&k, eps, &mu, &x).unwrap();
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }
}

#[test]
fn free_space_grid_convolution_is_unsupported() {
    let dom = Domain::free_space(1, 1.0).unwrap();
    let k = Kernel::free_log(dom).unwrap();
    let mu = BaseMeasure::grid(dom, 4, vec![0.5; 4]).unwrap();
    assert!(matches!(convolve(&k, 0.1, &mu, 8), Err(loggas::Error::Unsupported(_))));
}

fn unit_mass(raw: &[f64]) -> Vec<f64> {
    let s: f64 = raw.iter().sum();
    raw.iter().map(|v| v * raw.len() as f64 / s).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn convolution_is_linear_and_mean_free(
        a in proptest::collection::vec(0.01f64..2.0, 16),
        b in proptest::collection::vec(0.01f64..2.0, 16),
        t in 0.0f64..1.0,
        eps in 0.0f64..0.02,
    ) {
        let dom = Domain::torus(1).unwrap();
        let k = Kernel::torus_log_with_cutoff(1, 16).unwrap();
        let (a, b) = (unit_mass(&a), unit_mass(&b));
        let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| t * x + (1.0 - t) * y).collect();
        let fa = convolve(&k, eps, &BaseMeasure::grid(dom, 16, a).unwrap(), 64).unwrap();
        let fb = convolve(&k, eps, &BaseMeasure::grid(dom, 16, b).unwrap(), 64).unwrap();
        let fm = convolve(&k, eps, &BaseMeasure::grid(dom, 16, mix).unwrap(), 64).unwrap();
        for i in 0..64 {
            let lin = t * fa.values[i] + (1.0 - t) * fb.values[i];
            prop_assert!((fm.values[i] - lin).abs() < 1e-13);
        }
        prop_assert!(fm.mean().abs() < 1e-14);
    }
}
