use std::f64::consts::PI;

use loggas::energy::{
    interaction_energy, mean_energy, pair_energy_direct, probe_lower_bound, probe_lower_bound_eps,
    restored_energy,
};
use loggas::{BaseMeasure, Configuration, Domain, Kernel, Seed};
use proptest::prelude::*;

fn uniform(d: usize) -> BaseMeasure {
    BaseMeasure::uniform(Domain::torus(d).unwrap())
}

/// `(1/2N) Σ_k ĉ_k m_k (|Σ_i e^{2πik·x_i}|² - N)` over `0 < |k|_∞ ≤ K`.
fn spectral_pair_energy(coords: &[f64], d: usize, cutoff: i64, eps: f64, half: bool) -> f64 {
    let n = coords.len() / d;
    let range: Vec<i64> = (-cutoff..=cutoff).collect();
    let mut total = 0.0;
    let mut k = [0i64; 2];
    let count = range.len().pow(d as u32);
    for idx in 0..count {
        let mut r = idx;
        for c in k.iter_mut().take(d) {
            *c = range[r % range.len()];
            r /= range.len();
        }
        let n2: i64 = k[..d].iter().map(|c| c * c).sum();
        if n2 == 0 {
            continue;
        }
        let norm = 2.0 * PI * (n2 as f64).sqrt();
        let m = if half { (-norm * eps).exp() } else { (-norm * norm * eps).exp() };
        let (mut re, mut im) = (0.0, 0.0);
        for i in 0..n {
            let th: f64 = (0..d).map(|a| 2.0 * PI * k[a] as f64 * coords[i * d + a]).sum();
            re += th.cos();
            im += th.sin();
        }
        total += norm.powi(-(d as i32)) * m * (re * re + im * im - n as f64);
    }
    total / (2.0 * n as f64)
}

#[test]
fn single_particle_has_no_energy() {
    let k = Kernel::torus_log(2).unwrap();
    let e = interaction_energy(&k, 0.0, &uniform(2), &Configuration::new(2, vec![0.3, 0.8]).unwrap()).unwrap();
    assert_eq!(e.total, 0.0);
}

#[test]
fn antipodal_pair_in_2d() {
    let cutoff = 512;
    let k = Kernel::torus_log_with_cutoff(2, cutoff).unwrap();
    let c = Configuration::new(2, vec![0.0, 0.0, 0.5, 0.5]).unwrap();
    let e = interaction_energy(&k, 0.0, &uniform(2), &c).unwrap();
    let mut f = 0.0;
    for a in -(cutoff as i64)..=cutoff as i64 {
        for b in -(cutoff as i64)..=cutoff as i64 {
            if a != 0 || b != 0 {
                let sign = if (a + b) % 2 == 0 { 1.0 } else { -1.0 };
                f += sign / (4.0 * PI * PI * (a * a + b * b) as f64);
            }
        }
    }
    assert!((e.total - f / 2.0).abs() < 1e-10, "{} vs {}", e.total, f / 2.0);
    assert_eq!(e.cross_term, 0.0);
    assert_eq!(e.mean_term, 0.0);
}

#[test]
fn single_mode_mean_energy() {
    let k = Kernel::torus_log(1).unwrap();
    for a in [0.3, 0.8] {
        let mu = BaseMeasure::single_mode(1, a).unwrap();
        for eps in [0.0, 0.01] {
            let want = -0.5 * 2.0 / (2.0 * PI) * (-2.0 * PI * eps).exp() * (a / 2.0) * (a / 2.0);
            for n in [1, 5, 40] {
                let got = mean_energy(&k, eps, &mu, n).unwrap();
                assert!((got - want).abs() < 1e-15, "a={a} eps={eps}: {got} vs {want}");
            }
        }
    }
    assert_eq!(mean_energy(&k, 0.0, &uniform(1), 3).unwrap(), 0.0);
}

#[test]
fn monte_carlo_matches_mean_energy() {
    let k = Kernel::torus_log(1).unwrap();
    let mu = BaseMeasure::single_mode(1, 0.7).unwrap();
    let want = mean_energy(&k, 0.0, &mu, 8).unwrap();
    let mut rng = Seed(11).rng();
    let vals: Vec<f64> = (0..10_000)
        .map(|_| interaction_energy(&k, 0.0, &mu, &mu.sample(8, &mut rng).unwrap()).unwrap().total)
        .collect();
    let m = vals.iter().sum::<f64>() / vals.len() as f64;
    let var = vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (vals.len() - 1) as f64;
    let se = (var / vals.len() as f64).sqrt();
    assert!((m - want).abs() < 4.0 * se, "{m} vs {want} ± {se}");
}

#[test]
fn equally_spaced_lattice_closed_form() {
    let cutoff = 64i64;
    let k = Kernel::torus_log_with_cutoff(1, cutoff as usize).unwrap();
    for n in [2usize, 3, 7, 16] {
        let c = Configuration::new(1, (0..n).map(|i| i as f64 / n as f64).collect()).unwrap();
        let got = interaction_energy(&k, 0.0, &uniform(1), &c).unwrap().total;
        // |S_k|² = N² on multiples of N, zero elsewhere
        let mut want = 0.0;
        for kk in 1..=cutoff {
            let ck = 1.0 / (2.0 * PI * kk as f64);
            let s2 = if kk % n as i64 == 0 { (n * n) as f64 } else { 0.0 };
            want += 2.0 * ck * (s2 - n as f64);
        }
        want /= 2.0 * n as f64;
        assert!((got - want).abs() < 1e-12, "N={n}: {got} vs {want}");
    }
}

#[test]
fn probe_finds_the_two_point_minimum() {
    let k = Kernel::torus_log_with_cutoff(2, 16).unwrap();
    let mut grid_min = f64::INFINITY;
    for i in 0..64 {
        for j in 0..64 {
            if i == 0 && j == 0 {
                continue;
            }
            let c = Configuration::new(2, vec![0.0, 0.0, i as f64 / 64.0, j as f64 / 64.0]).unwrap();
            grid_min = grid_min.min(pair_energy_direct(&k, 0.0, &c).unwrap());
        }
    }
    let rows = probe_lower_bound(&k, &uniform(2), &[2], 4, Seed(5)).unwrap();
    let found = rows[0].min_energy;
    assert!(found >= grid_min - 1e-9, "{found} below the grid minimum {grid_min}");
    assert!(found <= grid_min + 1e-3 * grid_min.abs(), "{found} vs {grid_min}");
    assert!(rows[0].ratio.is_finite());
}

#[test]
fn regularized_probe_respects_the_diagonal_bound() {
    let k = Kernel::torus_log_with_cutoff(2, 16).unwrap();
    let eps = 2f64.powi(-8);
    let diag = k.diagonal(eps).unwrap();
    for row in probe_lower_bound_eps(&k, eps, &uniform(2), &[4, 16], 2, Seed(6)).unwrap() {
        assert!(row.min_energy >= -0.5 * diag - 1e-12, "N={}: {}", row.n, row.min_energy);
    }
}

#[test]
fn probe_rejects_zero_budget() {
    let k = Kernel::torus_log_with_cutoff(1, 8).unwrap();
    assert!(probe_lower_bound(&k, &uniform(1), &[4], 0, Seed(0)).is_err());
}

#[test]
fn coincident_free_space_points_are_an_error() {
    let dom = Domain::free_space(2, 2.0).unwrap();
    let k = Kernel::free_log(dom).unwrap();
    let mu = BaseMeasure::atoms(dom, &[vec![0.0, 0.0]]).unwrap();
    let c = Configuration::new(2, vec![0.1, 0.1, 0.1, 0.1]).unwrap();
    assert!(interaction_energy(&k, 0.0, &mu, &c).is_err());
    assert!(interaction_energy(&k, 0.01, &mu, &c).unwrap().total.is_finite());
}

fn coords(d: usize, max_n: usize) -> impl Strategy<Value = (usize, Vec<f64>)> {
    (1usize..=max_n).prop_flat_map(move |n| (Just(d), proptest::collection::vec(0.0f64..1.0, n * d)))
}

fn dim_and_coords(max_n: usize) -> impl Strategy<Value = (usize, Vec<f64>)> {
    (1usize..=2).prop_flat_map(move |d| coords(d, max_n))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn spectral_identity((d, x) in dim_and_coords(32), cutoff in 1usize..=16, eps in 0.0f64..0.01) {
        let k = Kernel::torus_log_with_cutoff(d, cutoff).unwrap();
        let c = Configuration::new(d, x.clone()).unwrap();
        let direct = pair_energy_direct(&k, eps, &c).unwrap();
        let spec = spectral_pair_energy(&x, d, cutoff as i64, eps, d == 1);
        prop_assert!((direct - spec).abs() < 1e-8, "{} vs {}", direct, spec);
    }

    #[test]
    fn restored_energy_is_nonnegative((d, x) in dim_and_coords(24), a in -0.9f64..0.9, eps in 0.0f64..0.01) {
        let k = Kernel::torus_log_with_cutoff(d, 16).unwrap();
        let mu = BaseMeasure::single_mode(d, a).unwrap();
        let c = Configuration::new(d, x).unwrap();
        let e = interaction_energy(&k, eps, &mu, &c).unwrap();
        prop_assert!((e.total - (e.pair_term - e.cross_term + e.mean_term)).abs() < 1e-12 * (1.0 + e.pair_term.abs()));
        prop_assert!(restored_energy(&k, eps, &mu, &c).unwrap() >= -1e-10);
    }

    #[test]
    fn regularization_error_is_bounded((_, x) in coords(1, 16), eps in 1e-6f64..1e-2) {
        let cutoff = 32;
        let k = Kernel::torus_log_with_cutoff(1, cutoff).unwrap();
        let c = Configuration::new(1, x).unwrap();
        let n = c.n() as f64;
        let bare = interaction_energy(&k, 0.0, &uniform(1), &c).unwrap().total;
        let reg = interaction_energy(&k, eps, &uniform(1), &c).unwrap().total;
        // |S_k|² - N lies in [-N, N² - N]
        let bound: f64 = (1..=cutoff)
            .map(|kk| {
                let w = 2.0 * PI * kk as f64;
                2.0 / w * (1.0 - (-w * eps).exp())
            })
            .sum::<f64>() * n / 2.0;
        prop_assert!((bare - reg).abs() <= bound + 1e-12);
    }

    #[test]
    fn permutation_and_translation_invariance((d, x) in dim_and_coords(12), shift in proptest::collection::vec(0.0f64..1.0, 2), rot in 0usize..12) {
        let k = Kernel::torus_log_with_cutoff(d, 12).unwrap();
        let mu = uniform(d);
        let c = Configuration::new(d, x.clone()).unwrap();
        let n = c.n();
        let perm: Vec<usize> = (0..n).map(|i| (i + rot) % n).rev().collect();
        let moved: Vec<f64> = x.iter().enumerate().map(|(i, v)| (v + shift[i % d]).rem_euclid(1.0)).collect();
        let e0 = interaction_energy(&k, 0.0, &mu, &c).unwrap().total;
        let e1 = interaction_energy(&k, 0.0, &mu, &c.permuted(&perm)).unwrap().total;
        let e2 = interaction_energy(&k, 0.0, &mu, &Configuration::new(d, moved).unwrap()).unwrap().total;
        prop_assert!((e0 - e1).abs() < 1e-10 * (1.0 + e0.abs()));
        prop_assert!((e0 - e2).abs() < 1e-9 * (1.0 + e0.abs()));
    }
}
