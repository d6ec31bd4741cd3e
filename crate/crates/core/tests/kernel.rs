use std::f64::consts::PI;

use loggas::kernel::{torus_1d_closed_form, torus_1d_closed_form_derivative, verify_superharmonicity};
use loggas::{Domain, Error, Kernel};
use proptest::prelude::*;

// Independent series oracles, summed directly over k.

fn series_1d(x: f64, cutoff: i64, eps: f64) -> f64 {
    (1..=cutoff)
        .map(|k| {
            let n = 2.0 * PI * k as f64;
            2.0 * (-n * eps).exp() * (n * x).cos() / n
        })
        .sum()
}

fn series_2d(x: [f64; 2], cutoff: i64, eps: f64) -> f64 {
    let mut s = 0.0;
    for a in -cutoff..=cutoff {
        for b in -cutoff..=cutoff {
            if a == 0 && b == 0 {
                continue;
            }
            let n2 = 4.0 * PI * PI * (a * a + b * b) as f64;
            s += (-n2 * eps).exp() / n2 * (2.0 * PI * (a as f64 * x[0] + b as f64 * x[1])).cos();
        }
    }
    s
}

#[test]
fn half_period_value_in_1d() {
    let k = Kernel::torus_log(1).unwrap();
    let v = k.eval(&[0.5], &[0.0]).unwrap();
    assert!((v - series_1d(0.5, 64, 0.0)).abs() < 1e-13);
    // alternating tail at x = 1/2
    let tail = 1.0 / (PI * 65.0);
    assert!((v + 2f64.ln() / PI).abs() <= tail);
    assert!((torus_1d_closed_form(0.5) + 0.22064).abs() < 1e-5);
}

#[test]
fn truncation_error_shrinks_with_cutoff() {
    // below K = 16 the worst point still moves around the grid
    let pts: Vec<f64> = (1..64).map(|j| j as f64 / 64.0).collect();
    let mut last = f64::INFINITY;
    for cutoff in [16, 32, 64, 128, 256, 512] {
        let k = Kernel::torus_log_with_cutoff(1, cutoff).unwrap();
        let mut worst = 0.0f64;
        for &x in &pts {
            let err = (k.eval(&[x], &[0.0]).unwrap() - torus_1d_closed_form(x)).abs();
            assert!(err <= k.pointwise_tail_bound(0.0, &[x]), "K={cutoff} x={x}");
            worst = worst.max(err);
        }
        assert!(worst < last, "K={cutoff}: {worst} !< {last}");
        last = worst;
    }
}

#[test]
fn grid_mean_vanishes_in_2d() {
    let k = Kernel::torus_log_with_cutoff(2, 16).unwrap();
    let m = 40;
    let mut s = 0.0;
    for i in 0..m {
        for j in 0..m {
            s += k.eval(&[i as f64 / m as f64, j as f64 / m as f64], &[0.0, 0.0]).unwrap();
        }
    }
    assert!((s / (m * m) as f64).abs() < 1e-13);
}

#[test]
fn two_dimensional_series_matches_direct_sum() {
    let k = Kernel::torus_log_with_cutoff(2, 32).unwrap();
    for (x, eps) in [([0.5, 0.5], 0.0), ([0.1, 0.7], 0.0), ([0.3, 0.2], 1e-3)] {
        let v = k.eval_eps(eps, &x, &[0.0, 0.0]).unwrap();
        assert!((v - series_2d(x, 32, eps)).abs() < 1e-12, "{x:?}");
    }
}

#[test]
fn free_log_examples() {
    let k = Kernel::free_log(Domain::free_space(2, 3.0).unwrap()).unwrap();
    assert_eq!(k.eval(&[0.6, 0.8], &[0.0, 0.0]).unwrap(), 0.0);
    assert_eq!(k.eval_gradient(0.0, &[1.0, 0.0], &[0.0, 0.0]).unwrap(), vec![-1.0, 0.0]);
    assert!(matches!(k.eval(&[0.2, 0.2], &[0.2, 0.2]), Err(Error::Domain(_))));
    assert!(matches!(k.eval_gradient(0.0, &[0.2, 0.2], &[0.2, 0.2]), Err(Error::Domain(_))));
    assert!(k.diagonal(0.01).unwrap().is_finite());
}

#[test]
fn errors_on_bad_arguments() {
    assert!(matches!(Kernel::torus_log_with_cutoff(1, 0), Err(Error::Config(_))));
    let k = Kernel::torus_log(2).unwrap();
    assert!(matches!(k.eval_regularized(0.0, &[0.0; 2], &[0.1; 2]), Err(Error::Domain(_))));
    assert!(matches!(k.eval_regularized(-1.0, &[0.0; 2], &[0.1; 2]), Err(Error::Domain(_))));
    assert!(verify_superharmonicity(&k, &[0.1], 4).is_err());
}

#[test]
fn derivative_at_quarter_period() {
    assert!((torus_1d_closed_form_derivative(0.25) + 1.0).abs() < 1e-12);
    // Abel means of the differentiated series converge to -cot(πx)
    let k = Kernel::torus_log_with_cutoff(1, 4096).unwrap();
    let g = k.eval_gradient(5e-4, &[0.25], &[0.0]).unwrap()[0];
    assert!((g + 1.0).abs() < 1e-3, "{g}");
}

#[test]
fn large_regularization_flattens_the_kernel() {
    let k = Kernel::torus_log(2).unwrap();
    let v = k.eval_regularized(10.0, &[0.1, 0.2], &[0.4, 0.9]).unwrap();
    assert!(v.abs() < 1e-100);
    assert!(k.diagonal(10.0).unwrap() < 1e-100);
}

#[test]
fn diagonal_is_translation_invariant() {
    let k = Kernel::torus_log(2).unwrap();
    let a = k.eval_regularized(2f64.powi(-8), &[0.0, 0.0], &[0.0, 0.0]).unwrap();
    let b = k.eval_regularized(2f64.powi(-8), &[0.3, 0.7], &[0.3, 0.7]).unwrap();
    assert_eq!(a, b);
    assert!((a - series_2d([0.0, 0.0], 64, 2f64.powi(-8))).abs() < 1e-12);
}

#[test]
fn free_log_superharmonicity_is_nonnegative() {
    let k = Kernel::free_log(Domain::free_space(2, 2.0).unwrap()).unwrap();
    let eps: Vec<f64> = (4..=8).map(|j| 2f64.powi(-j)).collect();
    let rep = verify_superharmonicity(&k, &eps, 16).unwrap();
    assert!(rep.superharm_minima.iter().all(|&m| m >= -1e-6), "{:?}", rep.superharm_minima);
}

#[test]
fn three_dimensional_superharmonicity_defect_is_bounded() {
    let k = Kernel::torus_log_with_cutoff(3, 8).unwrap();
    let eps: Vec<f64> = (4..=7).map(|j| 2f64.powi(-j)).collect();
    let rep = verify_superharmonicity(&k, &eps, 8).unwrap();
    assert!(rep.superharm_minima.iter().all(|m| m.is_finite()));
    if let Some(fit) = &rep.fitted_exponents.alpha {
        for (&e, &m) in eps.iter().zip(&rep.superharm_minima) {
            if m < 0.0 {
                assert!(-m / e.powf(fit.exponent) < 10.0 * fit.constant);
            }
        }
    }
}

fn point(d: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(0.0f64..1.0, d)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn kernel_and_gradient_symmetries(d in 1usize..=2, x in point(2), y in point(2), e in 0.0f64..0.05) {
        let k = Kernel::torus_log_with_cutoff(d, 16).unwrap();
        let (x, y) = (&x[..d], &y[..d]);
        prop_assume!(x != y);
        let a = k.eval_eps(e, x, y).unwrap();
        prop_assert_eq!(a, k.eval_eps(e, y, x).unwrap());
        let gxy = k.eval_gradient(e, x, y).unwrap();
        let gyx = k.eval_gradient(e, y, x).unwrap();
        for c in 0..d {
            prop_assert!((gxy[c] + gyx[c]).abs() <= 1e-12 * (1.0 + gxy[c].abs()));
        }
    }

    #[test]
    fn semigroup_multiplier_identity(d in 1usize..=3, k in proptest::collection::vec(-6i64..=6, 3),
                                     e in 0.0f64..0.1, f in 0.0f64..0.1) {
        let ker = Kernel::torus_log_with_cutoff(d, 8).unwrap();
        let k = &k[..d];
        let lhs = ker.multiplier(k, e) * ker.multiplier(k, f);
        let rhs = ker.multiplier(k, e + f);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs);
    }

    #[test]
    fn h_stability_of_zero_sum_measures(m in 2usize..=8, seed in any::<u64>(), e in 0.0f64..0.02) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let ker = Kernel::torus_log_with_cutoff(2, 12).unwrap();
        let pts: Vec<[f64; 2]> = (0..m).map(|_| [rng.random(), rng.random()]).collect();
        let mut w: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mean = w.iter().sum::<f64>() / m as f64;
        w.iter_mut().for_each(|v| *v -= mean);
        // quadrature of the double integral, diagonal included
        let mut quad = 0.0;
        for i in 0..m {
            for j in 0..m {
                quad += w[i] * w[j] * ker.eval_eps(e, &pts[i], &pts[j]).unwrap();
            }
        }
        // spectral side
        let mut spec = 0.0;
        for a in -12i64..=12 {
            for b in -12i64..=12 {
                let kk = [a, b];
                let (mut re, mut im) = (0.0, 0.0);
                for i in 0..m {
                    let th = 2.0 * PI * (a as f64 * pts[i][0] + b as f64 * pts[i][1]);
                    re += w[i] * th.cos();
                    im += w[i] * th.sin();
                }
                spec += ker.fourier_weight(&kk, e) * (re * re + im * im);
            }
        }
        prop_assert!(spec >= 0.0);
        prop_assert!((quad - spec).abs() <= 1e-10 * (1.0 + spec.abs()), "{} vs {}", quad, spec);
    }

    #[test]
    fn diagonal_decreases_in_eps(d in 1usize..=2, e in 1e-4f64..0.2, step in 1e-4f64..0.2) {
        let ker = Kernel::torus_log_with_cutoff(d, 32).unwrap();
        prop_assert!(ker.diagonal(e + step).unwrap() <= ker.diagonal(e).unwrap());
    }
}
